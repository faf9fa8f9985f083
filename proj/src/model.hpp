#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "matrix.hpp"
#include "partition.hpp"

namespace tailgame {

enum class BackboneKind { Identity, Mlp1 };
enum class WeightScheme { Uniform, InverseFrequency };

struct BackboneParams {
    BackboneKind kind = BackboneKind::Identity;
    int in_dim = 0;
    int out_dim = 0;   // identity: out_dim == in_dim
    Matrix w;          // mlp1: in_dim x out_dim
    std::vector<double> b;

    int num_params() const {
        return kind == BackboneKind::Identity ? 0 : in_dim * out_dim + out_dim;
    }
};

struct PlayerHead {
    Matrix w;               // |L_i| x out_dim
    std::vector<double> b;  // |L_i|
};

// Per label one logit per active player; omega = softmax over active players.
struct FusionWeights {
    std::vector<std::vector<double>> logits;  // aligned with Partition::active_players
};

struct FusedPrediction {
    Matrix raw;      // convex combination before clipping
    Matrix clipped;  // entries in [eps, 1-eps]
    double eps = 0.01;
};

struct ModelState {
    BackboneParams backbone;
    std::vector<PlayerHead> heads;
    FusionWeights fusion;
    std::shared_ptr<const Partition> partition;
    double eps = 0.01;
    std::vector<double> train_freq;  // training prevalences, frozen at train time
    WeightScheme payoff_scheme = WeightScheme::InverseFrequency;
    std::optional<std::vector<double>> thresholds;  // tuned per-label tau
    long trained_sweeps = 0;

    int num_players() const { return static_cast<int>(heads.size()); }
};

struct ThresholdTuneResult {
    std::vector<double> thresholds;
    std::vector<int> fallback_labels;  // labels with no validation positives
};

ModelState init_model(std::shared_ptr<const Partition> partition, int num_features,
                      BackboneKind backbone, int hidden_dim, double eps,
                      std::uint64_t seed);

// identity: densified features; mlp1: max(0, XW + b).
// pre_activations, when given, receives XW + b (mlp1 only; used by gradients).
Matrix forward_backbone(const BackboneParams& bb, const Dataset& ds,
                        std::span<const int> idx, Matrix* pre_activations = nullptr);

Matrix head_logits(const PlayerHead& head, const Matrix& feats);
Matrix player_posteriors(const PlayerHead& head, const Matrix& feats);

// softmax over each label's active players
std::vector<std::vector<double>> fusion_omegas(const FusionWeights& fw, const Partition& p);

FusedPrediction fuse(const std::vector<Matrix>& posteriors,
                     const std::vector<std::vector<double>>& omega, const Partition& p,
                     double eps);

// strict inequality: yhat = 1 iff p > tau
Matrix threshold(const FusedPrediction& fp, const std::vector<double>& tau);

// per label, tau maximizing F1 over midpoints of consecutive distinct sorted
// scores plus 0.5; ties take the smallest tau. F1 counts use yhat = 1{s >= tau}.
ThresholdTuneResult tune_thresholds(const Matrix& val_scores, const Dataset& val);

double sigmoid(double z);

void write_checkpoint(const ModelState& m, std::ostream& out);
void write_checkpoint_file(const ModelState& m, const std::string& path);
ModelState parse_checkpoint(std::istream& in);
ModelState read_checkpoint_file(const std::string& path);

}  // namespace tailgame
