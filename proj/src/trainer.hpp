#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "model.hpp"
#include "objective.hpp"

namespace tailgame {

enum class StepRule { Fixed, Armijo, Adam };

struct TrainConfig {
    long sweeps = 200;
    int batch_size = 0;  // 0 = full batch
    double eta_head = 1.0;
    std::vector<double> eta_head_per_player;  // optional per-player override
    double eta_bf = 1.0;                      // backbone/fusion step size
    StepRule step_rule = StepRule::Armijo;
    double armijo_c = 1e-4;
    double armijo_shrink = 0.5;
    int armijo_max_tries = 40;
    double grad_clip_norm = 5.0;  // <= 0 disables clipping
    CuriosityConfig curiosity;
    double eps = 0.01;
    std::uint64_t seed = 0;
    int inner_iters = 1;
    WeightScheme payoff_scheme = WeightScheme::InverseFrequency;
    // treat the batch payoff as a constant inside the player loop, so head
    // updates are driven by curiosity alone (comparison flag)
    bool stale_payoff = false;
    long snapshot_every = 0;  // keep a model copy every K sweeps
    double tau_eval = 0.5;    // threshold for the validation Rare-F1 column
    double tail_fraction = 0.2;
    BackboneKind backbone = BackboneKind::Identity;
    int hidden_dim = 0;  // mlp1 feature dim
};

struct SweepRecord {
    long sweep = 0;
    double phi = 0.0;
    double payoff = 0.0;
    std::vector<double> curiosity;   // per player E[C_i]
    std::vector<double> grad_norms;  // per block, backbone/fusion last
    std::vector<double> steps;       // accepted step sizes, same order
    double val_rare_f1 = 0.0;
};

struct Telemetry {
    int num_players = 0;
    bool has_val = false;
    std::vector<SweepRecord> rows;

    // csv: sweep,phi,R,curiosity_0..,grad_norm_block_0..N,step_0..N[,val_rare_f1]
    void write_csv(std::ostream& out) const;
};

struct TrainResult {
    ModelState model;
    Telemetry telemetry;
    std::vector<std::pair<long, ModelState>> snapshots;
    bool aborted = false;
    std::string abort_reason;
    long peer_refreshes_skipped = 0;
};

// Cyclic best response over player heads plus one backbone/fusion ascent step
// per sweep. Full-batch + armijo guarantees a non-decreasing potential trace.
TrainResult run_training(const Dataset& train, std::shared_ptr<const Partition> partition,
                         const TrainConfig& cfg, const Dataset* val = nullptr,
                         const ModelState* resume_from = nullptr);

// Largest eta in {eta0 * shrink^k, k < max_tries} satisfying
// phi_at(eta) >= phi0 + c * eta * dir_sq; 0 when none qualifies.
double armijo_step(double phi0, double dir_sq, double eta0, double c, double shrink,
                   int max_tries, const std::function<double(double)>& phi_at);

// true iff the latest sweep's largest block gradient norm is below g_tol
bool detect_stationarity(const Telemetry& t, double g_tol);

FusedPrediction predict(const ModelState& model, const Dataset& ds);

}  // namespace tailgame
