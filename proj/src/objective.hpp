#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "matrix.hpp"
#include "model.hpp"
#include "partition.hpp"

namespace tailgame {

struct PayoffWeights {
    std::vector<double> w;   // per-label, > 0
    double z = 0.0;          // sum of w
    std::vector<double> wz;  // w[l] / z
    WeightScheme scheme = WeightScheme::InverseFrequency;
};

PayoffWeights make_payoff_weights(WeightScheme scheme, const std::vector<double>& freq);
double min_tail_weight(const PayoffWeights& pw, const TailSet& tail);

// curiosity rarity factors 1/(1+freq(l))
std::vector<double> rarity_weights(const std::vector<double>& freq);

struct CuriosityConfig {
    double alpha = 0.4;
    double beta_max = 0.3;
    double warmup_fraction = 0.1;
    double ema_decay = 0.99;
};

// beta(t) = beta_max * min(1, t / (warmup_fraction * total))
double beta_at(const CuriosityConfig& cc, long sweep, long total_sweeps);

struct BatchView {
    const Dataset* ds = nullptr;
    std::span<const int> idx;
    int size() const { return static_cast<int>(idx.size()); }
    std::uint8_t label(int row, int l) const { return ds->label(idx[row], l); }
};

// Per-player index maps, aligned with Partition::subsets[i].
struct PlayerLayout {
    std::vector<std::vector<int>> pos_in_active;   // slot -> index of i in active_players[l]
    std::vector<std::vector<int>> overlap_col;     // slot -> column in peer matrix, -1 if exclusive
    std::vector<std::vector<int>> overlap_labels;  // O_i, ascending
};
PlayerLayout build_player_layout(const Partition& p);

// Jensen-Shannon divergence of Bernoulli(a) vs Bernoulli(b), natural log;
// arguments are clamped into [eps, 1-eps] before the logs.
double bernoulli_jsd(double a, double b, double eps);
// d/da of the clamped JSD (0 when the clamp on a is active)
double bernoulli_jsd_grad(double a, double b, double eps);

// EMA of the detached peer-average posterior over each player's overlap set.
// Rows are full-dataset instance ids; minibatch rows initialize on first sight.
class PeerState {
public:
    void init(const Partition& p, const PlayerLayout& layout, int num_instances);
    bool initialized() const { return !ema_.empty(); }

    // decayed candidate for the given rows (first observation = inst itself)
    Matrix propose(int player, std::span<const int> idx, const Matrix& inst,
                   double decay) const;
    void adopt(int player, std::span<const int> idx, const Matrix& candidate);
    // current constant view: EMA where seen, inst otherwise
    Matrix snapshot(int player, std::span<const int> idx, const Matrix& inst) const;

private:
    std::vector<Matrix> ema_;                        // per player: M x |O_i|
    std::vector<std::vector<std::uint8_t>> seen_;    // per player: M
};

// uniform mean of peer posteriors over O_i (batch x |O_i|); empty when N == 1
Matrix instantaneous_peer_mean(const std::vector<Matrix>& posteriors, int player,
                               const Partition& p, const PlayerLayout& layout,
                               std::span<const int> idx);

// one-call form: instantaneous mean -> EMA update -> constant value
Matrix peer_average(const std::vector<Matrix>& posteriors, int player, const Partition& p,
                    const PlayerLayout& layout, PeerState& state,
                    std::span<const int> idx, double decay);

// R: batch mean of (1/Z) sum_l w_l [y log p + (1-y) log(1-p)] on clipped inputs
double global_payoff(const Matrix& clipped, double eps, const BatchView& batch,
                     const PayoffWeights& pw);
// tail-restricted payoff with Z_T = sum of tail weights (bound refinement)
double tail_payoff(const Matrix& clipped, double eps, const BatchView& batch,
                   const PayoffWeights& pw, const TailSet& tail);

struct CuriosityResult {
    std::vector<double> per_instance;
    double mean = 0.0;
};
CuriosityResult curiosity(int player, const Matrix& p_i, const BatchView& batch,
                          const Partition& part, const PlayerLayout& layout,
                          const std::vector<double>& rarity, double beta,
                          const Matrix& peer, double eps);

inline double player_objective(double payoff, double curiosity_mean, double alpha) {
    return payoff + alpha * curiosity_mean;
}

// J_i evaluated from the given posterior cache (peers constant inside C_i).
double eval_player_objective(int player, const std::vector<Matrix>& posteriors,
                             const std::vector<std::vector<double>>& omega,
                             const Partition& part, const PlayerLayout& layout,
                             const BatchView& batch, const PayoffWeights& pw,
                             const std::vector<double>& rarity, double alpha, double beta,
                             const Matrix& peer, double eps, bool include_payoff = true);

// Phi = R + alpha * sum_i mean C_i, peers constant
double eval_potential(const std::vector<Matrix>& posteriors,
                      const std::vector<std::vector<double>>& omega, const Partition& part,
                      const PlayerLayout& layout, const BatchView& batch,
                      const PayoffWeights& pw, const std::vector<double>& rarity,
                      double alpha, double beta, const std::vector<Matrix>& peers,
                      double eps, std::vector<double>* curiosity_means = nullptr,
                      double* payoff_out = nullptr);

struct HeadGrad {
    Matrix dw;
    std::vector<double> db;
    double sq_norm = 0.0;
};

struct BfGrad {
    Matrix dw_bb;
    std::vector<double> db_bb;
    std::vector<std::vector<double>> dlogits;
    double sq_norm = 0.0;
};

// dJ_i/dz per (instance, slot), unscaled by the batch mean
Matrix objective_dlogits(int player, const std::vector<Matrix>& posteriors,
                         const std::vector<std::vector<double>>& omega,
                         const Partition& part, const PlayerLayout& layout,
                         const BatchView& batch, const PayoffWeights& pw,
                         const std::vector<double>& rarity, double alpha, double beta,
                         const Matrix& peer, double eps, const FusedPrediction& fused,
                         bool include_payoff);

HeadGrad grad_player(int player, const Matrix& feats, const std::vector<Matrix>& posteriors,
                     const std::vector<std::vector<double>>& omega, const Partition& part,
                     const PlayerLayout& layout, const BatchView& batch,
                     const PayoffWeights& pw, const std::vector<double>& rarity,
                     double alpha, double beta, const Matrix& peer, double eps,
                     bool include_payoff = true);

// exact gradient of Phi w.r.t. backbone params and fusion logits; identity
// backbone yields empty dw_bb/db_bb
BfGrad grad_backbone_fusion(const ModelState& model, const Matrix& feats, const Matrix& pre,
                            const std::vector<Matrix>& posteriors,
                            const std::vector<std::vector<double>>& omega,
                            const PlayerLayout& layout, const BatchView& batch,
                            const PayoffWeights& pw, const std::vector<double>& rarity,
                            double alpha, double beta, const std::vector<Matrix>& peers,
                            double eps);

// central-difference gradients, used as the oracle against the analytic path
HeadGrad fd_player_grad(int player, const ModelState& model, const Matrix& feats,
                        const std::vector<Matrix>& posteriors,
                        const std::vector<std::vector<double>>& omega,
                        const Partition& part, const PlayerLayout& layout,
                        const BatchView& batch, const PayoffWeights& pw,
                        const std::vector<double>& rarity, double alpha, double beta,
                        const Matrix& peer, double eps, double h,
                        bool include_payoff = true);

BfGrad fd_bf_grad(const ModelState& model, const BatchView& batch, const PayoffWeights& pw,
                  const std::vector<double>& rarity, double alpha, double beta,
                  const std::vector<Matrix>& peers, double eps, double h);

struct BlockCheck {
    std::string name;
    double max_abs_err = 0.0;
    double max_rel_err = 0.0;
    long worst_entry = -1;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<BlockCheck> blocks;
    double h = 1e-5;
    double tol = 1e-5;
    bool pass = true;
};

// analytic vs central-difference gradients for every block; peer averages are
// frozen at their first observation and beta = beta_max
GradCheckReport finite_diff_check(const ModelState& model, const Dataset& ds,
                                  const PayoffWeights& pw, const CuriosityConfig& cc,
                                  double h, double tol);

// Per-logit derivative of J_k restricted to the tail-false-negative set
// S = {y_l = 1, p_hat_l <= tau}, for every active player of the label.
struct TailFloor {
    double pr_s = 0.0;                     // empirical mass of S
    std::vector<double> per_player_deriv;  // aligned with active_players[label]
    double floor = 0.0;                    // alpha * eps * Pr(S) / (1 + freq(label))
};
TailFloor tail_gradient_floor(int label, double tau, const ModelState& model,
                              const Dataset& ds, const PayoffWeights& pw,
                              const std::vector<double>& rarity, double alpha, double beta);

}  // namespace tailgame
