#include "objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tailgame {

PayoffWeights make_payoff_weights(WeightScheme scheme, const std::vector<double>& freq) {
    PayoffWeights pw;
    pw.scheme = scheme;
    pw.w.resize(freq.size());
    if (scheme == WeightScheme::Uniform) {
        std::fill(pw.w.begin(), pw.w.end(), 1.0);
    } else {
        for (std::size_t l = 0; l < freq.size(); ++l) pw.w[l] = 1.0 / (1.0 + freq[l]);
    }
    pw.z = std::accumulate(pw.w.begin(), pw.w.end(), 0.0);
    pw.wz.resize(pw.w.size());
    for (std::size_t l = 0; l < pw.w.size(); ++l) pw.wz[l] = pw.w[l] / pw.z;
    return pw;
}

double min_tail_weight(const PayoffWeights& pw, const TailSet& tail) {
    if (tail.tail_labels.empty()) throw DataError("empty tail set");
    double mn = pw.w[tail.tail_labels[0]];
    for (int l : tail.tail_labels) mn = std::min(mn, pw.w[l]);
    return mn;
}

std::vector<double> rarity_weights(const std::vector<double>& freq) {
    std::vector<double> r(freq.size());
    for (std::size_t l = 0; l < freq.size(); ++l) r[l] = 1.0 / (1.0 + freq[l]);
    return r;
}

double beta_at(const CuriosityConfig& cc, long sweep, long total_sweeps) {
    double denom = cc.warmup_fraction * static_cast<double>(total_sweeps);
    if (denom <= 0.0) return cc.beta_max;
    double frac = static_cast<double>(sweep) / denom;
    return cc.beta_max * std::min(1.0, frac);
}

PlayerLayout build_player_layout(const Partition& p) {
    PlayerLayout layout;
    const int n = p.num_players();
    layout.pos_in_active.resize(n);
    layout.overlap_col.resize(n);
    layout.overlap_labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const auto& subset = p.subsets[i];
        layout.pos_in_active[i].resize(subset.size());
        layout.overlap_col[i].assign(subset.size(), -1);
        for (std::size_t a = 0; a < subset.size(); ++a) {
            const int l = subset[a];
            const auto& active = p.active_players[l];
            layout.pos_in_active[i][a] = static_cast<int>(
                std::lower_bound(active.begin(), active.end(), i) - active.begin());
            if (active.size() > 1) {
                layout.overlap_col[i][a] = static_cast<int>(layout.overlap_labels[i].size());
                layout.overlap_labels[i].push_back(l);
            }
        }
    }
    return layout;
}

namespace {

inline double clamp_unit(double v, double eps) { return std::clamp(v, eps, 1.0 - eps); }

inline double bernoulli_kl(double p, double q) {
    return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

}  // namespace

double bernoulli_jsd(double a, double b, double eps) {
    const double qa = clamp_unit(a, eps);
    const double qb = clamp_unit(b, eps);
    const double m = 0.5 * (qa + qb);
    return 0.5 * (bernoulli_kl(qa, m) + bernoulli_kl(qb, m));
}

double bernoulli_jsd_grad(double a, double b, double eps) {
    if (!(a > eps && a < 1.0 - eps)) return 0.0;  // clamp active: constant in a
    const double qb = clamp_unit(b, eps);
    const double m = 0.5 * (a + qb);
    return 0.5 * std::log(a * (1.0 - m) / ((1.0 - a) * m));
}

void PeerState::init(const Partition& p, const PlayerLayout& layout, int num_instances) {
    const int n = p.num_players();
    ema_.assign(n, Matrix());
    seen_.assign(n, {});
    for (int i = 0; i < n; ++i) {
        ema_[i] = Matrix(num_instances, static_cast<int>(layout.overlap_labels[i].size()));
        seen_[i].assign(num_instances, 0);
    }
}

Matrix PeerState::propose(int player, std::span<const int> idx, const Matrix& inst,
                          double decay) const {
    Matrix out = inst;
    const Matrix& e = ema_[player];
    for (int r = 0; r < out.rows(); ++r) {
        const int m = idx[r];
        if (!seen_[player][m]) continue;  // first observation: keep inst
        for (int c = 0; c < out.cols(); ++c)
            out(r, c) = decay * e(m, c) + (1.0 - decay) * inst(r, c);
    }
    return out;
}

void PeerState::adopt(int player, std::span<const int> idx, const Matrix& candidate) {
    Matrix& e = ema_[player];
    for (int r = 0; r < candidate.rows(); ++r) {
        const int m = idx[r];
        for (int c = 0; c < candidate.cols(); ++c) e(m, c) = candidate(r, c);
        seen_[player][m] = 1;
    }
}

Matrix PeerState::snapshot(int player, std::span<const int> idx, const Matrix& inst) const {
    Matrix out = inst;
    const Matrix& e = ema_[player];
    for (int r = 0; r < out.rows(); ++r) {
        const int m = idx[r];
        if (!seen_[player][m]) continue;
        for (int c = 0; c < out.cols(); ++c) out(r, c) = e(m, c);
    }
    return out;
}

Matrix instantaneous_peer_mean(const std::vector<Matrix>& posteriors, int player,
                               const Partition& p, const PlayerLayout& layout,
                               std::span<const int> idx) {
    const auto& overlap = layout.overlap_labels[player];
    const int batch = static_cast<int>(idx.size());
    Matrix out(batch, static_cast<int>(overlap.size()));
    for (std::size_t c = 0; c < overlap.size(); ++c) {
        const int l = overlap[c];
        const auto& active = p.active_players[l];
        int peers = 0;
        for (int j : active) {
            if (j == player) continue;
            const int slot = p.slot_of(j, l);
            const Matrix& pj = posteriors[j];
            for (int r = 0; r < batch; ++r) out(r, static_cast<int>(c)) += pj(r, slot);
            ++peers;
        }
        const double inv = 1.0 / peers;
        for (int r = 0; r < batch; ++r) out(r, static_cast<int>(c)) *= inv;
    }
    return out;
}

Matrix peer_average(const std::vector<Matrix>& posteriors, int player, const Partition& p,
                    const PlayerLayout& layout, PeerState& state,
                    std::span<const int> idx, double decay) {
    if (p.num_players() == 1) return Matrix(static_cast<int>(idx.size()), 0);
    Matrix inst = instantaneous_peer_mean(posteriors, player, p, layout, idx);
    Matrix cand = state.propose(player, idx, inst, decay);
    state.adopt(player, idx, cand);
    return cand;
}

double global_payoff(const Matrix& clipped, double eps, const BatchView& batch,
                     const PayoffWeights& pw) {
    const int rows = clipped.rows();
    const int cols = clipped.cols();
    if (rows != batch.size() || cols != batch.ds->num_labels() ||
        cols != static_cast<int>(pw.w.size()))
        throw DataError("global_payoff: shape mismatch");
    const double hi = 1.0 - eps;
    double total = 0.0;
    for (int m = 0; m < rows; ++m) {
        double inner = 0.0;
        const double* pr = clipped.row(m);
        for (int l = 0; l < cols; ++l) {
            const double pc = pr[l];
            if (pc < eps || pc > hi)
                throw DataError("global_payoff: input not clipped to [eps, 1-eps]");
            inner += pw.wz[l] * (batch.label(m, l) ? std::log(pc) : std::log(1.0 - pc));
        }
        total += inner;
    }
    return total / rows;
}

double tail_payoff(const Matrix& clipped, double eps, const BatchView& batch,
                   const PayoffWeights& pw, const TailSet& tail) {
    const int rows = clipped.rows();
    if (rows != batch.size()) throw DataError("tail_payoff: shape mismatch");
    double zt = 0.0;
    for (int l : tail.tail_labels) zt += pw.w[l];
    if (zt <= 0.0) throw DataError("tail_payoff: empty tail");
    const double hi = 1.0 - eps;
    double total = 0.0;
    for (int m = 0; m < rows; ++m) {
        double inner = 0.0;
        const double* pr = clipped.row(m);
        for (int l : tail.tail_labels) {
            const double pc = pr[l];
            if (pc < eps || pc > hi)
                throw DataError("tail_payoff: input not clipped to [eps, 1-eps]");
            inner += pw.w[l] * (batch.label(m, l) ? std::log(pc) : std::log(1.0 - pc));
        }
        total += inner / zt;
    }
    return total / rows;
}

CuriosityResult curiosity(int player, const Matrix& p_i, const BatchView& batch,
                          const Partition& part, const PlayerLayout& layout,
                          const std::vector<double>& rarity, double beta,
                          const Matrix& peer, double eps) {
    const int rows = p_i.rows();
    if (rows != batch.size()) throw DataError("curiosity: shape mismatch");
    const auto& subset = part.subsets[player];
    if (p_i.cols() != static_cast<int>(subset.size()))
        throw DataError("curiosity: posterior columns do not match subset");
    const auto& ocol = layout.overlap_col[player];
    const int overlap_count = static_cast<int>(layout.overlap_labels[player].size());
    const bool with_d = beta != 0.0 && overlap_count > 0;
    const double inv_overlap = overlap_count > 0 ? 1.0 / overlap_count : 0.0;

    CuriosityResult res;
    res.per_instance.resize(rows);
    double total = 0.0;
    for (int m = 0; m < rows; ++m) {
        double c = 0.0;
        for (std::size_t a = 0; a < subset.size(); ++a) {
            const int l = subset[a];
            // posteriors come from the guarded sigmoid, so the logs are finite
            // without clamping and the z-gradient stays exactly (y - p)
            const double p = p_i(m, static_cast<int>(a));
            c += rarity[l] *
                 (batch.label(m, l) ? std::log(p) : std::log(1.0 - p));
        }
        if (with_d) {
            double d = 0.0;
            for (std::size_t a = 0; a < subset.size(); ++a) {
                const int oc = ocol[a];
                if (oc < 0) continue;
                d += bernoulli_jsd(p_i(m, static_cast<int>(a)), peer(m, oc), eps);
            }
            c += beta * (d * inv_overlap);
        }
        res.per_instance[m] = c;
        total += c;
    }
    res.mean = total / rows;
    return res;
}

double eval_player_objective(int player, const std::vector<Matrix>& posteriors,
                             const std::vector<std::vector<double>>& omega,
                             const Partition& part, const PlayerLayout& layout,
                             const BatchView& batch, const PayoffWeights& pw,
                             const std::vector<double>& rarity, double alpha, double beta,
                             const Matrix& peer, double eps, bool include_payoff) {
    double value = 0.0;
    if (include_payoff) {
        FusedPrediction fp = fuse(posteriors, omega, part, eps);
        value = global_payoff(fp.clipped, eps, batch, pw);
    }
    if (alpha != 0.0) {
        CuriosityResult c = curiosity(player, posteriors[player], batch, part, layout,
                                      rarity, beta, peer, eps);
        value += alpha * c.mean;
    }
    return value;
}

double eval_potential(const std::vector<Matrix>& posteriors,
                      const std::vector<std::vector<double>>& omega, const Partition& part,
                      const PlayerLayout& layout, const BatchView& batch,
                      const PayoffWeights& pw, const std::vector<double>& rarity,
                      double alpha, double beta, const std::vector<Matrix>& peers,
                      double eps, std::vector<double>* curiosity_means,
                      double* payoff_out) {
    FusedPrediction fp = fuse(posteriors, omega, part, eps);
    const double r = global_payoff(fp.clipped, eps, batch, pw);
    if (payoff_out) *payoff_out = r;
    double phi = r;
    if (curiosity_means) curiosity_means->assign(part.num_players(), 0.0);
    if (alpha != 0.0 || curiosity_means) {
        for (int i = 0; i < part.num_players(); ++i) {
            CuriosityResult c = curiosity(i, posteriors[i], batch, part, layout, rarity,
                                          beta, peers[i], eps);
            if (curiosity_means) (*curiosity_means)[i] = c.mean;
            phi += alpha * c.mean;
        }
    }
    return phi;
}

Matrix objective_dlogits(int player, const std::vector<Matrix>& posteriors,
                         const std::vector<std::vector<double>>& omega,
                         const Partition& part, const PlayerLayout& layout,
                         const BatchView& batch, const PayoffWeights& pw,
                         const std::vector<double>& rarity, double alpha, double beta,
                         const Matrix& peer, double eps, const FusedPrediction& fused,
                         bool include_payoff) {
    const auto& subset = part.subsets[player];
    const auto& pos_in_active = layout.pos_in_active[player];
    const auto& ocol = layout.overlap_col[player];
    const int overlap_count = static_cast<int>(layout.overlap_labels[player].size());
    const double inv_overlap = overlap_count > 0 ? 1.0 / overlap_count : 0.0;
    const Matrix& p_i = posteriors[player];
    const int rows = p_i.rows();
    const double hi = 1.0 - eps;
    const bool with_curiosity = alpha != 0.0;
    const bool with_d = with_curiosity && beta != 0.0 && overlap_count > 0;

    Matrix dz(rows, static_cast<int>(subset.size()));
    for (int m = 0; m < rows; ++m) {
        for (std::size_t a = 0; a < subset.size(); ++a) {
            const int l = subset[a];
            const int y = batch.label(m, l);
            const double p = p_i(m, static_cast<int>(a));
            double coef = 0.0;

            if (include_payoff) {
                const double raw = fused.raw(m, l);
                // clipping is a hard projection: zero gradient where active
                if (raw > eps && raw < hi) {
                    const double g = y ? pw.wz[l] / raw : -pw.wz[l] / (1.0 - raw);
                    coef += g * omega[l][pos_in_active[a]] * (p * (1.0 - p));
                }
            }
            if (with_curiosity) {
                coef += alpha * rarity[l] * (y - p);
                if (with_d) {
                    const int oc = ocol[a];
                    if (oc >= 0) {
                        const double dj = bernoulli_jsd_grad(p, peer(m, oc), eps);
                        coef += alpha * (beta * inv_overlap) * (p * (1.0 - p)) * dj;
                    }
                }
            }
            dz(m, static_cast<int>(a)) = coef;
        }
    }
    return dz;
}

HeadGrad grad_player(int player, const Matrix& feats, const std::vector<Matrix>& posteriors,
                     const std::vector<std::vector<double>>& omega, const Partition& part,
                     const PlayerLayout& layout, const BatchView& batch,
                     const PayoffWeights& pw, const std::vector<double>& rarity,
                     double alpha, double beta, const Matrix& peer, double eps,
                     bool include_payoff) {
    FusedPrediction fused;
    if (include_payoff) fused = fuse(posteriors, omega, part, eps);
    Matrix dz = objective_dlogits(player, posteriors, omega, part, layout, batch, pw,
                                  rarity, alpha, beta, peer, eps, fused, include_payoff);

    const int rows = dz.rows();
    const int slots = dz.cols();
    const int dim = feats.cols();
    HeadGrad g;
    g.dw = Matrix(slots, dim);
    g.db.assign(slots, 0.0);
    for (int m = 0; m < rows; ++m) {
        const double* f = feats.row(m);
        for (int a = 0; a < slots; ++a) {
            const double c = dz(m, a);
            if (c == 0.0) continue;
            double* wrow = g.dw.row(a);
            for (int j = 0; j < dim; ++j) wrow[j] += c * f[j];
            g.db[a] += c;
        }
    }
    const double inv_batch = 1.0 / rows;
    for (double& v : g.dw.raw()) v *= inv_batch;
    for (double& v : g.db) v *= inv_batch;

    double sq = 0.0;
    for (double v : g.dw.raw()) sq += v * v;
    for (double v : g.db) sq += v * v;
    g.sq_norm = sq;
    return g;
}

BfGrad grad_backbone_fusion(const ModelState& model, const Matrix& feats, const Matrix& pre,
                            const std::vector<Matrix>& posteriors,
                            const std::vector<std::vector<double>>& omega,
                            const PlayerLayout& layout, const BatchView& batch,
                            const PayoffWeights& pw, const std::vector<double>& rarity,
                            double alpha, double beta, const std::vector<Matrix>& peers,
                            double eps) {
    const Partition& part = *model.partition;
    const int rows = feats.rows();
    const double inv_batch = 1.0 / rows;
    const double hi = 1.0 - eps;
    FusedPrediction fused = fuse(posteriors, omega, part, eps);

    BfGrad g;

    // fusion logits: dR/dphi_{k,l} via the softmax Jacobian, curiosity has no omega term
    g.dlogits.resize(part.num_labels);
    for (int l = 0; l < part.num_labels; ++l)
        g.dlogits[l].assign(part.active_players[l].size(), 0.0);
    for (int m = 0; m < rows; ++m) {
        for (int l = 0; l < part.num_labels; ++l) {
            const auto& active = part.active_players[l];
            if (active.size() < 2) continue;  // softmax over one player is constant
            const double raw = fused.raw(m, l);
            if (!(raw > eps && raw < hi)) continue;
            const double gl = batch.label(m, l) ? pw.wz[l] / raw : -pw.wz[l] / (1.0 - raw);
            for (std::size_t k = 0; k < active.size(); ++k) {
                const int slot = part.slot_of(active[k], l);
                const double pk = posteriors[active[k]](m, slot);
                g.dlogits[l][k] += gl * omega[l][k] * (pk - raw);
            }
        }
    }
    for (auto& v : g.dlogits)
        for (double& x : v) x *= inv_batch;

    // backbone chain: dPhi/dH = sum_i dPhi/dz_i * W_i, then through relu and X
    if (model.backbone.kind == BackboneKind::Mlp1) {
        const int dim = feats.cols();
        Matrix dh(rows, dim);
        for (int i = 0; i < part.num_players(); ++i) {
            Matrix dz = objective_dlogits(i, posteriors, omega, part, layout, batch, pw,
                                          rarity, alpha, beta, peers[i], eps, fused,
                                          /*include_payoff=*/true);
            const Matrix& w = model.heads[i].w;
            for (int m = 0; m < rows; ++m) {
                double* dst = dh.row(m);
                for (int a = 0; a < dz.cols(); ++a) {
                    const double c = dz(m, a);
                    if (c == 0.0) continue;
                    const double* wrow = w.row(a);
                    for (int j = 0; j < dim; ++j) dst[j] += c * wrow[j];
                }
            }
        }
        // relu mask
        for (int m = 0; m < rows; ++m)
            for (int j = 0; j < dim; ++j)
                if (pre(m, j) <= 0.0) dh(m, j) = 0.0;

        g.dw_bb = Matrix(model.backbone.in_dim, dim);
        g.db_bb.assign(dim, 0.0);
        for (int m = 0; m < rows; ++m) {
            const double* dhrow = dh.row(m);
            for (const SparseEntry& e : batch.ds->features(batch.idx[m]).entries) {
                double* dst = g.dw_bb.row(e.index);
                for (int j = 0; j < dim; ++j) dst[j] += e.value * dhrow[j];
            }
            for (int j = 0; j < dim; ++j) g.db_bb[j] += dhrow[j];
        }
        for (double& v : g.dw_bb.raw()) v *= inv_batch;
        for (double& v : g.db_bb) v *= inv_batch;
    }

    double sq = 0.0;
    for (const auto& v : g.dlogits)
        for (double x : v) sq += x * x;
    for (double v : g.dw_bb.raw()) sq += v * v;
    for (double v : g.db_bb) sq += v * v;
    g.sq_norm = sq;
    return g;
}

HeadGrad fd_player_grad(int player, const ModelState& model, const Matrix& feats,
                        const std::vector<Matrix>& posteriors,
                        const std::vector<std::vector<double>>& omega,
                        const Partition& part, const PlayerLayout& layout,
                        const BatchView& batch, const PayoffWeights& pw,
                        const std::vector<double>& rarity, double alpha, double beta,
                        const Matrix& peer, double eps, double h, bool include_payoff) {
    PlayerHead head = model.heads[player];
    std::vector<Matrix> work = posteriors;

    auto value_at = [&]() {
        work[player] = player_posteriors(head, feats);
        return eval_player_objective(player, work, omega, part, layout, batch, pw, rarity,
                                     alpha, beta, peer, eps, include_payoff);
    };

    HeadGrad g;
    g.dw = Matrix(head.w.rows(), head.w.cols());
    g.db.assign(head.b.size(), 0.0);
    for (int a = 0; a < head.w.rows(); ++a) {
        for (int j = 0; j < head.w.cols(); ++j) {
            const double orig = head.w(a, j);
            head.w(a, j) = orig + h;
            const double fp = value_at();
            head.w(a, j) = orig - h;
            const double fm = value_at();
            head.w(a, j) = orig;
            g.dw(a, j) = (fp - fm) / (2.0 * h);
        }
        const double orig = head.b[a];
        head.b[a] = orig + h;
        const double fp = value_at();
        head.b[a] = orig - h;
        const double fm = value_at();
        head.b[a] = orig;
        g.db[a] = (fp - fm) / (2.0 * h);
    }
    double sq = 0.0;
    for (double v : g.dw.raw()) sq += v * v;
    for (double v : g.db) sq += v * v;
    g.sq_norm = sq;
    return g;
}

BfGrad fd_bf_grad(const ModelState& model, const BatchView& batch, const PayoffWeights& pw,
                  const std::vector<double>& rarity, double alpha, double beta,
                  const std::vector<Matrix>& peers, double eps, double h) {
    ModelState work = model;
    const Partition& part = *model.partition;
    PlayerLayout layout = build_player_layout(part);

    auto value_at = [&]() {
        Matrix feats = forward_backbone(work.backbone, *batch.ds, batch.idx);
        std::vector<Matrix> posteriors(part.num_players());
        for (int i = 0; i < part.num_players(); ++i)
            posteriors[i] = player_posteriors(work.heads[i], feats);
        auto omega = fusion_omegas(work.fusion, part);
        return eval_potential(posteriors, omega, part, layout, batch, pw, rarity, alpha,
                              beta, peers, eps);
    };

    BfGrad g;
    if (model.backbone.kind == BackboneKind::Mlp1) {
        g.dw_bb = Matrix(model.backbone.in_dim, model.backbone.out_dim);
        g.db_bb.assign(model.backbone.out_dim, 0.0);
        for (int i = 0; i < model.backbone.in_dim; ++i)
            for (int j = 0; j < model.backbone.out_dim; ++j) {
                const double orig = work.backbone.w(i, j);
                work.backbone.w(i, j) = orig + h;
                const double fp = value_at();
                work.backbone.w(i, j) = orig - h;
                const double fm = value_at();
                work.backbone.w(i, j) = orig;
                g.dw_bb(i, j) = (fp - fm) / (2.0 * h);
            }
        for (int j = 0; j < model.backbone.out_dim; ++j) {
            const double orig = work.backbone.b[j];
            work.backbone.b[j] = orig + h;
            const double fp = value_at();
            work.backbone.b[j] = orig - h;
            const double fm = value_at();
            work.backbone.b[j] = orig;
            g.db_bb[j] = (fp - fm) / (2.0 * h);
        }
    }

    g.dlogits.resize(part.num_labels);
    for (int l = 0; l < part.num_labels; ++l) {
        g.dlogits[l].assign(part.active_players[l].size(), 0.0);
        for (std::size_t k = 0; k < part.active_players[l].size(); ++k) {
            const double orig = work.fusion.logits[l][k];
            work.fusion.logits[l][k] = orig + h;
            const double fp = value_at();
            work.fusion.logits[l][k] = orig - h;
            const double fm = value_at();
            work.fusion.logits[l][k] = orig;
            g.dlogits[l][k] = (fp - fm) / (2.0 * h);
        }
    }

    double sq = 0.0;
    for (const auto& v : g.dlogits)
        for (double x : v) sq += x * x;
    for (double v : g.dw_bb.raw()) sq += v * v;
    for (double v : g.db_bb) sq += v * v;
    g.sq_norm = sq;
    return g;
}

namespace {

void compare_entry(BlockCheck& blk, long index, double analytic, double fd) {
    const double abs_err = std::fabs(analytic - fd);
    const double rel_err = abs_err / std::max({1.0, std::fabs(analytic), std::fabs(fd)});
    if (abs_err > blk.max_abs_err) blk.max_abs_err = abs_err;
    if (rel_err > blk.max_rel_err) {
        blk.max_rel_err = rel_err;
        blk.worst_entry = index;
    }
}

}  // namespace

GradCheckReport finite_diff_check(const ModelState& model, const Dataset& ds,
                                  const PayoffWeights& pw, const CuriosityConfig& cc,
                                  double h, double tol) {
    if (!(h > 0.0 && h <= 1e-3)) throw ConfigError("finite-difference step must be in (0, 1e-3]");
    const Partition& part = *model.partition;
    PlayerLayout layout = build_player_layout(part);

    std::vector<int> all(ds.num_instances());
    std::iota(all.begin(), all.end(), 0);
    BatchView batch{&ds, all};

    Matrix pre;
    Matrix feats = forward_backbone(model.backbone, ds, all,
                                    model.backbone.kind == BackboneKind::Mlp1 ? &pre : nullptr);
    std::vector<Matrix> posteriors(part.num_players());
    for (int i = 0; i < part.num_players(); ++i)
        posteriors[i] = player_posteriors(model.heads[i], feats);
    auto omega = fusion_omegas(model.fusion, part);

    // peers frozen at their first observation; beta held at beta_max
    std::vector<Matrix> peers(part.num_players());
    for (int i = 0; i < part.num_players(); ++i)
        peers[i] = part.num_players() > 1
                       ? instantaneous_peer_mean(posteriors, i, part, layout, all)
                       : Matrix(batch.size(), 0);
    const double beta = cc.beta_max;
    const std::vector<double> rarity = rarity_weights(model.train_freq);

    GradCheckReport rep;
    rep.h = h;
    rep.tol = tol;

    for (int i = 0; i < part.num_players(); ++i) {
        HeadGrad a = grad_player(i, feats, posteriors, omega, part, layout, batch, pw,
                                 rarity, cc.alpha, beta, peers[i], model.eps);
        HeadGrad f = fd_player_grad(i, model, feats, posteriors, omega, part, layout, batch,
                                    pw, rarity, cc.alpha, beta, peers[i], model.eps, h);
        BlockCheck blk;
        blk.name = "head_" + std::to_string(i);
        long index = 0;
        for (int r = 0; r < a.dw.rows(); ++r)
            for (int c = 0; c < a.dw.cols(); ++c) compare_entry(blk, index++, a.dw(r, c), f.dw(r, c));
        for (std::size_t b = 0; b < a.db.size(); ++b) compare_entry(blk, index++, a.db[b], f.db[b]);
        blk.pass = blk.max_rel_err <= tol;
        rep.pass = rep.pass && blk.pass;
        rep.blocks.push_back(std::move(blk));
    }

    {
        BfGrad a = grad_backbone_fusion(model, feats, pre, posteriors, omega, layout, batch,
                                        pw, rarity, cc.alpha, beta, peers, model.eps);
        BfGrad f = fd_bf_grad(model, batch, pw, rarity, cc.alpha, beta, peers, model.eps, h);
        BlockCheck blk;
        blk.name = "backbone_fusion";
        long index = 0;
        for (int r = 0; r < a.dw_bb.rows(); ++r)
            for (int c = 0; c < a.dw_bb.cols(); ++c)
                compare_entry(blk, index++, a.dw_bb(r, c), f.dw_bb(r, c));
        for (std::size_t b = 0; b < a.db_bb.size(); ++b)
            compare_entry(blk, index++, a.db_bb[b], f.db_bb[b]);
        for (std::size_t l = 0; l < a.dlogits.size(); ++l)
            for (std::size_t k = 0; k < a.dlogits[l].size(); ++k)
                compare_entry(blk, index++, a.dlogits[l][k], f.dlogits[l][k]);
        blk.pass = blk.max_rel_err <= tol;
        rep.pass = rep.pass && blk.pass;
        rep.blocks.push_back(std::move(blk));
    }
    return rep;
}

TailFloor tail_gradient_floor(int label, double tau, const ModelState& model,
                              const Dataset& ds, const PayoffWeights& pw,
                              const std::vector<double>& rarity, double alpha, double beta) {
    const Partition& part = *model.partition;
    if (label < 0 || label >= part.num_labels) throw ConfigError("label out of range");
    PlayerLayout layout = build_player_layout(part);

    std::vector<int> all(ds.num_instances());
    std::iota(all.begin(), all.end(), 0);
    BatchView batch{&ds, all};

    Matrix feats = forward_backbone(model.backbone, ds, all);
    std::vector<Matrix> posteriors(part.num_players());
    for (int i = 0; i < part.num_players(); ++i)
        posteriors[i] = player_posteriors(model.heads[i], feats);
    auto omega = fusion_omegas(model.fusion, part);
    FusedPrediction fused = fuse(posteriors, omega, part, model.eps);

    std::vector<Matrix> peers(part.num_players());
    for (int i = 0; i < part.num_players(); ++i)
        peers[i] = part.num_players() > 1
                       ? instantaneous_peer_mean(posteriors, i, part, layout, all)
                       : Matrix(batch.size(), 0);

    TailFloor tf;
    const auto& active = part.active_players[label];
    tf.per_player_deriv.assign(active.size(), 0.0);

    long in_s = 0;
    std::vector<std::uint8_t> mask(ds.num_instances(), 0);
    for (int m = 0; m < ds.num_instances(); ++m) {
        if (ds.label(m, label) && fused.clipped(m, label) <= tau) {
            mask[m] = 1;
            ++in_s;
        }
    }
    tf.pr_s = static_cast<double>(in_s) / ds.num_instances();
    tf.floor = alpha * model.eps * tf.pr_s * rarity[label];

    for (std::size_t k = 0; k < active.size(); ++k) {
        const int i = active[k];
        Matrix dz = objective_dlogits(i, posteriors, omega, part, layout, batch, pw, rarity,
                                      alpha, beta, peers[i], model.eps, fused,
                                      /*include_payoff=*/true);
        const int slot = part.slot_of(i, label);
        double acc = 0.0;
        for (int m = 0; m < ds.num_instances(); ++m)
            if (mask[m]) acc += dz(m, slot);
        tf.per_player_deriv[k] = acc / ds.num_instances();
    }
    return tf;
}

}  // namespace tailgame
