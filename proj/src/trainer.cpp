#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "metrics.hpp"
#include "rng.hpp"

namespace tailgame {

double armijo_step(double phi0, double dir_sq, double eta0, double c, double shrink,
                   int max_tries, const std::function<double(double)>& phi_at) {
    double eta = eta0;
    for (int k = 0; k < max_tries; ++k) {
        if (phi_at(eta) >= phi0 + c * eta * dir_sq) return eta;
        eta *= shrink;
    }
    return 0.0;
}

bool detect_stationarity(const Telemetry& t, double g_tol) {
    if (t.rows.empty()) throw DataError("no completed sweep to inspect");
    const auto& norms = t.rows.back().grad_norms;
    double mx = 0.0;
    for (double v : norms) mx = std::max(mx, v);
    return mx < g_tol;
}

FusedPrediction predict(const ModelState& model, const Dataset& ds) {
    std::vector<int> all(ds.num_instances());
    std::iota(all.begin(), all.end(), 0);
    Matrix feats = forward_backbone(model.backbone, ds, all);
    std::vector<Matrix> posteriors(model.num_players());
    for (int i = 0; i < model.num_players(); ++i)
        posteriors[i] = player_posteriors(model.heads[i], feats);
    return fuse(posteriors, fusion_omegas(model.fusion, *model.partition), *model.partition,
                model.eps);
}

void Telemetry::write_csv(std::ostream& out) const {
    out << "sweep,phi,R";
    for (int i = 0; i < num_players; ++i) out << ",curiosity_" << i;
    for (int i = 0; i <= num_players; ++i) out << ",grad_norm_block_" << i;
    for (int i = 0; i <= num_players; ++i) out << ",step_" << i;
    if (has_val) out << ",val_rare_f1";
    out << '\n';

    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << ',' << buf;
    };
    for (const SweepRecord& r : rows) {
        out << r.sweep;
        put(r.phi);
        put(r.payoff);
        for (double v : r.curiosity) put(v);
        for (double v : r.grad_norms) put(v);
        for (double v : r.steps) put(v);
        if (has_val) put(r.val_rare_f1);
        out << '\n';
    }
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    long t = 0;

    void ensure(std::size_t n) {
        if (m.size() != n) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
            t = 0;
        }
    }

    // replaces g with the bias-corrected adaptive direction
    void transform(std::vector<double>& g) {
        ensure(g.size());
        ++t;
        const double b1 = 0.9, b2 = 0.999;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            g[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
        }
    }
};

std::vector<double> flatten_head(const HeadGrad& g) {
    std::vector<double> flat;
    flat.reserve(g.dw.raw().size() + g.db.size());
    flat.insert(flat.end(), g.dw.raw().begin(), g.dw.raw().end());
    flat.insert(flat.end(), g.db.begin(), g.db.end());
    return flat;
}

std::vector<double> flatten_bf(const BfGrad& g) {
    std::vector<double> flat;
    flat.insert(flat.end(), g.dw_bb.raw().begin(), g.dw_bb.raw().end());
    flat.insert(flat.end(), g.db_bb.begin(), g.db_bb.end());
    for (const auto& v : g.dlogits) flat.insert(flat.end(), v.begin(), v.end());
    return flat;
}

void clip_direction(std::vector<double>& dir, double clip) {
    if (clip <= 0.0) return;
    double sq = 0.0;
    for (double v : dir) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > clip) {
        const double s = clip / norm;
        for (double& v : dir) v *= s;
    }
}

void apply_head(PlayerHead& head, const std::vector<double>& dir, double step) {
    std::size_t k = 0;
    for (double& w : head.w.raw()) w += step * dir[k++];
    for (double& b : head.b) b += step * dir[k++];
}

void apply_bf(ModelState& model, const std::vector<double>& dir, double step) {
    std::size_t k = 0;
    for (double& w : model.backbone.w.raw()) w += step * dir[k++];
    for (double& b : model.backbone.b) b += step * dir[k++];
    for (auto& v : model.fusion.logits)
        for (double& f : v) f += step * dir[k++];
}

double sq_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

TrainResult run_training(const Dataset& train, std::shared_ptr<const Partition> partition,
                         const TrainConfig& cfg, const Dataset* val,
                         const ModelState* resume_from) {
    const Partition& part = *partition;
    const int n_players = part.num_players();
    const int m_count = train.num_instances();
    if (m_count == 0) throw DataError("training set is empty");
    if (part.num_labels != train.num_labels())
        throw DataError("partition covers " + std::to_string(part.num_labels) +
                        " labels but the dataset has " + std::to_string(train.num_labels()));
    if (cfg.sweeps < 0 || cfg.inner_iters < 1) throw ConfigError("bad sweep/inner_iters config");
    if (cfg.eta_head <= 0.0 || cfg.eta_bf <= 0.0) throw ConfigError("step sizes must be > 0");
    if (cfg.step_rule == StepRule::Armijo &&
        !(cfg.armijo_c > 0.0 && cfg.armijo_c < 1.0 && cfg.armijo_shrink > 0.0 &&
          cfg.armijo_shrink < 1.0 && cfg.armijo_max_tries >= 0))
        throw ConfigError("bad armijo parameters");
    if (!(cfg.curiosity.alpha >= 0.0 && cfg.curiosity.beta_max >= 0.0 &&
          cfg.curiosity.warmup_fraction >= 0.0 && cfg.curiosity.warmup_fraction <= 1.0 &&
          cfg.curiosity.ema_decay >= 0.0 && cfg.curiosity.ema_decay < 1.0))
        throw ConfigError("bad curiosity parameters");

    TrainResult res;
    if (resume_from) {
        res.model = *resume_from;
        if (res.model.num_players() != n_players)
            throw ConfigError("resume checkpoint does not match the partition");
    } else {
        res.model = init_model(partition, train.num_features(), cfg.backbone,
                               cfg.hidden_dim, cfg.eps, cfg.seed);
    }
    ModelState& model = res.model;
    model.payoff_scheme = cfg.payoff_scheme;

    LabelStats stats = compute_label_stats(train);
    model.train_freq = stats.freq;
    const PayoffWeights pw = make_payoff_weights(cfg.payoff_scheme, stats.freq);
    const std::vector<double> rarity = rarity_weights(stats.freq);
    const PlayerLayout layout = build_player_layout(part);
    const double eps = model.eps;
    const bool full_batch = cfg.batch_size <= 0 || cfg.batch_size >= m_count;
    // stale-payoff steps ascend the curiosity part only, so the potential
    // carries no per-sweep guarantee there
    const bool monotone =
        cfg.step_rule == StepRule::Armijo && full_batch && !cfg.stale_payoff;
    const double alpha = cfg.curiosity.alpha;

    TailSet val_tail;
    if (val) {
        if (val->num_labels() != train.num_labels())
            throw DataError("validation label count differs from training");
        val_tail = split_head_tail(stats, cfg.tail_fraction, TailMode::BottomFraction);
    }

    PeerState peer_state;
    if (n_players > 1) peer_state.init(part, layout, m_count);

    std::vector<int> all_idx(m_count);
    std::iota(all_idx.begin(), all_idx.end(), 0);
    std::vector<int> pool = all_idx;
    Rng batch_rng(cfg.seed, /*stream=*/0xba7c);

    std::vector<double> eta_head(n_players, cfg.eta_head);
    if (!cfg.eta_head_per_player.empty()) {
        if (static_cast<int>(cfg.eta_head_per_player.size()) != n_players)
            throw ConfigError("eta_head_per_player size must equal N");
        eta_head = cfg.eta_head_per_player;
    }

    std::vector<AdamState> adam_heads(n_players);
    AdamState adam_bf;

    res.telemetry.num_players = n_players;
    res.telemetry.has_val = val != nullptr;

    ModelState last_good = model;
    double prev_phi = -std::numeric_limits<double>::infinity();

    const long total = cfg.sweeps;
    for (long sweep = 0; sweep < total; ++sweep) {
        const double beta = beta_at(cfg.curiosity, sweep, total);

        std::vector<int> batch_idx;
        if (full_batch) {
            batch_idx = all_idx;
        } else {
            batch_rng.shuffle(pool);
            batch_idx.assign(pool.begin(), pool.begin() + cfg.batch_size);
            std::sort(batch_idx.begin(), batch_idx.end());
        }
        BatchView batch{&train, batch_idx};

        Matrix pre;
        Matrix feats = forward_backbone(model.backbone, train, batch_idx,
                                        model.backbone.kind == BackboneKind::Mlp1 ? &pre
                                                                                  : nullptr);
        std::vector<Matrix> posteriors(n_players);
        for (int i = 0; i < n_players; ++i)
            posteriors[i] = player_posteriors(model.heads[i], feats);
        auto omega = fusion_omegas(model.fusion, part);

        // Detached peer averages for the whole sweep. In monotone mode an EMA
        // refresh is only adopted when it does not lower the potential at the
        // current parameters; otherwise the previous reference is kept so the
        // sweep's ascent guarantees carry across sweep boundaries.
        std::vector<Matrix> peers(n_players);
        if (n_players > 1) {
            for (int i = 0; i < n_players; ++i) {
                Matrix inst = instantaneous_peer_mean(posteriors, i, part, layout, batch_idx);
                Matrix cand = peer_state.propose(i, batch_idx, inst, cfg.curiosity.ema_decay);
                bool adopt = true;
                if (monotone && alpha != 0.0 && beta != 0.0 &&
                    !layout.overlap_labels[i].empty()) {
                    Matrix cur = peer_state.snapshot(i, batch_idx, inst);
                    double delta = 0.0;
                    const auto& subset = part.subsets[i];
                    const auto& ocol = layout.overlap_col[i];
                    for (int r = 0; r < batch.size(); ++r)
                        for (std::size_t a = 0; a < subset.size(); ++a) {
                            const int oc = ocol[a];
                            if (oc < 0) continue;
                            const double p = posteriors[i](r, static_cast<int>(a));
                            delta += bernoulli_jsd(p, cand(r, oc), eps) -
                                     bernoulli_jsd(p, cur(r, oc), eps);
                        }
                    if (delta < 0.0) {
                        adopt = false;
                        peers[i] = std::move(cur);
                        ++res.peer_refreshes_skipped;
                    }
                }
                if (adopt) {
                    peer_state.adopt(i, batch_idx, cand);
                    peers[i] = std::move(cand);
                }
            }
        } else {
            for (int i = 0; i < n_players; ++i) peers[i] = Matrix(batch.size(), 0);
        }

        SweepRecord rec;
        rec.sweep = resume_from ? resume_from->trained_sweeps + sweep + 1 : sweep + 1;
        rec.grad_norms.resize(n_players + 1, 0.0);
        rec.steps.resize(n_players + 1, 0.0);

        const bool include_payoff = !cfg.stale_payoff;
        bool finite = true;

        for (int i = 0; i < n_players && finite; ++i) {
            for (int inner = 0; inner < cfg.inner_iters; ++inner) {
                HeadGrad g = grad_player(i, feats, posteriors, omega, part, layout, batch,
                                         pw, rarity, alpha, beta, peers[i], eps,
                                         include_payoff);
                const double gnorm = std::sqrt(g.sq_norm);
                if (!std::isfinite(gnorm)) {
                    finite = false;
                    break;
                }
                rec.grad_norms[i] = gnorm;

                std::vector<double> dir = flatten_head(g);
                clip_direction(dir, cfg.grad_clip_norm);

                double step = 0.0;
                if (cfg.step_rule == StepRule::Fixed) {
                    step = eta_head[i];
                } else if (cfg.step_rule == StepRule::Adam) {
                    adam_heads[i].transform(dir);
                    step = eta_head[i];
                } else {
                    const double phi0 = eval_player_objective(
                        i, posteriors, omega, part, layout, batch, pw, rarity, alpha, beta,
                        peers[i], eps, include_payoff);
                    const double dir_sq = sq_of(dir);
                    std::vector<Matrix> work = posteriors;
                    PlayerHead trial = model.heads[i];
                    auto phi_at = [&](double eta) {
                        trial = model.heads[i];
                        apply_head(trial, dir, eta);
                        work[i] = player_posteriors(trial, feats);
                        return eval_player_objective(i, work, omega, part, layout, batch,
                                                     pw, rarity, alpha, beta, peers[i], eps,
                                                     include_payoff);
                    };
                    step = armijo_step(phi0, dir_sq, eta_head[i], cfg.armijo_c,
                                       cfg.armijo_shrink, cfg.armijo_max_tries, phi_at);
                }
                rec.steps[i] = step;
                if (step != 0.0) {
                    apply_head(model.heads[i], dir, step);
                    posteriors[i] = player_posteriors(model.heads[i], feats);
                }
            }
        }

        if (finite) {
            BfGrad g = grad_backbone_fusion(model, feats, pre, posteriors, omega, layout,
                                            batch, pw, rarity, alpha, beta, peers, eps);
            const double gnorm = std::sqrt(g.sq_norm);
            if (!std::isfinite(gnorm)) {
                finite = false;
            } else {
                rec.grad_norms[n_players] = gnorm;
                std::vector<double> dir = flatten_bf(g);
                clip_direction(dir, cfg.grad_clip_norm);

                double step = 0.0;
                if (cfg.step_rule == StepRule::Fixed) {
                    step = cfg.eta_bf;
                } else if (cfg.step_rule == StepRule::Adam) {
                    adam_bf.transform(dir);
                    step = cfg.eta_bf;
                } else {
                    const double phi0 = eval_potential(posteriors, omega, part, layout,
                                                       batch, pw, rarity, alpha, beta, peers,
                                                       eps);
                    const double dir_sq = sq_of(dir);
                    ModelState trial = model;
                    auto phi_at = [&](double eta) {
                        trial.backbone = model.backbone;
                        trial.fusion = model.fusion;
                        apply_bf(trial, dir, eta);
                        Matrix f2 = forward_backbone(trial.backbone, train, batch_idx);
                        std::vector<Matrix> p2(n_players);
                        for (int i = 0; i < n_players; ++i)
                            p2[i] = player_posteriors(trial.heads[i], f2);
                        return eval_potential(p2, fusion_omegas(trial.fusion, part), part,
                                              layout, batch, pw, rarity, alpha, beta, peers,
                                              eps);
                    };
                    step = armijo_step(phi0, dir_sq, cfg.eta_bf, cfg.armijo_c,
                                       cfg.armijo_shrink, cfg.armijo_max_tries, phi_at);
                }
                rec.steps[n_players] = step;
                if (step != 0.0) {
                    apply_bf(model, dir, step);
                    feats = forward_backbone(model.backbone, train, batch_idx,
                                             model.backbone.kind == BackboneKind::Mlp1 ? &pre
                                                                                       : nullptr);
                    for (int i = 0; i < n_players; ++i)
                        posteriors[i] = player_posteriors(model.heads[i], feats);
                    omega = fusion_omegas(model.fusion, part);
                }
            }
        }

        // sweep-boundary potential, always on the full training set
        if (finite) {
            if (full_batch) {
                rec.phi = eval_potential(posteriors, omega, part, layout, batch, pw, rarity,
                                         alpha, beta, peers, eps, &rec.curiosity,
                                         &rec.payoff);
            } else {
                Matrix ffull = forward_backbone(model.backbone, train, all_idx);
                std::vector<Matrix> pfull(n_players);
                for (int i = 0; i < n_players; ++i)
                    pfull[i] = player_posteriors(model.heads[i], ffull);
                std::vector<Matrix> peers_full(n_players);
                for (int i = 0; i < n_players; ++i)
                    peers_full[i] =
                        n_players > 1
                            ? peer_state.snapshot(
                                  i, all_idx,
                                  instantaneous_peer_mean(pfull, i, part, layout, all_idx))
                            : Matrix(m_count, 0);
                BatchView full{&train, all_idx};
                rec.phi = eval_potential(pfull, fusion_omegas(model.fusion, part), part,
                                         layout, full, pw, rarity, alpha, beta, peers_full,
                                         eps, &rec.curiosity, &rec.payoff);
            }
            finite = std::isfinite(rec.phi);
        }

        if (!finite) {
            res.model = last_good;
            res.aborted = true;
            res.abort_reason = "non-finite objective at sweep " + std::to_string(sweep + 1);
            break;
        }

        // in monotone mode a potential decrease means a broken ascent step
        if (monotone && rec.phi < prev_phi - 1e-10) {
            res.model = last_good;
            res.aborted = true;
            res.abort_reason = "potential decreased under full-batch armijo at sweep " +
                               std::to_string(sweep + 1);
            break;
        }
        prev_phi = rec.phi;

        if (val) {
            FusedPrediction vp = predict(model, *val);
            std::vector<double> tau(val->num_labels(), cfg.tau_eval);
            rec.val_rare_f1 =
                rare_f1(predictions_at(vp.clipped, tau), *val, val_tail).macro_tail;
        }

        model.trained_sweeps = rec.sweep;
        res.telemetry.rows.push_back(std::move(rec));
        last_good = model;

        if (cfg.snapshot_every > 0 && (sweep + 1) % cfg.snapshot_every == 0)
            res.snapshots.emplace_back(model.trained_sweeps, model);
    }

    return res;
}

}  // namespace tailgame
