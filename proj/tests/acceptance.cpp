// Acceptance suite: every release gate in one binary. Each criterion prints a
// single [PASS]/[FAIL] line; the process exits nonzero if any gate fails.
//
// Usage: acceptance [path-to-cli-binary]
// The CLI path is needed only for the end-to-end determinism gate; when it is
// missing that gate fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "fixtures.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "objective.hpp"
#include "oracles.hpp"
#include "partition.hpp"
#include "rng.hpp"
#include "trainer.hpp"

using namespace tailgame;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    std::printf("[%s] criterion %d: %s (%s, %.1fs)\n", pass ? "PASS" : "FAIL", criterion,
                name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

template <typename Fn>
void gate(int criterion, const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
        pass = fn(detail);
    } catch (const std::exception& e) {
        pass = false;
        detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(criterion, name, pass, detail, secs);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

// ---------------------------------------------------------------------------

bool criterion1_gradients(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    bool all_pass = true;
    for (int cfg_i = 0; cfg_i < 20; ++cfg_i) {
        const bool mlp = cfg_i >= 10;
        const std::uint64_t seed = 7000 + cfg_i;
        SynthConfig sc;
        sc.num_labels = 8;
        sc.num_instances = 10;
        sc.num_features = 6;
        sc.exponent = 1.2;
        sc.seed = seed;
        Dataset ds = generate_synthetic_longtail(sc);
        LabelStats stats = compute_label_stats(ds);
        auto part = std::make_shared<const Partition>(
            build_partition(stats, 3, 0.25, seed, 0.25));
        ModelState model =
            init_model(part, 6, mlp ? BackboneKind::Mlp1 : BackboneKind::Identity,
                       mlp ? 4 : 0, 0.01, seed);
        model.train_freq = stats.freq;
        Rng rng(seed, 0x77);
        for (auto& head : model.heads) {
            for (double& w : head.w.raw()) w = 0.7 * rng.gaussian();
            for (double& b : head.b) b = 0.3 * rng.gaussian();
        }
        for (auto& v : model.fusion.logits)
            for (double& f : v) f = 0.4 * rng.gaussian();

        PayoffWeights pw = make_payoff_weights(WeightScheme::InverseFrequency, stats.freq);
        CuriosityConfig cc;
        cc.alpha = 0.4;
        cc.beta_max = 0.3;
        GradCheckReport rep = finite_diff_check(model, ds, pw, cc, 1e-5, 1e-5);
        for (const auto& blk : rep.blocks) worst = std::max(worst, blk.max_rel_err);
        all_pass = all_pass && rep.pass;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail = "20 configs, worst rel err " + fmt("%.2e", worst) + ", " + fmt("%.1f", secs) + "s";
    return all_pass && worst < 1e-5 && secs < 30.0;
}

TrainResult run_monotone_fixture(long snapshot_every) {
    Dataset ds = fixtures::monotone_fixture();
    LabelStats stats = compute_label_stats(ds);
    auto part = std::make_shared<const Partition>(build_partition(stats, 3, 0.2, 7));
    TrainConfig cfg;
    cfg.sweeps = 200;
    cfg.step_rule = StepRule::Armijo;
    cfg.eta_head = 256.0;
    cfg.eta_bf = 256.0;
    cfg.seed = 7;
    cfg.snapshot_every = snapshot_every;
    return run_training(ds, part, cfg);
}

bool criterion2_monotone(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res = run_monotone_fixture(0);
    if (res.aborted) {
        detail = "training aborted: " + res.abort_reason;
        return false;
    }
    double worst_drop = 0.0;
    for (std::size_t t = 1; t < res.telemetry.rows.size(); ++t)
        worst_drop = std::min(worst_drop,
                              res.telemetry.rows[t].phi - res.telemetry.rows[t - 1].phi);
    double final_max = 0.0;
    for (double g : res.telemetry.rows.back().grad_norms)
        final_max = std::max(final_max, g);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail = "worst sweep drop " + fmt("%.1e", worst_drop) + ", final max grad " +
             fmt("%.2e", final_max);
    return res.telemetry.rows.size() == 200 && worst_drop >= -1e-10 && final_max < 1e-3 &&
           secs < 120.0;
}

bool criterion3_certificate(std::string& detail) {
    Dataset ds = fixtures::monotone_fixture();
    TrainResult res = run_monotone_fixture(10);
    if (res.aborted || res.snapshots.size() != 20) {
        detail = "fixture run did not produce 20 checkpoints";
        return false;
    }
    double min_slack = 1e300, min_gap = 1e300;
    for (const auto& [sweep, snap] : res.snapshots) {
        BoundCertificate c = certify_model(snap, ds, 0.5);
        min_slack = std::min(min_slack, c.slack);
        min_gap = std::min(min_gap, c.bound_tail_only - c.bound);
    }

    // 50 random untrained models over a spread of parameter scales
    LabelStats stats = compute_label_stats(ds);
    auto part = std::make_shared<const Partition>(build_partition(stats, 3, 0.2, 7));
    for (int k = 0; k < 50; ++k) {
        ModelState m = init_model(part, 8, BackboneKind::Identity, 0, 0.01, 9000 + k);
        m.train_freq = stats.freq;
        Rng rr(9000 + k, 0x88);
        const double scale = 0.2 + 1.8 * rr.uniform();
        for (auto& head : m.heads) {
            for (double& w : head.w.raw()) w = scale * rr.gaussian();
            for (double& b : head.b) b = 0.5 * rr.gaussian();
        }
        for (auto& v : m.fusion.logits)
            for (double& f : v) f = rr.gaussian();
        BoundCertificate c = certify_model(m, ds, 0.5);
        min_slack = std::min(min_slack, c.slack);
        min_gap = std::min(min_gap, c.bound_tail_only - c.bound);
    }

    // a learnable fixture where the bound is non-vacuous at convergence
    SynthConfig sc;
    sc.num_labels = 12;
    sc.num_instances = 300;
    sc.num_features = 10;
    sc.exponent = 1.0;
    sc.seed = 77;
    sc.prevalence_min = 0.12;
    sc.prevalence_max = 0.6;
    Dataset easy = generate_synthetic_longtail(sc);
    LabelStats est = compute_label_stats(easy);
    auto epart = std::make_shared<const Partition>(build_partition(est, 3, 0.2, 8));
    TrainConfig ecfg;
    ecfg.sweeps = 400;
    ecfg.step_rule = StepRule::Armijo;
    ecfg.eta_head = 256.0;
    ecfg.eta_bf = 256.0;
    ecfg.seed = 8;
    TrainResult eres = run_training(easy, epart, ecfg);
    BoundCertificate ec = certify_model(eres.model, easy, 0.5);
    min_slack = std::min(min_slack, ec.slack);
    min_gap = std::min(min_gap, ec.bound_tail_only - ec.bound);

    detail = "min slack " + fmt("%.4f", min_slack) + ", min tail-only gap " +
             fmt("%.4f", min_gap) + ", non-vacuous bound " + fmt("%.3f", ec.bound);
    return min_slack >= 0.0 && min_gap >= 0.0 && ec.bound > 0.0;
}

bool criterion4_floor(std::string& detail) {
    int evaluated = 0;
    double worst_margin = 1e300;
    for (std::uint64_t seed = 0; seed < 240 && evaluated < 100; ++seed) {
        SynthConfig sc;
        sc.num_labels = 8;
        sc.num_instances = 60;
        sc.num_features = 6;
        sc.exponent = 1.2;
        sc.seed = 1000 + seed;
        Dataset ds = generate_synthetic_longtail(sc);
        LabelStats stats = compute_label_stats(ds);
        auto part = std::make_shared<const Partition>(
            build_partition(stats, 3, 0.25, 1000 + seed, 0.25));
        ModelState model = init_model(part, 6, BackboneKind::Identity, 0, 0.01, 1000 + seed);
        model.train_freq = stats.freq;
        Rng rng(1000 + seed, 0xabc1);
        for (auto& head : model.heads) {
            for (double& w : head.w.raw()) w = 0.8 * rng.gaussian();
            for (double& b : head.b) b = 0.3 * rng.gaussian() - 1.0;
        }
        for (auto& v : model.fusion.logits)
            for (double& f : v) f = 0.5 * rng.gaussian();

        PayoffWeights pw = make_payoff_weights(WeightScheme::InverseFrequency, stats.freq);
        std::vector<double> rarity = rarity_weights(stats.freq);
        TailSet tail = split_head_tail(stats, 0.25);
        for (int l : tail.tail_labels) {
            TailFloor tf = tail_gradient_floor(l, 0.5, model, ds, pw, rarity, 0.4, 0.3);
            if (tf.pr_s == 0.0) continue;
            ++evaluated;
            const double best =
                *std::max_element(tf.per_player_deriv.begin(), tf.per_player_deriv.end());
            worst_margin = std::min(worst_margin, best - tf.floor);
        }
    }
    detail = std::to_string(evaluated) + " fixtures, worst margin over floor " +
             fmt("%.2e", worst_margin);
    return evaluated >= 100 && worst_margin >= -1e-12;
}

bool criterion5_metric_oracles(std::string& detail) {
    // hand-computed fixtures first
    {
        Dataset ds(1, 1);
        for (int m = 0; m < 4; ++m) {
            SparseRow row;
            row.entries.push_back({0, 1.0});
            ds.add_instance(std::move(row), (m == 0 || m == 2) ? std::vector<int>{0}
                                                               : std::vector<int>{});
        }
        Matrix s(4, 1);
        s(0, 0) = 0.9;
        s(1, 0) = 0.8;
        s(2, 0) = 0.7;
        s(3, 0) = 0.1;
        if (std::fabs(mean_average_precision(s, ds) - 5.0 / 6.0) > 1e-15) {
            detail = "AP=5/6 fixture failed";
            return false;
        }
    }
    {
        Dataset ds(1, 5);
        SparseRow row;
        row.entries.push_back({0, 1.0});
        ds.add_instance(std::move(row), {1, 3});
        Matrix s(1, 5);
        s(0, 0) = 0.1;
        s(0, 1) = 0.9;
        s(0, 2) = 0.8;
        s(0, 3) = 0.7;
        s(0, 4) = 0.2;
        if (std::fabs(precision_at_k(s, ds, 3) - 2.0 / 3.0) > 1e-15) {
            detail = "P@3=2/3 fixture failed";
            return false;
        }
    }

    Rng rng(808);
    int trials = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(8));
        const int l = 5 + static_cast<int>(rng.below(4));
        Dataset ds(1, l);
        Matrix preds(m, l), scores(m, l);
        bool any_pos = false;
        for (int i = 0; i < m; ++i) {
            SparseRow row;
            row.entries.push_back({0, 1.0});
            std::vector<int> labels;
            for (int k = 0; k < l; ++k) {
                if (rng.uniform() < 0.35) {
                    labels.push_back(k);
                    any_pos = true;
                }
                preds(i, k) = rng.uniform() < 0.4 ? 1.0 : 0.0;
                scores(i, k) = rng.uniform();
            }
            ds.add_instance(std::move(row), labels);
        }
        ++trials;

        F1Slice f1 = micro_macro_f1(preds, ds);
        oracle::Counts micro = oracle::micro_counts(preds, ds);
        if (f1.micro.tp != micro.tp || f1.micro.fp != micro.fp || f1.micro.fn != micro.fn) {
            detail = "micro counts differ at trial " + std::to_string(trial);
            return false;
        }
        if (std::fabs(f1.macro_f1 - oracle::macro_f1(preds, ds)) > 1e-12 ||
            std::fabs(f1.micro_f1 - oracle::f1_of(micro)) > 1e-12) {
            detail = "f1 mismatch at trial " + std::to_string(trial);
            return false;
        }
        LabelStats stats = compute_label_stats(ds);
        TailSet tail = split_head_tail(stats, 0.2);
        RareF1 rf = rare_f1(preds, ds, tail);
        if (std::fabs(rf.macro_tail - oracle::macro_f1_over(preds, ds, tail.tail_labels)) >
            1e-12) {
            detail = "rare-f1 mismatch at trial " + std::to_string(trial);
            return false;
        }
        if (any_pos &&
            std::fabs(mean_average_precision(scores, ds) - oracle::mean_ap(scores, ds)) >
                1e-12) {
            detail = "mAP mismatch at trial " + std::to_string(trial);
            return false;
        }
        for (int k : {1, 3, 5}) {
            if (k > l) continue;
            if (std::fabs(precision_at_k(scores, ds, k) - oracle::p_at_k(scores, ds, k)) >
                1e-12) {
                detail = "P@k mismatch at trial " + std::to_string(trial);
                return false;
            }
        }
    }
    detail = std::to_string(trials) + " random fixtures plus hand examples, exact agreement";
    return true;
}

bool criterion6_degenerate(std::string& detail) {
    SynthConfig sc;
    sc.num_labels = 6;
    sc.num_instances = 60;
    sc.num_features = 5;
    sc.exponent = 1.0;
    sc.seed = 19;
    Dataset ds = generate_synthetic_longtail(sc);
    LabelStats stats = compute_label_stats(ds);
    auto part = std::make_shared<const Partition>(build_partition(stats, 1, 0.0, 3));

    TrainConfig cfg;
    cfg.sweeps = 40;
    cfg.step_rule = StepRule::Fixed;
    cfg.eta_head = 2.0;
    cfg.eta_bf = 1.0;
    cfg.grad_clip_norm = 0.0;
    cfg.curiosity.alpha = 0.0;
    cfg.payoff_scheme = WeightScheme::Uniform;
    cfg.seed = 5;
    TrainResult res = run_training(ds, part, cfg);
    if (res.aborted) {
        detail = "training aborted";
        return false;
    }

    oracle::LogisticReference ref;
    ModelState init = init_model(part, 5, BackboneKind::Identity, 0, cfg.eps, cfg.seed);
    ref.w = init.heads[0].w;
    ref.b = init.heads[0].b;
    ref.eps = cfg.eps;
    ref.eta = cfg.eta_head;
    ref.run(ds, cfg.sweeps);

    if (res.model.heads[0].w.raw() != ref.w.raw() || res.model.heads[0].b != ref.b) {
        detail = "parameter trajectory diverged from the logistic reference";
        return false;
    }
    for (long t = 0; t < cfg.sweeps; ++t)
        if (res.telemetry.rows[t].payoff != ref.payoff_trace[t]) {
            detail = "payoff trace differs at sweep " + std::to_string(t + 1);
            return false;
        }
    FusedPrediction fp = predict(res.model, ds);
    Matrix h(ds.num_instances(), 5);
    for (int m = 0; m < ds.num_instances(); ++m)
        for (const auto& e : ds.features(m).entries) h(m, e.index) = e.value;
    for (int m = 0; m < ds.num_instances(); ++m)
        for (int a = 0; a < 6; ++a) {
            const double* wr = ref.w.row(a);
            double acc = ref.b[a];
            for (int j = 0; j < 5; ++j) acc += h(m, j) * wr[j];
            const double want = std::clamp(oracle::LogisticReference::sigmoid_ref(acc),
                                           cfg.eps, 1.0 - cfg.eps);
            if (fp.clipped(m, a) != want) {
                detail = "prediction differs at instance " + std::to_string(m);
                return false;
            }
        }
    detail = "40 sweeps bitwise-identical to the standalone logistic reference";
    return true;
}

bool criterion7_curiosity(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    int wins = 0;
    double total_gain = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SynthConfig sc;
        sc.num_labels = 50;
        sc.num_instances = 2000;
        sc.num_features = 32;
        sc.exponent = 1.5;
        sc.seed = 100 + seed;
        Dataset all = generate_synthetic_longtail(sc);
        Dataset train = fixtures::slice(all, 0, 1400);
        Dataset test = fixtures::slice(all, 1400, 2000);
        LabelStats stats = compute_label_stats(train);
        auto part = std::make_shared<const Partition>(build_partition(stats, 3, 0.2, seed));
        TailSet tail = split_head_tail(stats, 0.2);

        double rf[2] = {0.0, 0.0};
        for (int k = 0; k < 2; ++k) {
            TrainConfig cfg;
            cfg.sweeps = 200;
            cfg.step_rule = StepRule::Armijo;
            cfg.eta_head = 64.0;
            cfg.eta_bf = 64.0;
            cfg.curiosity.alpha = k ? 0.4 : 0.0;
            cfg.seed = seed;
            TrainResult res = run_training(train, part, cfg);
            if (res.aborted) {
                detail = "training aborted";
                return false;
            }
            FusedPrediction fp = predict(res.model, test);
            std::vector<double> tau(50, 0.5);
            rf[k] = rare_f1(predictions_at(fp.clipped, tau), test, tail).macro_tail;
        }
        if (rf[1] > rf[0]) ++wins;
        total_gain += rf[1] - rf[0];
        per_seed += fmt(" %+.3f", rf[1] - rf[0]);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail = "wins " + std::to_string(wins) + "/5, mean gain " +
             fmt("%+.3f", total_gain / 5) + ", per-seed" + per_seed + ", " +
             fmt("%.0f", secs) + "s";
    return wins >= 4 && total_gain > 0.0 && secs < 600.0;
}

bool criterion8_dataset_tooling(std::string& detail) {
    // make_rare_variant: exact flip counts, untouched complement, determinism
    Rng gen(2024);
    for (int trial = 0; trial < 25; ++trial) {
        SynthConfig sc;
        sc.num_labels = 10;
        sc.num_instances = 80 + static_cast<int>(gen.below(60));
        sc.num_features = 5;
        sc.exponent = 1.3;
        sc.seed = gen.next_u64();
        Dataset ds = generate_synthetic_longtail(sc);
        RareSplitConfig cfg;
        cfg.severity = 0.2 + 0.6 * gen.uniform();
        cfg.tail_fraction = 0.2;
        cfg.seed = gen.next_u64();
        RareVariantResult a = make_rare_variant(ds, cfg);
        RareVariantResult b = make_rare_variant(ds, cfg);
        if (a.dataset.label_matrix() != b.dataset.label_matrix()) {
            detail = "rare variant is not seed-deterministic";
            return false;
        }
        LabelStats before = compute_label_stats(ds);
        LabelStats after = compute_label_stats(a.dataset);
        TailSet tail = split_head_tail(before, cfg.tail_fraction);
        for (int l = 0; l < ds.num_labels(); ++l) {
            const long want_flips =
                tail.is_tail[l]
                    ? static_cast<long>(std::floor(cfg.severity * before.positive_counts[l]))
                    : 0;
            if (before.positive_counts[l] - after.positive_counts[l] != want_flips) {
                detail = "flip count wrong for label " + std::to_string(l);
                return false;
            }
        }
        for (int m = 0; m < ds.num_instances(); ++m)
            for (int l = 0; l < ds.num_labels(); ++l) {
                const bool was = ds.label(m, l), now = a.dataset.label(m, l);
                if (!tail.is_tail[l] && was != now) {
                    detail = "non-tail entry changed";
                    return false;
                }
                if (!was && now) {
                    detail = "a negative entry became positive";
                    return false;
                }
            }
    }

    // partition invariants over 200 random configs
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const int l_count = 5 + static_cast<int>(rng.below(40));
        const int n = 1 + static_cast<int>(rng.below(std::min(l_count, 6)));
        const double q = 0.2;
        const int tail_count = static_cast<int>(std::floor(q * l_count));
        const double rho_max =
            n > 1 ? static_cast<double>(tail_count) * (n - 1) / l_count : 0.0;
        const double rho = std::min(0.8, rho_max) * rng.uniform();
        LabelStats stats;
        stats.freq.resize(l_count);
        {
            Rng fr(rng.next_u64());
            for (double& f : stats.freq) f = fr.uniform();
        }
        stats.ascending_order = ascending_order_from_freq(stats.freq);
        Partition p = build_partition(stats, n, rho, rng.next_u64(), q);

        std::set<int> covered;
        long total = 0;
        std::size_t mx = 0, mn = static_cast<std::size_t>(l_count) + 1;
        for (const auto& s : p.subsets) {
            covered.insert(s.begin(), s.end());
            total += static_cast<long>(s.size());
            mx = std::max(mx, s.size());
            mn = std::min(mn, s.size());
        }
        if (static_cast<int>(covered.size()) != l_count) {
            detail = "coverage violated at trial " + std::to_string(trial);
            return false;
        }
        if (mx - mn > 2) {
            detail = "load balance violated at trial " + std::to_string(trial);
            return false;
        }
        if (n > 1 && std::labs(total - std::lround((1.0 + rho) * l_count)) > 1) {
            detail = "coverage factor off target at trial " + std::to_string(trial);
            return false;
        }
    }
    detail = "25 rare-variant checks and 200 partition configs";
    return true;
}

bool criterion9_cli_determinism(std::string& detail, const std::string& cli) {
    if (cli.empty() || !fs::exists(cli)) {
        detail = "CLI binary not found";
        return false;
    }
    fs::path work = fs::temp_directory_path() / "tailgame_acceptance_cli";
    std::error_code ec;
    fs::remove_all(work, ec);
    fs::create_directories(work);

    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    const std::string data = (work / "synth").string();
    if (!run("gen-synth --labels 12 --instances 150 --features 8 --exponent 1.2 --seed 3 "
             "--out " + data)) {
        detail = "gen-synth failed";
        return false;
    }
    const std::string train_args =
        "train --data " + data + "/data.svm --players 3 --overlap 0.2 --sweeps 40 "
        "--eta-head 64 --eta-fusion 64 --seed 7 --out ";
    if (!run(train_args + (work / "a").string()) || !run(train_args + (work / "b").string())) {
        detail = "train invocation failed";
        return false;
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    const std::string ta = slurp(work / "a" / "telemetry.csv");
    const std::string tb = slurp(work / "b" / "telemetry.csv");
    const std::string ca = slurp(work / "a" / "checkpoint.txt");
    const std::string cb = slurp(work / "b" / "checkpoint.txt");
    if (ta.empty() || ca.empty()) {
        detail = "missing artifacts";
        return false;
    }
    if (ta != tb) {
        detail = "telemetry bytes differ";
        return false;
    }
    if (ca != cb) {
        detail = "checkpoint bytes differ";
        return false;
    }
    fs::remove_all(work, ec);
    detail = "telemetry and checkpoint byte-identical across reruns";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";

    gate(1, "analytic block gradients match central differences", criterion1_gradients);
    gate(2, "full-batch armijo training ascends the potential", criterion2_monotone);
    gate(3, "micro tail F1 dominates the certificate bound", criterion3_certificate);
    gate(4, "tail-false-negative gradient floor", criterion4_floor);
    gate(5, "metrics equal the brute-force oracle", criterion5_metric_oracles);
    gate(6, "one-player game reduces to logistic regression bitwise",
         criterion6_degenerate);
    gate(7, "curiosity lifts test Rare-F1 on long-tail data", criterion7_curiosity);
    gate(8, "dataset corruption and partition invariants", criterion8_dataset_tooling);
    gate(9, "CLI training runs are byte-deterministic",
         [&](std::string& d) { return criterion9_cli_determinism(d, cli); });

    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
