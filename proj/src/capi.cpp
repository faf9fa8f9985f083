#include "tailgame/tailgame.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dataset.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "objective.hpp"
#include "partition.hpp"
#include "rng.hpp"
#include "trainer.hpp"

using namespace tailgame;

struct tg_dataset {
    Dataset ds;
};
struct tg_partition {
    std::shared_ptr<const Partition> p;
};
struct tg_model {
    ModelState m;
};

namespace {

thread_local std::string g_last_error;

tg_status fail(tg_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

template <typename Fn>
tg_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return TG_OK;
    } catch (const ParseError& e) {
        return fail(TG_ERR_PARSE, e.what());
    } catch (const ConfigError& e) {
        return fail(TG_ERR_CONFIG, e.what());
    } catch (const IoError& e) {
        return fail(TG_ERR_IO, e.what());
    } catch (const NumericError& e) {
        return fail(TG_ERR_NUMERIC, e.what());
    } catch (const DataError& e) {
        return fail(TG_ERR_DATA, e.what());
    } catch (const std::exception& e) {
        return fail(TG_ERR_INTERNAL, e.what());
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::vector<double> thresholds_for(const ModelState& m, double tau, bool use_tuned) {
    if (use_tuned) {
        if (!m.thresholds) throw ConfigError("model has no tuned thresholds stored");
        return *m.thresholds;
    }
    return std::vector<double>(m.partition->num_labels, tau);
}

}  // namespace

extern "C" {

const char* tg_version(void) { return "1.0.0"; }

const char* tg_status_name(tg_status s) {
    switch (s) {
        case TG_OK: return "ok";
        case TG_ERR_INVALID_ARG: return "invalid-argument";
        case TG_ERR_CONFIG: return "config-error";
        case TG_ERR_PARSE: return "parse-error";
        case TG_ERR_IO: return "io-error";
        case TG_ERR_DATA: return "data-error";
        case TG_ERR_NUMERIC: return "numeric-error";
        case TG_ERR_INTERNAL: return "internal-error";
    }
    return "unknown";
}

const char* tg_last_error(void) { return g_last_error.c_str(); }

void tg_string_free(char* s) { delete[] s; }

tg_status tg_dataset_read(const char* path, int declared_labels, int declared_features,
                          tg_dataset** out) {
    if (!path || !out) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        auto h = std::make_unique<tg_dataset>();
        h->ds = read_multilabel_svmlight(path, declared_labels, declared_features);
        *out = h.release();
    });
}

tg_status tg_dataset_parse(const char* text, size_t len, int declared_labels,
                           int declared_features, tg_dataset** out) {
    if (!text || !out) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        std::istringstream in(std::string(text, len));
        auto h = std::make_unique<tg_dataset>();
        h->ds = parse_multilabel_svmlight(in, declared_labels, declared_features);
        *out = h.release();
    });
}

tg_status tg_dataset_write(const tg_dataset* ds, const char* path) {
    if (!ds || !path) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] { write_multilabel_svmlight(ds->ds, path); });
}

void tg_dataset_free(tg_dataset* ds) { delete ds; }

tg_status tg_dataset_dims(const tg_dataset* ds, int* num_instances, int* num_features,
                          int* num_labels) {
    if (!ds) return fail(TG_ERR_INVALID_ARG, "null dataset");
    if (num_instances) *num_instances = ds->ds.num_instances();
    if (num_features) *num_features = ds->ds.num_features();
    if (num_labels) *num_labels = ds->ds.num_labels();
    return TG_OK;
}

tg_status tg_dataset_generate(int num_labels, int num_instances, int num_features,
                              double exponent, uint64_t seed, tg_dataset** out) {
    if (!out) return fail(TG_ERR_INVALID_ARG, "null output");
    return guarded([&] {
        SynthConfig cfg;
        cfg.num_labels = num_labels;
        cfg.num_instances = num_instances;
        cfg.num_features = num_features;
        cfg.exponent = exponent;
        cfg.seed = seed;
        auto h = std::make_unique<tg_dataset>();
        h->ds = generate_synthetic_longtail(cfg);
        *out = h.release();
    });
}

tg_status tg_dataset_make_rare(const tg_dataset* ds, double severity, double tail_fraction,
                               uint64_t seed, tg_dataset** out, double* achieved_ratios) {
    if (!ds || !out) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        RareSplitConfig cfg;
        cfg.severity = severity;
        cfg.tail_fraction = tail_fraction;
        cfg.seed = seed;
        RareVariantResult res = make_rare_variant(ds->ds, cfg);
        if (achieved_ratios)
            std::memcpy(achieved_ratios, res.achieved_ratios.data(),
                        res.achieved_ratios.size() * sizeof(double));
        auto h = std::make_unique<tg_dataset>();
        h->ds = std::move(res.dataset);
        *out = h.release();
    });
}

tg_status tg_dataset_flip_noise(const tg_dataset* ds, double rho, uint64_t seed,
                                tg_dataset** out) {
    if (!ds || !out) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        auto h = std::make_unique<tg_dataset>();
        h->ds = flip_label_noise(ds->ds, rho, seed);
        *out = h.release();
    });
}

tg_status tg_dataset_stats_csv(const tg_dataset* ds, const char* path) {
    if (!ds || !path) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        LabelStats stats = compute_label_stats(ds->ds);
        std::ofstream out(path);
        if (!out) throw IoError(std::string("cannot open '") + path + "' for writing");
        write_stats_csv(stats, out);
    });
}

tg_status tg_partition_build(const tg_dataset* ds, int num_players, double rho,
                             double tail_fraction, uint64_t seed, tg_partition** out) {
    if (!ds || !out) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        LabelStats stats = compute_label_stats(ds->ds);
        auto h = std::make_unique<tg_partition>();
        h->p = std::make_shared<const Partition>(
            build_partition(stats, num_players, rho, seed, tail_fraction));
        *out = h.release();
    });
}

tg_status tg_partition_read(const char* path, tg_partition** out) {
    if (!path || !out) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        auto h = std::make_unique<tg_partition>();
        h->p = std::make_shared<const Partition>(read_partition_file(path));
        *out = h.release();
    });
}

tg_status tg_partition_write(const tg_partition* p, const char* path) {
    if (!p || !path) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] { write_partition_file(*p->p, path); });
}

void tg_partition_free(tg_partition* p) { delete p; }

tg_status tg_partition_info(const tg_partition* p, int* num_players, int* num_labels,
                            double* coverage_factor) {
    if (!p) return fail(TG_ERR_INVALID_ARG, "null partition");
    if (num_players) *num_players = p->p->num_players();
    if (num_labels) *num_labels = p->p->num_labels;
    if (coverage_factor) *coverage_factor = p->p->coverage_factor();
    return TG_OK;
}

void tg_train_opts_init(tg_train_opts* opts) {
    if (!opts) return;
    opts->sweeps = 200;
    opts->batch_size = 0;
    opts->eta_head = 1.0;
    opts->eta_fusion = 1.0;
    opts->step_rule = TG_STEP_ARMIJO;
    opts->armijo_c = 1e-4;
    opts->armijo_shrink = 0.5;
    opts->armijo_max_tries = 40;
    opts->grad_clip_norm = 5.0;
    opts->alpha = 0.4;
    opts->beta_max = 0.3;
    opts->warmup_fraction = 0.1;
    opts->ema_decay = 0.99;
    opts->eps = 0.01;
    opts->seed = 0;
    opts->inner_iters = 1;
    opts->payoff_scheme = TG_WEIGHTS_INVERSE_FREQUENCY;
    opts->stale_payoff = 0;
    opts->snapshot_every = 0;
    opts->tau_eval = 0.5;
    opts->tail_fraction = 0.2;
    opts->backbone = TG_BACKBONE_IDENTITY;
    opts->hidden_dim = 0;
}

tg_status tg_train(const tg_dataset* train, const tg_partition* partition,
                   const tg_train_opts* opts, const tg_dataset* val,
                   const tg_model* resume_from, const char* telemetry_csv,
                   const char* snapshot_dir, tg_model** out) {
    if (!train || !partition || !opts || !out)
        return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        TrainConfig cfg;
        cfg.sweeps = opts->sweeps;
        cfg.batch_size = opts->batch_size;
        cfg.eta_head = opts->eta_head;
        cfg.eta_bf = opts->eta_fusion;
        cfg.step_rule = static_cast<StepRule>(opts->step_rule);
        cfg.armijo_c = opts->armijo_c;
        cfg.armijo_shrink = opts->armijo_shrink;
        cfg.armijo_max_tries = opts->armijo_max_tries;
        cfg.grad_clip_norm = opts->grad_clip_norm;
        cfg.curiosity.alpha = opts->alpha;
        cfg.curiosity.beta_max = opts->beta_max;
        cfg.curiosity.warmup_fraction = opts->warmup_fraction;
        cfg.curiosity.ema_decay = opts->ema_decay;
        cfg.eps = opts->eps;
        cfg.seed = opts->seed;
        cfg.inner_iters = opts->inner_iters;
        cfg.payoff_scheme = static_cast<WeightScheme>(opts->payoff_scheme);
        cfg.stale_payoff = opts->stale_payoff != 0;
        cfg.snapshot_every = opts->snapshot_every;
        cfg.tau_eval = opts->tau_eval;
        cfg.tail_fraction = opts->tail_fraction;
        cfg.backbone = static_cast<BackboneKind>(opts->backbone);
        cfg.hidden_dim = opts->hidden_dim;

        TrainResult res = run_training(train->ds, partition->p, cfg,
                                       val ? &val->ds : nullptr,
                                       resume_from ? &resume_from->m : nullptr);
        if (telemetry_csv) {
            std::ofstream csv(telemetry_csv);
            if (!csv)
                throw IoError(std::string("cannot open '") + telemetry_csv + "' for writing");
            res.telemetry.write_csv(csv);
        }
        if (snapshot_dir && cfg.snapshot_every > 0) {
            std::filesystem::create_directories(snapshot_dir);
            for (const auto& [sweep, snap] : res.snapshots) {
                std::string path = std::string(snapshot_dir) + "/checkpoint_" +
                                   std::to_string(sweep) + ".txt";
                write_checkpoint_file(snap, path);
            }
        }
        if (res.aborted) throw NumericError("training aborted: " + res.abort_reason);
        auto h = std::make_unique<tg_model>();
        h->m = std::move(res.model);
        *out = h.release();
    });
}

tg_status tg_model_read(const char* path, tg_model** out) {
    if (!path || !out) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        auto h = std::make_unique<tg_model>();
        h->m = read_checkpoint_file(path);
        *out = h.release();
    });
}

tg_status tg_model_write(const tg_model* m, const char* path) {
    if (!m || !path) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] { write_checkpoint_file(m->m, path); });
}

void tg_model_free(tg_model* m) { delete m; }

tg_status tg_model_dims(const tg_model* m, int* num_players, int* num_features,
                        int* num_labels) {
    if (!m) return fail(TG_ERR_INVALID_ARG, "null model");
    if (num_players) *num_players = m->m.num_players();
    if (num_features) *num_features = m->m.backbone.in_dim;
    if (num_labels) *num_labels = m->m.partition->num_labels;
    return TG_OK;
}

tg_status tg_model_predict(const tg_model* m, const tg_dataset* ds, double* probs,
                           size_t probs_len) {
    if (!m || !ds || !probs) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        const size_t need = static_cast<size_t>(ds->ds.num_instances()) *
                            static_cast<size_t>(ds->ds.num_labels());
        if (probs_len < need)
            throw ConfigError("probability buffer too small: need " + std::to_string(need));
        FusedPrediction fp = predict(m->m, ds->ds);
        std::memcpy(probs, fp.clipped.raw().data(), need * sizeof(double));
    });
}

tg_status tg_model_tune_thresholds(tg_model* m, const tg_dataset* val) {
    if (!m || !val) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        FusedPrediction fp = predict(m->m, val->ds);
        m->m.thresholds = tune_thresholds(fp.clipped, val->ds).thresholds;
    });
}

tg_status tg_evaluate_json(const tg_model* m, const tg_dataset* eval, double tau,
                           int use_tuned_thresholds, char** json) {
    if (!m || !eval || !json) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        std::vector<double> tv = thresholds_for(m->m, tau, use_tuned_thresholds != 0);
        MetricsReport rep = evaluate_model(m->m, eval->ds, tv);
        *json = dup_string(rep.to_json());
    });
}

tg_status tg_certificate_json(const tg_model* m, const tg_dataset* eval, double tau,
                              char** json) {
    if (!m || !eval || !json) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        BoundCertificate cert = certify_model(m->m, eval->ds, tau);
        *json = dup_string(cert.to_json());
    });
}

tg_status tg_diagnose_json(const tg_model* m, const tg_dataset* eval, double tau,
                           char** json) {
    if (!m || !eval || !json) return fail(TG_ERR_INVALID_ARG, "null argument");
    return guarded([&] {
        LabelStats stats;
        stats.freq = m->m.train_freq;
        stats.ascending_order = ascending_order_from_freq(m->m.train_freq);
        TailSet tail = split_head_tail(stats, 0.2, TailMode::BottomFraction);
        std::vector<double> tv = thresholds_for(m->m, tau, false);
        SpecializationReport rep = specialization_report(m->m, eval->ds, tail, tv);
        *json = dup_string(rep.to_json());
    });
}

tg_status tg_gradcheck_json(uint64_t seed, int num_labels, int num_instances,
                            int num_features, int num_players, double rho, int backbone,
                            double alpha, double beta, double h, double tol, char** json) {
    if (!json) return fail(TG_ERR_INVALID_ARG, "null output");
    return guarded([&] {
        SynthConfig sc;
        sc.num_labels = num_labels;
        sc.num_instances = num_instances;
        sc.num_features = num_features;
        sc.exponent = 1.2;
        sc.seed = seed;
        Dataset ds = generate_synthetic_longtail(sc);
        LabelStats stats = compute_label_stats(ds);
        auto part = std::make_shared<const Partition>(
            build_partition(stats, num_players, rho, seed));

        BackboneKind kind = static_cast<BackboneKind>(backbone);
        const int hidden = kind == BackboneKind::Mlp1 ? std::max(2, num_features / 2) : 0;
        ModelState model = init_model(part, num_features, kind, hidden, 0.01, seed);
        // random logits make the fusion softmax Jacobian non-trivial
        Rng rng(seed, /*stream=*/0x6a4d);
        for (auto& v : model.fusion.logits)
            for (double& f : v) f = 0.3 * rng.gaussian();
        model.train_freq = stats.freq;

        PayoffWeights pw = make_payoff_weights(WeightScheme::InverseFrequency, stats.freq);
        CuriosityConfig cc;
        cc.alpha = alpha;
        cc.beta_max = beta;
        GradCheckReport rep = finite_diff_check(model, ds, pw, cc, h, tol);

        nlohmann::json j;
        j["h"] = rep.h;
        j["tol"] = rep.tol;
        j["pass"] = rep.pass;
        nlohmann::json blocks = nlohmann::json::array();
        for (const auto& blk : rep.blocks)
            blocks.push_back({{"block", blk.name},
                              {"max_abs_err", blk.max_abs_err},
                              {"max_rel_err", blk.max_rel_err},
                              {"worst_entry", blk.worst_entry},
                              {"pass", blk.pass}});
        j["blocks"] = blocks;
        j["config"] = {{"seed", seed},
                       {"labels", num_labels},
                       {"instances", num_instances},
                       {"features", num_features},
                       {"players", num_players},
                       {"rho", rho},
                       {"backbone", kind == BackboneKind::Mlp1 ? "mlp1" : "identity"},
                       {"alpha", alpha},
                       {"beta", beta}};
        *json = dup_string(j.dump(2));
    });
}

}  // extern "C"
