// Batch entry points for the cooperative long-tail multi-label pipeline.
// Every subcommand writes its outputs plus the fully resolved configuration
// into --out, so runs are reproducible from the artifacts alone.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tailgame/tailgame.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void die(tg_status s) {
    std::string msg = std::string(tg_status_name(s)) + ": " + tg_last_error();
    int code = kExitData;
    switch (s) {
        case TG_ERR_INVALID_ARG:
        case TG_ERR_CONFIG:
            code = kExitUsage;
            break;
        case TG_ERR_NUMERIC:
            code = kExitNumeric;
            break;
        default:
            code = kExitData;
            break;
    }
    throw CliError{code, msg};
}

void check(tg_status s) {
    if (s != TG_OK) die(s);
}

struct DatasetHandle {
    tg_dataset* h = nullptr;
    ~DatasetHandle() { tg_dataset_free(h); }
};
struct PartitionHandle {
    tg_partition* h = nullptr;
    ~PartitionHandle() { tg_partition_free(h); }
};
struct ModelHandle {
    tg_model* h = nullptr;
    ~ModelHandle() { tg_model_free(h); }
};

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CliError{kExitData, "cannot create output directory '" + out + "'"};
    return dir;
}

void write_resolved_config(CLI::App* sub, const fs::path& dir) {
    // the resolved file is itself a valid --config input for the subcommand
    std::ofstream f(dir / "config.resolved");
    f << '[' << sub->get_name() << "]\n" << sub->config_to_str(true, false);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw CliError{kExitData, "cannot write '" + path.string() + "'"};
    f << text;
    if (!text.empty() && text.back() != '\n') f << '\n';
}

std::string take_string(char* s) {
    std::string out = s ? s : "";
    tg_string_free(s);
    return out;
}

// label,f1,tp,fp,fn rows next to metrics.json for external plotting
void write_per_label_csv(const std::string& metrics_json, const fs::path& path) {
    auto j = nlohmann::json::parse(metrics_json);
    std::ofstream f(path);
    f << "label,f1,tp,fp,fn,threshold\n";
    char buf[64];
    for (const auto& row : j.at("per_label")) {
        const int label = row.at("label").get<int>();
        std::snprintf(buf, sizeof(buf), "%.17g", row.at("f1").get<double>());
        f << label << ',' << buf << ',' << row.at("counts").at("tp").get<long long>() << ','
          << row.at("counts").at("fp").get<long long>() << ','
          << row.at("counts").at("fn").get<long long>();
        std::snprintf(buf, sizeof(buf), "%.17g", j.at("thresholds")[label].get<double>());
        f << ',' << buf << '\n';
    }
}

// label,player,accuracy rows for the specialization heat map
void write_specialization_csv(const std::string& diag_json, const fs::path& path) {
    auto j = nlohmann::json::parse(diag_json);
    std::ofstream f(path);
    f << "label,player,accuracy\n";
    if (!j.contains("per_label")) return;
    char buf[64];
    for (const auto& row : j.at("per_label")) {
        const int label = row.at("label").get<int>();
        const auto& players = row.at("players");
        const auto& acc = row.at("accuracy");
        for (std::size_t k = 0; k < players.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", acc[k].get<double>());
            f << label << ',' << players[k].get<int>() << ',' << buf << '\n';
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tailgame: cooperative multi-player training for long-tail multi-label data"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value config file with one [subcommand] section; place the flag "
                   "before the subcommand; command-line flags override it");
    app.footer("exit codes: 0 ok, 2 usage/config, 3 data error, 4 numeric failure");

    // ---- gen-synth ----
    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic long-tail dataset");
    struct {
        int labels = 50, instances = 2000, features = 32;
        double exponent = 1.5;
        std::uint64_t seed = 0;
        std::string out;
    } gen_opt;
    gen->add_option("--labels", gen_opt.labels, "label count")->capture_default_str();
    gen->add_option("--instances", gen_opt.instances, "instance count")->capture_default_str();
    gen->add_option("--features", gen_opt.features, "feature dimension")->capture_default_str();
    gen->add_option("--exponent", gen_opt.exponent, "power-law exponent")->capture_default_str();
    gen->add_option("--seed", gen_opt.seed, "rng seed")->capture_default_str();
    gen->add_option("--out", gen_opt.out, "output directory")->required();

    // ---- make-rare ----
    auto* rare = app.add_subcommand("make-rare", "down-sample tail positives of a training set");
    struct {
        std::string data, out;
        double severity = 0.3, tail_fraction = 0.2;
        std::uint64_t seed = 0;
    } rare_opt;
    rare->add_option("--data", rare_opt.data, "input svmlight file")->required();
    rare->add_option("--severity", rare_opt.severity, "fraction of tail positives flipped")
        ->capture_default_str();
    rare->add_option("--tail-fraction", rare_opt.tail_fraction, "bottom-q tail fraction")
        ->capture_default_str();
    rare->add_option("--seed", rare_opt.seed, "rng seed")->capture_default_str();
    rare->add_option("--out", rare_opt.out, "output directory")->required();

    // ---- noise ----
    auto* noise = app.add_subcommand("noise", "flip positives to negatives at random");
    struct {
        std::string data, out;
        double rho = 0.1;
        std::uint64_t seed = 0;
    } noise_opt;
    noise->add_option("--data", noise_opt.data, "input svmlight file")->required();
    noise->add_option("--rho", noise_opt.rho, "flip probability per positive")
        ->capture_default_str();
    noise->add_option("--seed", noise_opt.seed, "rng seed")->capture_default_str();
    noise->add_option("--out", noise_opt.out, "output directory")->required();

    // ---- partition ----
    auto* partc = app.add_subcommand("partition", "build the overlapping player partition");
    struct {
        std::string data, out;
        int players = 3;
        double overlap = 0.2, tail_fraction = 0.2;
        std::uint64_t seed = 0;
    } part_opt;
    partc->add_option("--data", part_opt.data, "training svmlight file")->required();
    partc->add_option("--players", part_opt.players, "number of players")->capture_default_str();
    partc->add_option("--overlap", part_opt.overlap, "overlap ratio rho")->capture_default_str();
    partc->add_option("--tail-fraction", part_opt.tail_fraction, "bottom-q tail fraction")
        ->capture_default_str();
    partc->add_option("--seed", part_opt.seed, "rng seed")->capture_default_str();
    partc->add_option("--out", part_opt.out, "output directory")->required();

    // ---- train ----
    auto* train = app.add_subcommand("train", "train the cooperative multi-player model");
    struct {
        std::string data, val, partition, resume, out;
        int players = 3;
        double overlap = 0.2;
        std::string step_rule = "armijo";
        std::string backbone = "identity";
        std::string payoff = "invfreq";
        int hidden = 0;
        long sweeps = 200;
        int batch = 0;
        double eta_head = 1.0, eta_fusion = 1.0;
        double alpha = 0.4, beta_max = 0.3, warmup = 0.1, ema_decay = 0.99;
        double eps = 0.01, clip = 5.0, tau = 0.5, tail_fraction = 0.2;
        double armijo_c = 1e-4, armijo_shrink = 0.5;
        int armijo_tries = 40, inner = 1;
        long snapshot_every = 0;
        bool stale_payoff = false, tune = false;
        std::uint64_t seed = 0;
    } t;
    train->add_option("--data", t.data, "training svmlight file")->required();
    train->add_option("--val", t.val, "validation svmlight file");
    train->add_option("--partition", t.partition, "partition file (built from stats when absent)");
    train->add_option("--resume", t.resume, "checkpoint to continue from");
    train->add_option("--players", t.players, "number of players")->capture_default_str();
    train->add_option("--overlap", t.overlap, "overlap ratio rho")->capture_default_str();
    train->add_option("--sweeps", t.sweeps, "training sweeps")->capture_default_str();
    train->add_option("--batch", t.batch, "minibatch size, 0 = full batch")->capture_default_str();
    train->add_option("--eta-head", t.eta_head, "player step size")->capture_default_str();
    train->add_option("--eta-fusion", t.eta_fusion, "backbone/fusion step size")
        ->capture_default_str();
    train->add_option("--step-rule", t.step_rule, "fixed | armijo | adam")
        ->check(CLI::IsMember({"fixed", "armijo", "adam"}))
        ->capture_default_str();
    train->add_option("--armijo-c", t.armijo_c, "armijo sufficient-ascent constant")
        ->capture_default_str();
    train->add_option("--armijo-shrink", t.armijo_shrink, "armijo backtracking factor")
        ->capture_default_str();
    train->add_option("--armijo-tries", t.armijo_tries, "armijo candidate count")
        ->capture_default_str();
    train->add_option("--clip", t.clip, "gradient clip norm, <=0 disables")
        ->capture_default_str();
    train->add_option("--alpha", t.alpha, "curiosity weight")->capture_default_str();
    train->add_option("--beta-max", t.beta_max, "disagreement weight after warmup")
        ->capture_default_str();
    train->add_option("--warmup", t.warmup, "beta warmup fraction")->capture_default_str();
    train->add_option("--ema-decay", t.ema_decay, "peer average EMA decay")
        ->capture_default_str();
    train->add_option("--eps", t.eps, "probability clip")->capture_default_str();
    train->add_option("--tau", t.tau, "validation threshold")->capture_default_str();
    train->add_option("--tail-fraction", t.tail_fraction, "bottom-q tail fraction")
        ->capture_default_str();
    train->add_option("--inner", t.inner, "ascent steps per block per sweep")
        ->capture_default_str();
    train->add_option("--payoff", t.payoff, "uniform | invfreq")
        ->check(CLI::IsMember({"uniform", "invfreq"}))
        ->capture_default_str();
    train->add_option("--backbone", t.backbone, "identity | mlp1")
        ->check(CLI::IsMember({"identity", "mlp1"}))
        ->capture_default_str();
    train->add_option("--hidden", t.hidden, "mlp1 feature dim")->capture_default_str();
    train->add_option("--snapshot-every", t.snapshot_every, "checkpoint every K sweeps")
        ->capture_default_str();
    train->add_flag("--stale-payoff", t.stale_payoff,
                    "player steps treat the batch payoff as a constant");
    train->add_flag("--tune-thresholds", t.tune, "tune per-label thresholds on --val");
    train->add_option("--seed", t.seed, "rng seed")->capture_default_str();
    train->add_option("--out", t.out, "output directory")->required();

    // ---- eval ----
    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    struct {
        std::string checkpoint, data, out;
        double tau = 0.5;
        bool tuned = false;
    } e;
    evalc->add_option("--checkpoint", e.checkpoint, "model checkpoint")->required();
    evalc->add_option("--data", e.data, "evaluation svmlight file")->required();
    evalc->add_option("--tau", e.tau, "global threshold")->capture_default_str();
    evalc->add_flag("--tuned", e.tuned, "use thresholds stored in the checkpoint");
    evalc->add_option("--out", e.out, "output directory")->required();

    // ---- gradcheck ----
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
    struct {
        std::uint64_t seed = 7;
        int labels = 8, instances = 10, features = 6, players = 3;
        double rho = 0.25, alpha = 0.4, beta = 0.3, h = 1e-5, tol = 1e-5;
        std::string backbone = "identity";
        std::string out;
    } g;
    gc->add_option("--seed", g.seed, "rng seed")->capture_default_str();
    gc->add_option("--labels", g.labels, "label count")->capture_default_str();
    gc->add_option("--instances", g.instances, "instance count")->capture_default_str();
    gc->add_option("--features", g.features, "feature dimension")->capture_default_str();
    gc->add_option("--players", g.players, "player count")->capture_default_str();
    gc->add_option("--rho", g.rho, "overlap ratio")->capture_default_str();
    gc->add_option("--alpha", g.alpha, "curiosity weight")->capture_default_str();
    gc->add_option("--beta", g.beta, "disagreement weight")->capture_default_str();
    gc->add_option("--fd-step", g.h, "central-difference step")->capture_default_str();
    gc->add_option("--tol", g.tol, "max relative error tolerance")->capture_default_str();
    gc->add_option("--backbone", g.backbone, "identity | mlp1")
        ->check(CLI::IsMember({"identity", "mlp1"}))
        ->capture_default_str();
    gc->add_option("--out", g.out, "output directory (report also printed)");

    // ---- boundcheck ----
    auto* bc = app.add_subcommand("boundcheck", "Rare-F1 lower-bound certificate");
    struct {
        std::string checkpoint, data, out;
        double tau = 0.5;
    } b;
    bc->add_option("--checkpoint", b.checkpoint, "model checkpoint")->required();
    bc->add_option("--data", b.data, "evaluation svmlight file")->required();
    bc->add_option("--tau", b.tau, "certificate threshold")->capture_default_str();
    bc->add_option("--out", b.out, "output directory")->required();

    // ---- diagnose ----
    auto* diag = app.add_subcommand("diagnose", "player specialization diagnostics");
    struct {
        std::string checkpoint, data, out;
        double tau = 0.5;
    } d;
    diag->add_option("--checkpoint", d.checkpoint, "model checkpoint")->required();
    diag->add_option("--data", d.data, "evaluation svmlight file")->required();
    diag->add_option("--tau", d.tau, "posterior threshold")->capture_default_str();
    diag->add_option("--out", d.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints help or the parse error
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            fs::path dir = prepare_out_dir(gen_opt.out);
            DatasetHandle ds;
            check(tg_dataset_generate(gen_opt.labels, gen_opt.instances, gen_opt.features,
                                      gen_opt.exponent, gen_opt.seed, &ds.h));
            check(tg_dataset_write(ds.h, (dir / "data.svm").string().c_str()));
            check(tg_dataset_stats_csv(ds.h, (dir / "stats.csv").string().c_str()));
            write_resolved_config(gen, dir);
            std::cout << "wrote " << (dir / "data.svm").string() << "\n";
        } else if (rare->parsed()) {
            fs::path dir = prepare_out_dir(rare_opt.out);
            DatasetHandle in, out;
            check(tg_dataset_read(rare_opt.data.c_str(), -1, -1, &in.h));
            int m = 0, dfeat = 0, l = 0;
            check(tg_dataset_dims(in.h, &m, &dfeat, &l));
            std::vector<double> ratios(l, 0.0);
            check(tg_dataset_make_rare(in.h, rare_opt.severity, rare_opt.tail_fraction,
                                       rare_opt.seed, &out.h, ratios.data()));
            check(tg_dataset_write(out.h, (dir / "data.svm").string().c_str()));
            {
                std::ofstream f(dir / "achieved_ratios.csv");
                f << "label,achieved_ratio\n";
                char buf[40];
                for (int i = 0; i < l; ++i) {
                    std::snprintf(buf, sizeof(buf), "%.17g", ratios[i]);
                    f << i << ',' << buf << '\n';
                }
            }
            check(tg_dataset_stats_csv(out.h, (dir / "stats.csv").string().c_str()));
            write_resolved_config(rare, dir);
            std::cout << "wrote " << (dir / "data.svm").string() << "\n";
        } else if (noise->parsed()) {
            fs::path dir = prepare_out_dir(noise_opt.out);
            DatasetHandle in, out;
            check(tg_dataset_read(noise_opt.data.c_str(), -1, -1, &in.h));
            check(tg_dataset_flip_noise(in.h, noise_opt.rho, noise_opt.seed, &out.h));
            check(tg_dataset_write(out.h, (dir / "data.svm").string().c_str()));
            check(tg_dataset_stats_csv(out.h, (dir / "stats.csv").string().c_str()));
            write_resolved_config(noise, dir);
            std::cout << "wrote " << (dir / "data.svm").string() << "\n";
        } else if (partc->parsed()) {
            fs::path dir = prepare_out_dir(part_opt.out);
            DatasetHandle ds;
            PartitionHandle p;
            check(tg_dataset_read(part_opt.data.c_str(), -1, -1, &ds.h));
            check(tg_partition_build(ds.h, part_opt.players, part_opt.overlap,
                                     part_opt.tail_fraction, part_opt.seed, &p.h));
            check(tg_partition_write(p.h, (dir / "partition.txt").string().c_str()));
            double cov = 0.0;
            check(tg_partition_info(p.h, nullptr, nullptr, &cov));
            write_resolved_config(partc, dir);
            std::cout << "coverage factor " << cov << ", wrote "
                      << (dir / "partition.txt").string() << "\n";
        } else if (train->parsed()) {
            fs::path dir = prepare_out_dir(t.out);
            DatasetHandle train_ds, val_ds;
            check(tg_dataset_read(t.data.c_str(), -1, -1, &train_ds.h));
            if (!t.val.empty()) {
                int labels = 0;
                check(tg_dataset_dims(train_ds.h, nullptr, nullptr, &labels));
                check(tg_dataset_read(t.val.c_str(), labels, -1, &val_ds.h));
            }
            PartitionHandle part;
            if (!t.partition.empty()) {
                check(tg_partition_read(t.partition.c_str(), &part.h));
            } else {
                check(tg_partition_build(train_ds.h, t.players, t.overlap, t.tail_fraction,
                                         t.seed, &part.h));
            }
            check(tg_partition_write(part.h, (dir / "partition.txt").string().c_str()));

            ModelHandle resume;
            if (!t.resume.empty()) check(tg_model_read(t.resume.c_str(), &resume.h));

            tg_train_opts opts;
            tg_train_opts_init(&opts);
            opts.sweeps = t.sweeps;
            opts.batch_size = t.batch;
            opts.eta_head = t.eta_head;
            opts.eta_fusion = t.eta_fusion;
            opts.step_rule = t.step_rule == "fixed"    ? TG_STEP_FIXED
                             : t.step_rule == "armijo" ? TG_STEP_ARMIJO
                                                       : TG_STEP_ADAM;
            opts.armijo_c = t.armijo_c;
            opts.armijo_shrink = t.armijo_shrink;
            opts.armijo_max_tries = t.armijo_tries;
            opts.grad_clip_norm = t.clip;
            opts.alpha = t.alpha;
            opts.beta_max = t.beta_max;
            opts.warmup_fraction = t.warmup;
            opts.ema_decay = t.ema_decay;
            opts.eps = t.eps;
            opts.seed = t.seed;
            opts.inner_iters = t.inner;
            opts.payoff_scheme =
                t.payoff == "uniform" ? TG_WEIGHTS_UNIFORM : TG_WEIGHTS_INVERSE_FREQUENCY;
            opts.stale_payoff = t.stale_payoff ? 1 : 0;
            opts.snapshot_every = t.snapshot_every;
            opts.tau_eval = t.tau;
            opts.tail_fraction = t.tail_fraction;
            opts.backbone = t.backbone == "mlp1" ? TG_BACKBONE_MLP1 : TG_BACKBONE_IDENTITY;
            opts.hidden_dim = t.hidden;

            ModelHandle model;
            check(tg_train(train_ds.h, part.h, &opts, val_ds.h, resume.h,
                           (dir / "telemetry.csv").string().c_str(),
                           (dir / "checkpoints").string().c_str(), &model.h));
            if (t.tune) {
                if (!val_ds.h)
                    throw CliError{kExitUsage, "--tune-thresholds requires --val"};
                check(tg_model_tune_thresholds(model.h, val_ds.h));
            }
            check(tg_model_write(model.h, (dir / "checkpoint.txt").string().c_str()));
            if (val_ds.h) {
                char* json = nullptr;
                check(tg_evaluate_json(model.h, val_ds.h, t.tau, t.tune ? 1 : 0, &json));
                std::string text = take_string(json);
                write_text(dir / "metrics.json", text);
                write_per_label_csv(text, dir / "per_label.csv");
                check(tg_certificate_json(model.h, val_ds.h, t.tau, &json));
                write_text(dir / "certificate.json", take_string(json));
            }
            write_resolved_config(train, dir);
            std::cout << "wrote " << (dir / "checkpoint.txt").string() << "\n";
        } else if (evalc->parsed()) {
            fs::path dir = prepare_out_dir(e.out);
            ModelHandle model;
            DatasetHandle ds;
            check(tg_model_read(e.checkpoint.c_str(), &model.h));
            int labels = 0;
            check(tg_model_dims(model.h, nullptr, nullptr, &labels));
            check(tg_dataset_read(e.data.c_str(), labels, -1, &ds.h));
            char* json = nullptr;
            check(tg_evaluate_json(model.h, ds.h, e.tau, e.tuned ? 1 : 0, &json));
            std::string text = take_string(json);
            write_text(dir / "metrics.json", text);
            write_per_label_csv(text, dir / "per_label.csv");
            write_resolved_config(evalc, dir);
            std::cout << text << "\n";
        } else if (gc->parsed()) {
            char* json = nullptr;
            check(tg_gradcheck_json(g.seed, g.labels, g.instances, g.features, g.players,
                                    g.rho,
                                    g.backbone == "mlp1" ? TG_BACKBONE_MLP1
                                                         : TG_BACKBONE_IDENTITY,
                                    g.alpha, g.beta, g.h, g.tol, &json));
            std::string text = take_string(json);
            if (!g.out.empty()) {
                fs::path dir = prepare_out_dir(g.out);
                write_text(dir / "gradcheck.json", text);
                write_resolved_config(gc, dir);
            }
            std::cout << text << "\n";
            if (text.find("\"pass\": false") != std::string::npos)
                throw CliError{kExitNumeric, "gradient check failed"};
        } else if (bc->parsed()) {
            fs::path dir = prepare_out_dir(b.out);
            ModelHandle model;
            DatasetHandle ds;
            check(tg_model_read(b.checkpoint.c_str(), &model.h));
            int labels = 0;
            check(tg_model_dims(model.h, nullptr, nullptr, &labels));
            check(tg_dataset_read(b.data.c_str(), labels, -1, &ds.h));
            char* json = nullptr;
            check(tg_certificate_json(model.h, ds.h, b.tau, &json));
            std::string text = take_string(json);
            write_text(dir / "certificate.json", text);
            write_resolved_config(bc, dir);
            std::cout << text << "\n";
        } else if (diag->parsed()) {
            fs::path dir = prepare_out_dir(d.out);
            ModelHandle model;
            DatasetHandle ds;
            check(tg_model_read(d.checkpoint.c_str(), &model.h));
            int labels = 0;
            check(tg_model_dims(model.h, nullptr, nullptr, &labels));
            check(tg_dataset_read(d.data.c_str(), labels, -1, &ds.h));
            char* json = nullptr;
            check(tg_diagnose_json(model.h, ds.h, d.tau, &json));
            std::string text = take_string(json);
            write_text(dir / "specialization.json", text);
            write_specialization_csv(text, dir / "specialization.csv");
            write_resolved_config(diag, dir);
            std::cout << text << "\n";
        }
    } catch (const CliError& err) {
        std::cerr << "error: " << err.message << "\n";
        return err.code;
    }
    return kExitOk;
}
