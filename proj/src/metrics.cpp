#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace tailgame {

namespace {

double f1_from(const ConfusionCounts& c) {
    const long long denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

}  // namespace

Matrix predictions_at(const Matrix& scores, const std::vector<double>& tau) {
    if (static_cast<int>(tau.size()) != scores.cols())
        throw DataError("threshold vector length mismatch");
    Matrix preds(scores.rows(), scores.cols());
    for (int m = 0; m < scores.rows(); ++m)
        for (int l = 0; l < scores.cols(); ++l)
            preds(m, l) = scores(m, l) >= tau[l] ? 1.0 : 0.0;
    return preds;
}

F1Slice micro_macro_f1(const Matrix& preds, const Dataset& truth) {
    const int m_count = truth.num_instances();
    const int l_count = truth.num_labels();
    if (preds.rows() != m_count || preds.cols() != l_count)
        throw DataError("prediction matrix shape mismatch");

    F1Slice out;
    out.per_label.assign(l_count, {});
    for (int m = 0; m < m_count; ++m) {
        for (int l = 0; l < l_count; ++l) {
            const bool y = truth.label(m, l) != 0;
            const bool yhat = preds(m, l) != 0.0;
            if (y && yhat) ++out.per_label[l].tp;
            else if (!y && yhat) ++out.per_label[l].fp;
            else if (y && !yhat) ++out.per_label[l].fn;
        }
    }
    out.per_label_f1.resize(l_count);
    double macro_sum = 0.0;
    for (int l = 0; l < l_count; ++l) {
        out.micro.tp += out.per_label[l].tp;
        out.micro.fp += out.per_label[l].fp;
        out.micro.fn += out.per_label[l].fn;
        out.per_label_f1[l] = f1_from(out.per_label[l]);
        macro_sum += out.per_label_f1[l];
    }
    out.macro_f1 = macro_sum / l_count;
    out.micro_precision = (out.micro.tp + out.micro.fp) == 0
                              ? 0.0
                              : static_cast<double>(out.micro.tp) / (out.micro.tp + out.micro.fp);
    out.micro_recall = (out.micro.tp + out.micro.fn) == 0
                           ? 0.0
                           : static_cast<double>(out.micro.tp) / (out.micro.tp + out.micro.fn);
    out.micro_f1 = f1_from(out.micro);
    return out;
}

RareF1 rare_f1(const Matrix& preds, const Dataset& truth, const TailSet& tail) {
    if (tail.tail_labels.empty()) throw DataError("empty tail set");
    F1Slice slice = micro_macro_f1(preds, truth);
    RareF1 out;
    double sum = 0.0;
    for (int l : tail.tail_labels) {
        sum += slice.per_label_f1[l];
        out.tail_counts.tp += slice.per_label[l].tp;
        out.tail_counts.fp += slice.per_label[l].fp;
        out.tail_counts.fn += slice.per_label[l].fn;
    }
    out.macro_tail = sum / static_cast<double>(tail.tail_labels.size());
    out.micro_tail = f1_from(out.tail_counts);
    return out;
}

double instance_tail_f1_mean(const Matrix& preds, const Dataset& truth, const TailSet& tail) {
    if (tail.tail_labels.empty()) throw DataError("empty tail set");
    const int m_count = truth.num_instances();
    double sum = 0.0;
    for (int m = 0; m < m_count; ++m) {
        ConfusionCounts c;
        for (int l : tail.tail_labels) {
            const bool y = truth.label(m, l) != 0;
            const bool yhat = preds(m, l) != 0.0;
            if (y && yhat) ++c.tp;
            else if (!y && yhat) ++c.fp;
            else if (y && !yhat) ++c.fn;
        }
        sum += f1_from(c);
    }
    return sum / m_count;
}

double mean_average_precision(const Matrix& scores, const Dataset& truth) {
    const int m_count = truth.num_instances();
    const int l_count = truth.num_labels();
    if (scores.rows() != m_count || scores.cols() != l_count)
        throw DataError("score matrix shape mismatch");

    std::vector<int> order(m_count);
    double ap_sum = 0.0;
    int labels_counted = 0;
    for (int l = 0; l < l_count; ++l) {
        long long positives = 0;
        for (int m = 0; m < m_count; ++m) positives += truth.label(m, l);
        if (positives == 0) continue;  // ignored in the mean

        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores(a, l) != scores(b, l)) return scores(a, l) > scores(b, l);
            return a < b;
        });
        long long hits = 0;
        double ap = 0.0;
        for (int t = 0; t < m_count; ++t) {
            if (truth.label(order[t], l)) {
                ++hits;
                ap += static_cast<double>(hits) / (t + 1);
            }
        }
        ap_sum += ap / static_cast<double>(positives);
        ++labels_counted;
    }
    if (labels_counted == 0)
        throw NumericError("mAP undefined: no label has a positive instance");
    return ap_sum / labels_counted;
}

double precision_at_k(const Matrix& scores, const Dataset& truth, int k) {
    const int m_count = truth.num_instances();
    const int l_count = truth.num_labels();
    if (k < 1 || k > l_count)
        throw ConfigError("precision@k requires 1 <= k <= L, got k=" + std::to_string(k));
    if (scores.rows() != m_count || scores.cols() != l_count)
        throw DataError("score matrix shape mismatch");

    std::vector<int> order(l_count);
    double total = 0.0;
    for (int m = 0; m < m_count; ++m) {
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
            if (scores(m, a) != scores(m, b)) return scores(m, a) > scores(m, b);
            return a < b;
        });
        int hits = 0;
        for (int t = 0; t < k; ++t) hits += truth.label(m, order[t]);
        total += static_cast<double>(hits) / k;
    }
    return total / m_count;
}

double kappa(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("kappa: tau must be in (0,1)");
    return std::max(1.0 / -std::log(1.0 - tau), 1.0 / -std::log(tau));
}

BoundCertificate rare_f1_lower_bound(double payoff, double payoff_tail, double tau,
                                     const PayoffWeights& pw, const TailSet& tail,
                                     double mu_pos_tail, double observed_micro_tail_f1,
                                     double eps) {
    if (!(tau > eps && tau < 1.0 - eps))
        throw ConfigError("certificate: tau must be in (eps, 1-eps)");
    if (mu_pos_tail <= 0.0)
        throw DataError("certificate: evaluation set has no tail positives");

    BoundCertificate c;
    c.tau = tau;
    c.kappa = kappa(tau);
    c.z = pw.z;
    c.z_tail = 0.0;
    for (int l : tail.tail_labels) c.z_tail += pw.w[l];
    c.w_min_tail = min_tail_weight(pw, tail);
    c.mu_pos_tail = mu_pos_tail;
    c.payoff = payoff;
    c.payoff_tail = payoff_tail;
    c.bound = 1.0 - c.kappa * c.z * (-payoff) / (2.0 * mu_pos_tail * c.w_min_tail);
    c.bound_tail_only =
        1.0 - c.kappa * c.z_tail * (-payoff_tail) / (2.0 * mu_pos_tail * c.w_min_tail);
    c.observed_micro_tail_f1 = observed_micro_tail_f1;
    c.slack = observed_micro_tail_f1 - c.bound;
    return c;
}

MetricsReport evaluate_model(const ModelState& model, const Dataset& eval,
                             const std::vector<double>& thresholds) {
    std::vector<int> all(eval.num_instances());
    std::iota(all.begin(), all.end(), 0);
    Matrix feats = forward_backbone(model.backbone, eval, all);
    std::vector<Matrix> posteriors(model.num_players());
    for (int i = 0; i < model.num_players(); ++i)
        posteriors[i] = player_posteriors(model.heads[i], feats);
    FusedPrediction fp =
        fuse(posteriors, fusion_omegas(model.fusion, *model.partition), *model.partition,
             model.eps);

    LabelStats train_stats;
    train_stats.freq = model.train_freq;
    train_stats.ascending_order = ascending_order_from_freq(model.train_freq);
    TailSet tail = split_head_tail(train_stats, 0.2, TailMode::BottomFraction);

    MetricsReport rep;
    rep.thresholds = thresholds;
    Matrix preds = predictions_at(fp.clipped, thresholds);
    rep.f1 = micro_macro_f1(preds, eval);
    rep.rare = rare_f1(preds, eval, tail);
    rep.tail_sample_f1 = instance_tail_f1_mean(preds, eval, tail);
    rep.map = mean_average_precision(fp.clipped, eval);
    rep.p_at_1 = precision_at_k(fp.clipped, eval, 1);
    if (eval.num_labels() >= 3) rep.p_at_3 = precision_at_k(fp.clipped, eval, 3);
    if (eval.num_labels() >= 5) rep.p_at_5 = precision_at_k(fp.clipped, eval, 5);
    return rep;
}

BoundCertificate certify_model(const ModelState& model, const Dataset& eval, double tau) {
    std::vector<int> all(eval.num_instances());
    std::iota(all.begin(), all.end(), 0);
    Matrix feats = forward_backbone(model.backbone, eval, all);
    std::vector<Matrix> posteriors(model.num_players());
    for (int i = 0; i < model.num_players(); ++i)
        posteriors[i] = player_posteriors(model.heads[i], feats);
    FusedPrediction fp =
        fuse(posteriors, fusion_omegas(model.fusion, *model.partition), *model.partition,
             model.eps);

    LabelStats train_stats;
    train_stats.freq = model.train_freq;
    train_stats.ascending_order = ascending_order_from_freq(model.train_freq);
    TailSet tail = split_head_tail(train_stats, 0.2, TailMode::BottomFraction);

    PayoffWeights pw = make_payoff_weights(model.payoff_scheme, model.train_freq);
    BatchView batch{&eval, all};
    const double payoff = global_payoff(fp.clipped, model.eps, batch, pw);
    const double payoff_t = tail_payoff(fp.clipped, model.eps, batch, pw, tail);

    long long tail_pos = 0;
    for (int m = 0; m < eval.num_instances(); ++m)
        for (int l : tail.tail_labels) tail_pos += eval.label(m, l);
    const double mu_pos = static_cast<double>(tail_pos) / eval.num_instances();

    std::vector<double> tau_vec(eval.num_labels(), tau);
    Matrix preds = predictions_at(fp.clipped, tau_vec);
    RareF1 rf = rare_f1(preds, eval, tail);

    return rare_f1_lower_bound(payoff, payoff_t, tau, pw, tail, mu_pos, rf.micro_tail,
                               model.eps);
}

SpecializationReport specialization_report(const ModelState& model, const Dataset& eval,
                                           const TailSet& tail,
                                           const std::vector<double>& thresholds) {
    const Partition& part = *model.partition;
    std::vector<int> all(eval.num_instances());
    std::iota(all.begin(), all.end(), 0);
    Matrix feats = forward_backbone(model.backbone, eval, all);
    std::vector<Matrix> posteriors(model.num_players());
    for (int i = 0; i < model.num_players(); ++i)
        posteriors[i] = player_posteriors(model.heads[i], feats);

    SpecializationReport rep;
    const int n = part.num_players();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    std::vector<double> rank_sum_rare(n, 0.0), rank_sum_freq(n, 0.0);
    std::vector<int> rank_cnt_rare(n, 0), rank_cnt_freq(n, 0);
    std::vector<double> share_rare(n, 0.0), share_freq(n, 0.0);
    int rare_labels = 0, freq_labels = 0;

    for (int l = 0; l < part.num_labels; ++l) {
        const auto& active = part.active_players[l];
        if (active.size() < 2) continue;  // single-player labels excluded

        std::vector<double> acc(active.size(), 0.0);
        for (std::size_t k = 0; k < active.size(); ++k) {
            const int i = active[k];
            const int slot = part.slot_of(i, l);
            long long correct = 0;
            for (int m = 0; m < eval.num_instances(); ++m) {
                const bool yhat = posteriors[i](m, slot) > thresholds[l];
                if (yhat == (eval.label(m, l) != 0)) ++correct;
            }
            acc[k] = static_cast<double>(correct) / eval.num_instances();
        }
        rep.labels.push_back(l);
        rep.accuracy.push_back(acc);
        rep.players.push_back(active);

        // ranks: 1 = best accuracy, ties averaged
        std::vector<double> rank(active.size(), 0.0);
        for (std::size_t k = 0; k < active.size(); ++k) {
            int better = 0, equal = 0;
            for (std::size_t j = 0; j < active.size(); ++j) {
                if (acc[j] > acc[k]) ++better;
                if (acc[j] == acc[k]) ++equal;
            }
            rank[k] = better + 0.5 * (equal + 1);
        }
        const double best = *std::max_element(acc.begin(), acc.end());
        int tied_best = 0;
        for (double a : acc) tied_best += a == best;

        const bool is_rare = tail.is_tail[l] != 0;
        (is_rare ? rare_labels : freq_labels)++;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const int i = active[k];
            if (is_rare) {
                rank_sum_rare[i] += rank[k];
                ++rank_cnt_rare[i];
                if (acc[k] == best) share_rare[i] += 1.0 / tied_best;
            } else {
                rank_sum_freq[i] += rank[k];
                ++rank_cnt_freq[i];
                if (acc[k] == best) share_freq[i] += 1.0 / tied_best;
            }
        }
    }

    if (rep.labels.empty()) {
        rep.empty = true;
        rep.note = "no label has two or more active players";
        return rep;
    }

    rep.mean_rank_rare.assign(n, nan);
    rep.mean_rank_frequent.assign(n, nan);
    rep.share_rare.assign(n, 0.0);
    rep.share_frequent.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        if (rank_cnt_rare[i]) rep.mean_rank_rare[i] = rank_sum_rare[i] / rank_cnt_rare[i];
        if (rank_cnt_freq[i]) rep.mean_rank_frequent[i] = rank_sum_freq[i] / rank_cnt_freq[i];
        if (rare_labels) rep.share_rare[i] = 100.0 * share_rare[i] / rare_labels;
        if (freq_labels) rep.share_frequent[i] = 100.0 * share_freq[i] / freq_labels;
    }
    return rep;
}

namespace {

nlohmann::json counts_json(const ConfusionCounts& c) {
    return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
}

double json_safe(double v) { return std::isfinite(v) ? v : 0.0; }

}  // namespace

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["micro"] = {{"precision", f1.micro_precision},
                  {"recall", f1.micro_recall},
                  {"f1", f1.micro_f1},
                  {"counts", counts_json(f1.micro)}};
    j["macro_f1"] = f1.macro_f1;
    j["rare_f1"] = rare.macro_tail;
    j["rare_f1_micro"] = rare.micro_tail;
    j["rare_counts"] = counts_json(rare.tail_counts);
    j["tail_sample_f1"] = tail_sample_f1;
    j["map"] = map;
    j["p_at_1"] = p_at_1;
    j["p_at_3"] = p_at_3;
    j["p_at_5"] = p_at_5;
    nlohmann::json pl = nlohmann::json::array();
    for (std::size_t l = 0; l < f1.per_label_f1.size(); ++l) {
        pl.push_back({{"label", l},
                      {"f1", f1.per_label_f1[l]},
                      {"counts", counts_json(f1.per_label[l])}});
    }
    j["per_label"] = pl;
    j["thresholds"] = thresholds;
    j["zero_denominator_f1_convention"] = "per-label F1 is 0 when tp=fp=fn=0";
    return j.dump(2);
}

std::string BoundCertificate::to_json() const {
    nlohmann::json j;
    j["tau"] = tau;
    j["kappa"] = kappa;
    j["z"] = z;
    j["z_tail"] = z_tail;
    j["w_min_tail"] = w_min_tail;
    j["mu_pos_tail"] = mu_pos_tail;
    j["payoff"] = payoff;
    j["payoff_tail"] = payoff_tail;
    j["bound"] = bound;
    j["bound_tail_only"] = bound_tail_only;
    j["observed_micro_tail_f1"] = observed_micro_tail_f1;
    j["slack"] = slack;
    return j.dump(2);
}

std::string SpecializationReport::to_json() const {
    nlohmann::json j;
    if (empty) {
        j["empty"] = true;
        j["note"] = note;
        return j.dump(2);
    }
    nlohmann::json per_label = nlohmann::json::array();
    for (std::size_t k = 0; k < labels.size(); ++k)
        per_label.push_back(
            {{"label", labels[k]}, {"players", players[k]}, {"accuracy", accuracy[k]}});
    j["per_label"] = per_label;
    auto dump_vec = [](const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(json_safe(x));
        return a;
    };
    j["mean_rank_rare"] = dump_vec(mean_rank_rare);
    j["mean_rank_frequent"] = dump_vec(mean_rank_frequent);
    j["share_rare_pct"] = dump_vec(share_rare);
    j["share_frequent_pct"] = dump_vec(share_frequent);
    return j.dump(2);
}

}  // namespace tailgame
