#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"
#include "matrix.hpp"
#include "model.hpp"
#include "objective.hpp"

namespace tailgame {

struct ConfusionCounts {
    long long tp = 0, fp = 0, fn = 0;
};

struct F1Slice {
    ConfusionCounts micro;
    double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
    double macro_f1 = 0.0;
    std::vector<ConfusionCounts> per_label;
    std::vector<double> per_label_f1;  // 0 when tp=fp=fn=0 (recorded convention)
};

struct RareF1 {
    double macro_tail = 0.0;  // mean per-label F1 over the tail set
    double micro_tail = 0.0;  // F1 of count-aggregated tail confusion
    ConfusionCounts tail_counts;
};

struct MetricsReport {
    F1Slice f1;
    RareF1 rare;
    double map = 0.0;
    double p_at_1 = 0.0, p_at_3 = 0.0, p_at_5 = 0.0;
    double tail_sample_f1 = 0.0;  // instance-averaged tail F1 (diagnostic)
    std::vector<double> thresholds;
    std::string to_json() const;
};

struct BoundCertificate {
    double tau = 0.5;
    double kappa = 0.0;
    double z = 0.0;
    double z_tail = 0.0;
    double w_min_tail = 0.0;
    double mu_pos_tail = 0.0;  // mean tail positives per instance on the eval set
    double payoff = 0.0;       // R on the eval set
    double payoff_tail = 0.0;  // tail-only R_T
    double bound = 0.0;        // 1 - kappa*Z*(-R) / (2*mu_pos_tail*w_min_tail)
    double bound_tail_only = 0.0;
    double observed_micro_tail_f1 = 0.0;
    double slack = 0.0;  // observed - bound
    std::string to_json() const;
};

struct SpecializationReport {
    bool empty = false;
    std::string note;
    std::vector<int> labels;                     // overlap labels covered (>= 2 players)
    std::vector<std::vector<double>> accuracy;   // label index -> per active player
    std::vector<std::vector<int>> players;       // label index -> active player ids
    std::vector<double> mean_rank_rare;          // per player, NaN when never active
    std::vector<double> mean_rank_frequent;
    std::vector<double> share_rare;              // percentages, sum to 100 per group
    std::vector<double> share_frequent;
    std::string to_json() const;
};

// predictions from scores with per-label thresholds; metric convention is
// yhat = 1{score >= tau}
Matrix predictions_at(const Matrix& scores, const std::vector<double>& tau);

F1Slice micro_macro_f1(const Matrix& preds, const Dataset& truth);
RareF1 rare_f1(const Matrix& preds, const Dataset& truth, const TailSet& tail);

// mean of per-instance tail F1 (0/0 counted as 0, as in the macro convention)
double instance_tail_f1_mean(const Matrix& preds, const Dataset& truth, const TailSet& tail);

// all-points-interpolation AP averaged over labels with test positives; ties
// broken by ascending instance index
double mean_average_precision(const Matrix& scores, const Dataset& truth);

// per-instance top-k hit rate; ties broken by ascending label id
double precision_at_k(const Matrix& scores, const Dataset& truth, int k);

double kappa(double tau);

BoundCertificate rare_f1_lower_bound(double payoff, double payoff_tail, double tau,
                                     const PayoffWeights& pw, const TailSet& tail,
                                     double mu_pos_tail, double observed_micro_tail_f1,
                                     double eps);

MetricsReport evaluate_model(const ModelState& model, const Dataset& eval,
                             const std::vector<double>& thresholds);

BoundCertificate certify_model(const ModelState& model, const Dataset& eval, double tau);

SpecializationReport specialization_report(const ModelState& model, const Dataset& eval,
                                           const TailSet& tail,
                                           const std::vector<double>& thresholds);

}  // namespace tailgame
