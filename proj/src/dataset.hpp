#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace tailgame {

struct SparseEntry {
    std::int32_t index;
    double value;
};

// One instance's features, sorted by ascending index.
struct SparseRow {
    std::vector<SparseEntry> entries;
};

// Sparse instance features plus a dense binary label matrix.
class Dataset {
public:
    Dataset() = default;
    Dataset(int num_features, int num_labels)
        : num_features_(num_features), num_labels_(num_labels) {}

    int num_instances() const { return static_cast<int>(rows_.size()); }
    int num_features() const { return num_features_; }
    int num_labels() const { return num_labels_; }

    const SparseRow& features(int m) const { return rows_[m]; }

    std::uint8_t label(int m, int l) const {
        return labels_[static_cast<std::size_t>(m) * num_labels_ + l];
    }
    void set_label(int m, int l, std::uint8_t v) {
        labels_[static_cast<std::size_t>(m) * num_labels_ + l] = v;
    }
    const std::vector<std::uint8_t>& label_matrix() const { return labels_; }

    void add_instance(SparseRow row, const std::vector<int>& positive_labels);

    std::string name;

private:
    int num_features_ = 0;
    int num_labels_ = 0;
    std::vector<SparseRow> rows_;
    std::vector<std::uint8_t> labels_;  // num_instances x num_labels, row-major
};

// Empirical per-label prevalences and a total order of labels by frequency.
struct LabelStats {
    std::vector<double> freq;          // positive_counts[l] / M
    std::vector<long> positive_counts;
    std::vector<int> ascending_order;  // label ids sorted by freq; ties broken
                                       // by a seeded shuffle, then label id
};

enum class TailMode { BottomFraction, CumulativeFrequency };

struct TailSet {
    std::vector<int> tail_labels;  // sorted ascending
    std::vector<int> head_labels;  // sorted ascending
    std::vector<std::uint8_t> is_tail;
    double tail_fraction = 0.2;
    TailMode mode = TailMode::BottomFraction;
};

struct RareSplitConfig {
    double severity = 0.3;       // fraction of tail positives flipped to 0
    double tail_fraction = 0.2;  // bottom-q labels by training frequency
    std::uint64_t seed = 0;
};

struct RareVariantResult {
    Dataset dataset;
    std::vector<double> achieved_ratios;  // floor(sigma*P_l)/P_l on tail, 0 elsewhere
    std::vector<int> skipped_labels;      // tail labels with no positives to flip
};

struct SynthConfig {
    int num_labels = 50;
    int num_instances = 2000;
    int num_features = 32;
    double exponent = 1.5;
    std::uint64_t seed = 0;
    double prevalence_min = 0.01;
    double prevalence_max = 0.5;
};

// Multilabel svmlight text: `lbl[,lbl...] idx:val [idx:val...]` per line.
// A line starting with whitespace has no positive labels; '#' lines and fully
// empty lines are skipped. declared_labels / declared_features < 0 means
// "infer from the data".
Dataset parse_multilabel_svmlight(std::istream& in, int declared_labels = -1,
                                  int declared_features = -1);
Dataset read_multilabel_svmlight(const std::string& path, int declared_labels = -1,
                                 int declared_features = -1);
void serialize_multilabel_svmlight(const Dataset& ds, std::ostream& out);
void write_multilabel_svmlight(const Dataset& ds, const std::string& path);

LabelStats compute_label_stats(const Dataset& ds, std::uint64_t tie_seed = 0);

// total order by frequency with the seeded-shuffle tie-break; also used to
// rebuild a training tail set from a checkpoint's stored prevalences
std::vector<int> ascending_order_from_freq(const std::vector<double>& freq,
                                           std::uint64_t tie_seed = 0);

// CSV export: `label,freq,count`
void write_stats_csv(const LabelStats& stats, std::ostream& out);

TailSet split_head_tail(const LabelStats& stats, double q,
                        TailMode mode = TailMode::BottomFraction);

RareVariantResult make_rare_variant(const Dataset& ds, const RareSplitConfig& cfg);

// Each positive entry is independently flipped to 0 with probability rho.
Dataset flip_label_noise(const Dataset& ds, double rho, std::uint64_t seed);

// Power-law prevalence targets over a shared Gaussian latent draw; per label a
// random linear scorer marks the top round(pi_l * M) instances positive.
Dataset generate_synthetic_longtail(const SynthConfig& cfg);

}  // namespace tailgame
