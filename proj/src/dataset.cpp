#include "dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rng.hpp"

namespace tailgame {

void Dataset::add_instance(SparseRow row, const std::vector<int>& positive_labels) {
    for (int l : positive_labels)
        if (l < 0 || l >= num_labels_)
            throw DataError("label id " + std::to_string(l) + " outside [0, " +
                            std::to_string(num_labels_) + ")");
    rows_.push_back(std::move(row));
    labels_.resize(labels_.size() + num_labels_, 0);
    std::uint8_t* dst = labels_.data() + labels_.size() - num_labels_;
    for (int l : positive_labels) dst[l] = 1;
}

namespace {

bool parse_int(std::string_view tok, int& out) {
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc{} && p == tok.data() + tok.size();
}

bool parse_double(std::string_view tok, double& out) {
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc{} && p == tok.data() + tok.size();
}

struct ParsedLine {
    std::vector<int> labels;
    SparseRow row;
};

ParsedLine parse_line(std::string_view line, long line_no, int declared_labels,
                      int declared_features) {
    ParsedLine out;
    std::size_t pos = 0;
    bool empty_label_field = line.empty() || line[0] == ' ' || line[0] == '\t';

    if (!empty_label_field) {
        std::size_t end = line.find_first_of(" \t");
        std::string_view field = line.substr(0, end == std::string_view::npos ? line.size() : end);
        if (field.find(':') != std::string_view::npos)
            throw ParseError(line_no,
                             "missing label field (a line with no labels must start with whitespace)");
        std::size_t start = 0;
        while (start <= field.size()) {
            std::size_t comma = field.find(',', start);
            std::string_view tok = field.substr(
                start, comma == std::string_view::npos ? field.size() - start : comma - start);
            int lbl;
            if (tok.empty() || !parse_int(tok, lbl) || lbl < 0)
                throw ParseError(line_no, "bad label id '" + std::string(tok) + "'");
            if (declared_labels >= 0 && lbl >= declared_labels)
                throw ParseError(line_no, "label id " + std::to_string(lbl) +
                                              " >= declared label count " +
                                              std::to_string(declared_labels));
            out.labels.push_back(lbl);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        pos = end == std::string_view::npos ? line.size() : end;
    }

    while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
        if (pos >= line.size()) break;
        std::size_t end = line.find_first_of(" \t", pos);
        if (end == std::string_view::npos) end = line.size();
        std::string_view tok = line.substr(pos, end - pos);
        std::size_t colon = tok.find(':');
        if (colon == std::string_view::npos)
            throw ParseError(line_no, "expected idx:val, got '" + std::string(tok) + "'");
        int idx;
        double val;
        if (!parse_int(tok.substr(0, colon), idx) || idx < 0)
            throw ParseError(line_no, "bad feature index in '" + std::string(tok) + "'");
        if (!parse_double(tok.substr(colon + 1), val))
            throw ParseError(line_no, "bad feature value in '" + std::string(tok) + "'");
        if (declared_features >= 0 && idx >= declared_features)
            throw ParseError(line_no, "feature index " + std::to_string(idx) +
                                          " >= declared feature count " +
                                          std::to_string(declared_features));
        out.row.entries.push_back({idx, val});
        pos = end;
    }

    std::sort(out.row.entries.begin(), out.row.entries.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
    for (std::size_t i = 1; i < out.row.entries.size(); ++i)
        if (out.row.entries[i].index == out.row.entries[i - 1].index)
            throw ParseError(line_no, "duplicate feature index " +
                                          std::to_string(out.row.entries[i].index));
    std::sort(out.labels.begin(), out.labels.end());
    for (std::size_t i = 1; i < out.labels.size(); ++i)
        if (out.labels[i] == out.labels[i - 1])
            throw ParseError(line_no, "duplicate label id " + std::to_string(out.labels[i]));
    return out;
}

}  // namespace

Dataset parse_multilabel_svmlight(std::istream& in, int declared_labels,
                                  int declared_features) {
    std::vector<ParsedLine> lines;
    int max_label = -1, max_feature = -1;
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (raw.empty() || raw[0] == '#') continue;
        ParsedLine pl = parse_line(raw, line_no, declared_labels, declared_features);
        if (!pl.labels.empty()) max_label = std::max(max_label, pl.labels.back());
        if (!pl.row.entries.empty())
            max_feature = std::max(max_feature, pl.row.entries.back().index);
        lines.push_back(std::move(pl));
    }

    int num_labels = declared_labels >= 0 ? declared_labels : max_label + 1;
    int num_features = declared_features >= 0 ? declared_features : max_feature + 1;
    Dataset ds(num_features, num_labels);
    for (auto& pl : lines) ds.add_instance(std::move(pl.row), pl.labels);
    return ds;
}

Dataset read_multilabel_svmlight(const std::string& path, int declared_labels,
                                 int declared_features) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    Dataset ds = parse_multilabel_svmlight(in, declared_labels, declared_features);
    ds.name = path;
    return ds;
}

namespace {

void format_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

void serialize_multilabel_svmlight(const Dataset& ds, std::ostream& out) {
    std::string line;
    for (int m = 0; m < ds.num_instances(); ++m) {
        line.clear();
        bool first = true;
        for (int l = 0; l < ds.num_labels(); ++l) {
            if (!ds.label(m, l)) continue;
            if (!first) line += ',';
            line += std::to_string(l);
            first = false;
        }
        const SparseRow& row = ds.features(m);
        if (first && row.entries.empty()) {
            // no labels, no features: a lone space keeps the instance present
            out << " \n";
            continue;
        }
        if (first) line += ' ';  // empty label field marker
        for (const SparseEntry& e : row.entries) {
            line += ' ';
            line += std::to_string(e.index);
            line += ':';
            format_double(line, e.value);
        }
        out << line << '\n';
    }
}

void write_multilabel_svmlight(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    serialize_multilabel_svmlight(ds, out);
}

std::vector<int> ascending_order_from_freq(const std::vector<double>& freq,
                                           std::uint64_t tie_seed) {
    const int l_count = static_cast<int>(freq.size());
    // total order: frequency, then position in a seeded shuffle, then label id
    std::vector<int> tie_rank(l_count);
    std::iota(tie_rank.begin(), tie_rank.end(), 0);
    Rng rng(tie_seed, /*stream=*/0x7ae5);
    rng.shuffle(tie_rank);
    std::vector<int> rank_of(l_count);
    for (int i = 0; i < l_count; ++i) rank_of[tie_rank[i]] = i;

    std::vector<int> order(l_count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (freq[a] != freq[b]) return freq[a] < freq[b];
        if (rank_of[a] != rank_of[b]) return rank_of[a] < rank_of[b];
        return a < b;
    });
    return order;
}

LabelStats compute_label_stats(const Dataset& ds, std::uint64_t tie_seed) {
    const int m_count = ds.num_instances();
    if (m_count == 0) throw DataError("cannot compute label stats of an empty dataset");
    const int l_count = ds.num_labels();

    LabelStats stats;
    stats.positive_counts.assign(l_count, 0);
    for (int m = 0; m < m_count; ++m)
        for (int l = 0; l < l_count; ++l)
            if (ds.label(m, l)) ++stats.positive_counts[l];

    stats.freq.resize(l_count);
    for (int l = 0; l < l_count; ++l)
        stats.freq[l] = static_cast<double>(stats.positive_counts[l]) / m_count;

    stats.ascending_order = ascending_order_from_freq(stats.freq, tie_seed);
    return stats;
}

void write_stats_csv(const LabelStats& stats, std::ostream& out) {
    out << "label,freq,count\n";
    char buf[40];
    for (std::size_t l = 0; l < stats.freq.size(); ++l) {
        std::snprintf(buf, sizeof(buf), "%.17g", stats.freq[l]);
        out << l << ',' << buf << ',' << stats.positive_counts[l] << '\n';
    }
}

TailSet split_head_tail(const LabelStats& stats, double q, TailMode mode) {
    const int l_count = static_cast<int>(stats.freq.size());
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("tail fraction q must be in (0,1)");

    TailSet ts;
    ts.tail_fraction = q;
    ts.mode = mode;
    ts.is_tail.assign(l_count, 0);

    if (mode == TailMode::BottomFraction) {
        int k = static_cast<int>(std::floor(q * l_count));
        if (k == 0)
            throw ConfigError("degenerate tail: floor(q*L) = 0 for q=" + std::to_string(q) +
                              ", L=" + std::to_string(l_count));
        for (int i = 0; i < k; ++i) ts.is_tail[stats.ascending_order[i]] = 1;
    } else {
        double total = std::accumulate(stats.freq.begin(), stats.freq.end(), 0.0);
        if (total <= 0.0) throw DataError("cumulative-frequency split: no positive labels");
        // head = smallest prefix of the descending order reaching mass q
        double acc = 0.0;
        int head_count = 0;
        for (int i = l_count - 1; i >= 0; --i) {
            acc += stats.freq[stats.ascending_order[i]];
            ++head_count;
            if (acc >= q * total) break;
        }
        if (head_count == l_count)
            throw ConfigError("degenerate tail: cumulative head covers every label");
        for (int i = 0; i < l_count - head_count; ++i)
            ts.is_tail[stats.ascending_order[i]] = 1;
    }

    for (int l = 0; l < l_count; ++l)
        (ts.is_tail[l] ? ts.tail_labels : ts.head_labels).push_back(l);
    return ts;
}

RareVariantResult make_rare_variant(const Dataset& ds, const RareSplitConfig& cfg) {
    if (!(cfg.severity > 0.0 && cfg.severity < 1.0))
        throw ConfigError("rare-variant severity must be in (0,1)");
    LabelStats stats = compute_label_stats(ds);
    TailSet tail = split_head_tail(stats, cfg.tail_fraction, TailMode::BottomFraction);

    RareVariantResult res;
    res.dataset = ds;
    res.achieved_ratios.assign(ds.num_labels(), 0.0);

    Rng rng(cfg.seed, /*stream=*/0x5a17);
    // iterate in ascending-frequency order so RNG consumption is deterministic
    for (int l : stats.ascending_order) {
        if (!tail.is_tail[l]) continue;
        const long pos_count = stats.positive_counts[l];
        if (pos_count == 0) {
            res.skipped_labels.push_back(l);
            continue;
        }
        long flips = static_cast<long>(std::floor(cfg.severity * pos_count));
        res.achieved_ratios[l] = static_cast<double>(flips) / pos_count;
        if (flips == 0) continue;

        std::vector<int> pool;
        pool.reserve(pos_count);
        for (int m = 0; m < ds.num_instances(); ++m)
            if (ds.label(m, l)) pool.push_back(m);
        // partial Fisher-Yates: first `flips` entries are the sample
        for (long i = 0; i < flips; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        for (long i = 0; i < flips; ++i) res.dataset.set_label(pool[i], l, 0);
    }
    return res;
}

Dataset flip_label_noise(const Dataset& ds, double rho, std::uint64_t seed) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("noise rate rho must be in [0,1]");
    Dataset out = ds;
    if (rho == 0.0) return out;
    Rng rng(seed, /*stream=*/0xf11b);
    for (int m = 0; m < out.num_instances(); ++m)
        for (int l = 0; l < out.num_labels(); ++l)
            if (out.label(m, l) && rng.uniform() < rho) out.set_label(m, l, 0);
    return out;
}

Dataset generate_synthetic_longtail(const SynthConfig& cfg) {
    if (cfg.num_labels < 1 || cfg.num_instances < 1 || cfg.num_features < 1)
        throw ConfigError("synthetic dataset dimensions must be >= 1");
    if (!(cfg.exponent >= 0.0)) throw ConfigError("power-law exponent must be >= 0");
    if (!(cfg.prevalence_min > 0.0 && cfg.prevalence_min < cfg.prevalence_max &&
          cfg.prevalence_max < 1.0))
        throw ConfigError("infeasible prevalence range [" +
                          std::to_string(cfg.prevalence_min) + ", " +
                          std::to_string(cfg.prevalence_max) + "]");

    const int L = cfg.num_labels, M = cfg.num_instances, d = cfg.num_features;

    // target prevalences: pi_l ~ (l+1)^(-exponent), geometrically rescaled
    std::vector<double> raw(L);
    for (int l = 0; l < L; ++l) raw[l] = std::pow(static_cast<double>(l + 1), -cfg.exponent);
    double lo = *std::min_element(raw.begin(), raw.end());
    double hi = *std::max_element(raw.begin(), raw.end());
    std::vector<double> pi(L);
    if (hi == lo) {
        std::fill(pi.begin(), pi.end(), 0.5 * (cfg.prevalence_min + cfg.prevalence_max));
    } else {
        double llo = std::log(lo), lhi = std::log(hi);
        double plo = std::log(cfg.prevalence_min), phi = std::log(cfg.prevalence_max);
        for (int l = 0; l < L; ++l) {
            double u = (std::log(raw[l]) - llo) / (lhi - llo);
            pi[l] = std::exp(plo + u * (phi - plo));
        }
    }

    Rng feat_rng(cfg.seed, /*stream=*/0x0f3a);
    std::vector<std::vector<double>> latent(M, std::vector<double>(d));
    Dataset ds(d, L);
    for (int m = 0; m < M; ++m) {
        SparseRow row;
        row.entries.reserve(d);
        for (int j = 0; j < d; ++j) {
            double v = feat_rng.gaussian();
            latent[m][j] = v;
            row.entries.push_back({j, v});
        }
        ds.add_instance(std::move(row), {});
    }

    Rng scorer_rng(cfg.seed, /*stream=*/0x5c0e);
    std::vector<std::pair<double, int>> scored(M);
    for (int l = 0; l < L; ++l) {
        std::vector<double> w(d);
        for (int j = 0; j < d; ++j) w[j] = scorer_rng.gaussian();
        for (int m = 0; m < M; ++m) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += latent[m][j] * w[j];
            scored[m] = {s, m};
        }
        long k = std::lround(pi[l] * M);
        k = std::clamp(k, 0L, static_cast<long>(M));
        // top-k scores are the positives; empirical freq tracks pi by construction
        std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        for (long i = 0; i < k; ++i) ds.set_label(scored[i].second, l, 1);
    }
    ds.name = "synthetic";
    return ds;
}

}  // namespace tailgame
