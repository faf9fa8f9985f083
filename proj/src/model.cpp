#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "rng.hpp"

namespace tailgame {

double sigmoid(double z) {
    double p;
    if (z >= 0.0) {
        double e = std::exp(-z);
        p = 1.0 / (1.0 + e);
    } else {
        double e = std::exp(z);
        p = e / (1.0 + e);
    }
    // keep the value strictly inside (0,1) even for extreme logits
    if (p >= 1.0) p = 1.0 - std::numeric_limits<double>::epsilon() / 2;
    if (p <= 0.0) p = std::numeric_limits<double>::min();
    return p;
}

ModelState init_model(std::shared_ptr<const Partition> partition, int num_features,
                      BackboneKind backbone, int hidden_dim, double eps,
                      std::uint64_t seed) {
    if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("eps must be in (0, 1/2)");
    ModelState m;
    m.partition = std::move(partition);
    m.eps = eps;

    m.backbone.kind = backbone;
    m.backbone.in_dim = num_features;
    Rng rng(seed, /*stream=*/0x10d3);
    if (backbone == BackboneKind::Identity) {
        m.backbone.out_dim = num_features;
    } else {
        if (hidden_dim < 1) throw ConfigError("mlp1 hidden dim must be >= 1");
        m.backbone.out_dim = hidden_dim;
        m.backbone.w = Matrix(num_features, hidden_dim);
        double scale = 1.0 / std::sqrt(static_cast<double>(num_features));
        for (int i = 0; i < num_features; ++i)
            for (int j = 0; j < hidden_dim; ++j) m.backbone.w(i, j) = scale * rng.gaussian();
        m.backbone.b.assign(hidden_dim, 0.0);
    }

    const Partition& p = *m.partition;
    m.heads.resize(p.num_players());
    for (int i = 0; i < p.num_players(); ++i) {
        int rows = static_cast<int>(p.subsets[i].size());
        m.heads[i].w = Matrix(rows, m.backbone.out_dim);
        for (int a = 0; a < rows; ++a)
            for (int j = 0; j < m.backbone.out_dim; ++j)
                m.heads[i].w(a, j) = 0.01 * rng.gaussian();
        m.heads[i].b.assign(rows, 0.0);
    }

    m.fusion.logits.resize(p.num_labels);
    for (int l = 0; l < p.num_labels; ++l)
        m.fusion.logits[l].assign(p.active_players[l].size(), 0.0);
    return m;
}

Matrix forward_backbone(const BackboneParams& bb, const Dataset& ds,
                        std::span<const int> idx, Matrix* pre_activations) {
    if (ds.num_features() != bb.in_dim)
        throw DataError("feature dim mismatch: dataset has " +
                        std::to_string(ds.num_features()) + ", backbone expects " +
                        std::to_string(bb.in_dim));
    const int batch = static_cast<int>(idx.size());

    if (bb.kind == BackboneKind::Identity) {
        Matrix h(batch, bb.in_dim);
        for (int r = 0; r < batch; ++r)
            for (const SparseEntry& e : ds.features(idx[r]).entries)
                h(r, e.index) = e.value;
        return h;
    }

    Matrix pre(batch, bb.out_dim);
    for (int r = 0; r < batch; ++r) {
        double* dst = pre.row(r);
        for (int j = 0; j < bb.out_dim; ++j) dst[j] = bb.b[j];
        for (const SparseEntry& e : ds.features(idx[r]).entries) {
            const double v = e.value;
            const double* wrow = bb.w.row(e.index);
            for (int j = 0; j < bb.out_dim; ++j) dst[j] += v * wrow[j];
        }
    }
    Matrix h = pre;
    for (double& v : h.raw()) v = v > 0.0 ? v : 0.0;
    if (pre_activations) *pre_activations = std::move(pre);
    return h;
}

Matrix head_logits(const PlayerHead& head, const Matrix& feats) {
    if (feats.cols() != head.w.cols())
        throw DataError("feature dim mismatch in player head");
    const int batch = feats.rows();
    const int rows = head.w.rows();
    Matrix z(batch, rows);
    for (int m = 0; m < batch; ++m) {
        const double* f = feats.row(m);
        for (int a = 0; a < rows; ++a) {
            const double* w = head.w.row(a);
            double acc = head.b[a];
            for (int j = 0; j < feats.cols(); ++j) acc += f[j] * w[j];
            z(m, a) = acc;
        }
    }
    return z;
}

Matrix player_posteriors(const PlayerHead& head, const Matrix& feats) {
    Matrix p = head_logits(head, feats);
    for (double& v : p.raw()) v = sigmoid(v);
    return p;
}

std::vector<std::vector<double>> fusion_omegas(const FusionWeights& fw, const Partition& p) {
    std::vector<std::vector<double>> omega(p.num_labels);
    for (int l = 0; l < p.num_labels; ++l) {
        const auto& f = fw.logits[l];
        const std::size_t n = f.size();
        omega[l].resize(n);
        double mx = f[0];
        for (double v : f) mx = std::max(mx, v);
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            omega[l][k] = std::exp(f[k] - mx);
            sum += omega[l][k];
        }
        for (std::size_t k = 0; k < n; ++k) omega[l][k] /= sum;
    }
    return omega;
}

FusedPrediction fuse(const std::vector<Matrix>& posteriors,
                     const std::vector<std::vector<double>>& omega, const Partition& p,
                     double eps) {
    const int batch = posteriors.empty() ? 0 : posteriors[0].rows();
    FusedPrediction fp;
    fp.eps = eps;
    fp.raw = Matrix(batch, p.num_labels);
    for (int l = 0; l < p.num_labels; ++l) {
        const auto& active = p.active_players[l];
        if (active.empty())
            throw DataError("partition invariant violated: label " + std::to_string(l) +
                            " has no active player");
        for (std::size_t k = 0; k < active.size(); ++k) {
            const int i = active[k];
            const int slot = p.slot_of(i, l);
            const double w = omega[l][k];
            const Matrix& pi = posteriors[i];
            for (int m = 0; m < batch; ++m) fp.raw(m, l) += w * pi(m, slot);
        }
    }
    fp.clipped = fp.raw;
    const double hi = 1.0 - eps;
    for (double& v : fp.clipped.raw()) v = std::clamp(v, eps, hi);
    return fp;
}

Matrix threshold(const FusedPrediction& fp, const std::vector<double>& tau) {
    const Matrix& p = fp.clipped;
    if (static_cast<int>(tau.size()) != p.cols())
        throw DataError("threshold vector length mismatch");
    Matrix yhat(p.rows(), p.cols());
    for (int m = 0; m < p.rows(); ++m)
        for (int l = 0; l < p.cols(); ++l) yhat(m, l) = p(m, l) > tau[l] ? 1.0 : 0.0;
    return yhat;
}

ThresholdTuneResult tune_thresholds(const Matrix& val_scores, const Dataset& val) {
    if (val.num_instances() == 0) throw DataError("validation split is empty");
    if (val_scores.rows() != val.num_instances() || val_scores.cols() != val.num_labels())
        throw DataError("score matrix shape mismatch");
    const int m_count = val.num_instances();
    const int l_count = val.num_labels();

    ThresholdTuneResult res;
    res.thresholds.assign(l_count, 0.5);

    std::vector<std::pair<double, int>> scored(m_count);
    for (int l = 0; l < l_count; ++l) {
        long positives = 0;
        for (int m = 0; m < m_count; ++m) {
            scored[m] = {val_scores(m, l), val.label(m, l)};
            positives += val.label(m, l);
        }
        if (positives == 0) {
            res.fallback_labels.push_back(l);
            continue;
        }
        std::sort(scored.begin(), scored.end());

        std::vector<double> candidates;
        candidates.push_back(0.5);
        for (int m = 1; m < m_count; ++m)
            if (scored[m].first != scored[m - 1].first)
                candidates.push_back(0.5 * (scored[m - 1].first + scored[m].first));

        double best_f1 = -1.0, best_tau = 0.5;
        for (double tau : candidates) {
            long tp = 0, fp = 0;
            for (int m = 0; m < m_count; ++m) {
                if (scored[m].first >= tau) {
                    if (scored[m].second) ++tp; else ++fp;
                }
            }
            long fn = positives - tp;
            double f1 = (tp + fp + fn) == 0 ? 0.0
                                            : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
            if (f1 > best_f1 || (f1 == best_f1 && tau < best_tau)) {
                best_f1 = f1;
                best_tau = tau;
            }
        }
        res.thresholds[l] = best_tau;
    }
    return res;
}

namespace {

void put_double(std::ostream& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

void put_vector(std::ostream& out, const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ' ';
        put_double(out, v[i]);
    }
    out << '\n';
}

std::vector<double> get_vector(std::istream& in, std::size_t n, long& line_no) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(line_no, "unexpected end of checkpoint");
    ++line_no;
    std::istringstream ls(line);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!(ls >> v[i])) throw ParseError(line_no, "short numeric row");
    return v;
}

}  // namespace

void write_checkpoint(const ModelState& m, std::ostream& out) {
    const Partition& p = *m.partition;
    out << "tailgame-checkpoint v1\n";
    out << "sweeps " << m.trained_sweeps << '\n';
    out << "eps ";
    put_double(out, m.eps);
    out << '\n';
    out << "payoff_scheme "
        << (m.payoff_scheme == WeightScheme::Uniform ? "uniform" : "invfreq") << '\n';
    out << "backbone " << (m.backbone.kind == BackboneKind::Identity ? "identity" : "mlp1")
        << ' ' << m.backbone.in_dim << ' ' << m.backbone.out_dim << '\n';
    if (m.backbone.kind == BackboneKind::Mlp1) {
        for (int i = 0; i < m.backbone.in_dim; ++i) {
            std::vector<double> row(m.backbone.w.row(i), m.backbone.w.row(i) + m.backbone.out_dim);
            put_vector(out, row);
        }
        put_vector(out, m.backbone.b);
    }

    out << "labels " << p.num_labels << '\n';
    out << "players " << p.num_players() << '\n';
    out << "rho ";
    put_double(out, p.overlap_rho);
    out << '\n';
    out << "partition_seed " << p.seed << '\n';
    for (int i = 0; i < p.num_players(); ++i) {
        out << "subset " << i << ':';
        for (int l : p.subsets[i]) out << ' ' << l;
        out << '\n';
    }

    out << "train_freq\n";
    put_vector(out, m.train_freq);

    for (int i = 0; i < p.num_players(); ++i) {
        const PlayerHead& h = m.heads[i];
        out << "head " << i << ' ' << h.w.rows() << ' ' << h.w.cols() << '\n';
        for (int a = 0; a < h.w.rows(); ++a) {
            std::vector<double> row(h.w.row(a), h.w.row(a) + h.w.cols());
            put_vector(out, row);
        }
        put_vector(out, h.b);
    }

    out << "fusion\n";
    for (int l = 0; l < p.num_labels; ++l) put_vector(out, m.fusion.logits[l]);

    if (m.thresholds) {
        out << "thresholds\n";
        put_vector(out, *m.thresholds);
    } else {
        out << "thresholds none\n";
    }
}

void write_checkpoint_file(const ModelState& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_checkpoint(m, out);
}

ModelState parse_checkpoint(std::istream& in) {
    long line_no = 0;
    std::string line;
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw ParseError(line_no, "unexpected end of checkpoint");
        ++line_no;
    };

    next_line();
    if (line != "tailgame-checkpoint v1")
        throw ParseError(line_no, "expected header 'tailgame-checkpoint v1'");

    ModelState m;
    auto part = std::make_shared<Partition>();

    next_line();
    {
        std::istringstream ls(line);
        std::string key;
        ls >> key >> m.trained_sweeps;
        if (key != "sweeps") throw ParseError(line_no, "expected 'sweeps'");
    }
    next_line();
    {
        std::istringstream ls(line);
        std::string key;
        ls >> key >> m.eps;
        if (key != "eps") throw ParseError(line_no, "expected 'eps'");
    }
    next_line();
    {
        std::istringstream ls(line);
        std::string key, v;
        ls >> key >> v;
        if (key != "payoff_scheme") throw ParseError(line_no, "expected 'payoff_scheme'");
        if (v == "uniform") m.payoff_scheme = WeightScheme::Uniform;
        else if (v == "invfreq") m.payoff_scheme = WeightScheme::InverseFrequency;
        else throw ParseError(line_no, "unknown payoff scheme '" + v + "'");
    }
    next_line();
    {
        std::istringstream ls(line);
        std::string key, kind;
        ls >> key >> kind >> m.backbone.in_dim >> m.backbone.out_dim;
        if (key != "backbone" || !ls) throw ParseError(line_no, "expected 'backbone'");
        if (kind == "identity") m.backbone.kind = BackboneKind::Identity;
        else if (kind == "mlp1") m.backbone.kind = BackboneKind::Mlp1;
        else throw ParseError(line_no, "unknown backbone kind '" + kind + "'");
    }
    if (m.backbone.kind == BackboneKind::Mlp1) {
        m.backbone.w = Matrix(m.backbone.in_dim, m.backbone.out_dim);
        for (int i = 0; i < m.backbone.in_dim; ++i) {
            auto row = get_vector(in, m.backbone.out_dim, line_no);
            for (int j = 0; j < m.backbone.out_dim; ++j) m.backbone.w(i, j) = row[j];
        }
        m.backbone.b = get_vector(in, m.backbone.out_dim, line_no);
    }

    int num_players = 0;
    next_line();
    {
        std::istringstream ls(line);
        std::string key;
        ls >> key >> part->num_labels;
        if (key != "labels") throw ParseError(line_no, "expected 'labels'");
    }
    next_line();
    {
        std::istringstream ls(line);
        std::string key;
        ls >> key >> num_players;
        if (key != "players") throw ParseError(line_no, "expected 'players'");
    }
    next_line();
    {
        std::istringstream ls(line);
        std::string key;
        ls >> key >> part->overlap_rho;
        if (key != "rho") throw ParseError(line_no, "expected 'rho'");
    }
    next_line();
    {
        std::istringstream ls(line);
        std::string key;
        ls >> key >> part->seed;
        if (key != "partition_seed") throw ParseError(line_no, "expected 'partition_seed'");
    }
    part->subsets.resize(num_players);
    for (int i = 0; i < num_players; ++i) {
        next_line();
        std::istringstream ls(line);
        std::string key;
        int idx;
        char colon;
        ls >> key >> idx >> std::noskipws >> colon >> std::skipws;
        if (key != "subset" || idx != i || colon != ':')
            throw ParseError(line_no, "expected 'subset " + std::to_string(i) + ":'");
        int l;
        while (ls >> l) part->subsets[i].push_back(l);
    }
    part->active_players.assign(part->num_labels, {});
    for (int i = 0; i < num_players; ++i)
        for (int l : part->subsets[i]) {
            if (l < 0 || l >= part->num_labels)
                throw ParseError(line_no, "subset label out of range");
            part->active_players[l].push_back(i);
        }
    for (int l = 0; l < part->num_labels; ++l)
        if (part->active_players[l].empty())
            throw ParseError(line_no, "label " + std::to_string(l) + " has no player");

    next_line();
    if (line != "train_freq") throw ParseError(line_no, "expected 'train_freq'");
    m.train_freq = get_vector(in, part->num_labels, line_no);

    m.heads.resize(num_players);
    for (int i = 0; i < num_players; ++i) {
        next_line();
        std::istringstream ls(line);
        std::string key;
        int idx, rows, cols;
        ls >> key >> idx >> rows >> cols;
        if (key != "head" || idx != i || !ls) throw ParseError(line_no, "expected 'head' block");
        if (rows != static_cast<int>(part->subsets[i].size()))
            throw ParseError(line_no, "head row count does not match subset size");
        m.heads[i].w = Matrix(rows, cols);
        for (int a = 0; a < rows; ++a) {
            auto row = get_vector(in, cols, line_no);
            for (int j = 0; j < cols; ++j) m.heads[i].w(a, j) = row[j];
        }
        m.heads[i].b = get_vector(in, rows, line_no);
    }

    next_line();
    if (line != "fusion") throw ParseError(line_no, "expected 'fusion'");
    m.fusion.logits.resize(part->num_labels);
    for (int l = 0; l < part->num_labels; ++l)
        m.fusion.logits[l] = get_vector(in, part->active_players[l].size(), line_no);

    next_line();
    if (line == "thresholds") {
        m.thresholds = get_vector(in, part->num_labels, line_no);
    } else if (line != "thresholds none") {
        throw ParseError(line_no, "expected thresholds section");
    }

    m.partition = std::move(part);
    return m;
}

ModelState read_checkpoint_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return parse_checkpoint(in);
}

}  // namespace tailgame
