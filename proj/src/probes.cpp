#include "commentcav/probes.hpp"

#include "commentcav/dataset.hpp"
#include "commentcav/util.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace commentcav {

namespace fs = std::filesystem;
using json = nlohmann::json;

double sigmoid(double z) {
    // Clamped so the result always lies strictly inside (0, 1).
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    constexpr double hi = 1.0 - 0x1.0p-53;
    double p;
    if (z >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        p = e / (1.0 + e);
    }
    return std::clamp(p, lo, hi);
}

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("logit: probability must lie in (0, 1)");
    }
    return std::log(p) - std::log1p(-p);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

struct Objective {
    const Eigen::MatrixXd & X; // n x (d+1), last column is 1
    const Eigen::VectorXd & y;
    double lambda;

    double value(const Eigen::VectorXd & theta) const {
        const Eigen::VectorXd z = X * theta;
        double loss = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            loss += softplus(z[i]) - y[i] * z[i];
        }
        const auto d = theta.size() - 1;
        return loss / static_cast<double>(z.size()) + 0.5 * lambda * theta.head(d).squaredNorm();
    }
};

} // namespace

TrainResult train_probe(const std::vector<Vector> & pos, const std::vector<Vector> & neg,
                        const TrainOptions & options) {
    if (pos.empty() || neg.empty()) {
        throw std::invalid_argument("train_probe: both classes need at least one example");
    }
    const size_t d = pos.front().size();
    if (d == 0) {
        throw std::invalid_argument("train_probe: zero-length vectors");
    }
    for (const auto * set : {&pos, &neg}) {
        for (const auto & v : *set) {
            if (v.size() != d) {
                throw std::invalid_argument("train_probe: dimension mismatch (" + std::to_string(v.size()) +
                                            " vs " + std::to_string(d) + ")");
            }
        }
    }
    if (options.tol <= 0.0) {
        throw std::invalid_argument("train_probe: tol must be positive");
    }
    const size_t n = pos.size() + neg.size();
    const double lambda = options.lambda.value_or(1.0 / static_cast<double>(n));
    if (lambda < 0.0) {
        throw std::invalid_argument("train_probe: lambda must be >= 0");
    }

    const auto cols = static_cast<Eigen::Index>(d + 1);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), cols);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    Eigen::Index row = 0;
    for (const auto & v : pos) {
        for (size_t j = 0; j < d; ++j) X(row, static_cast<Eigen::Index>(j)) = v[j];
        X(row, cols - 1) = 1.0;
        y[row++] = 1.0;
    }
    for (const auto & v : neg) {
        for (size_t j = 0; j < d; ++j) X(row, static_cast<Eigen::Index>(j)) = v[j];
        X(row, cols - 1) = 1.0;
        y[row++] = 0.0;
    }

    const Objective f{X, y, lambda};
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(cols);
    Eigen::VectorXd penalty_mask = Eigen::VectorXd::Ones(cols);
    penalty_mask[cols - 1] = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);

    TrainResult result;
    bool converged = false;
    size_t iter = 0;
    double grad_inf = 0.0;
    for (;; ++iter) {
        const Eigen::VectorXd z = X * theta;
        Eigen::VectorXd p(z.size()), curvature(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            p[i] = sigmoid(z[i]);
            curvature[i] = p[i] * (1.0 - p[i]);
        }
        const Eigen::VectorXd grad = inv_n * (X.transpose() * (p - y)) + lambda * penalty_mask.cwiseProduct(theta);
        grad_inf = grad.lpNorm<Eigen::Infinity>();
        if (grad_inf <= options.tol) {
            converged = true;
            break;
        }
        if (iter >= options.max_iter) {
            break;
        }

        Eigen::MatrixXd H = inv_n * (X.transpose() * curvature.asDiagonal() * X);
        H.diagonal() += lambda * penalty_mask;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd step = -grad;
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd newton = ldlt.solve(-grad);
            if (newton.allFinite() && newton.dot(grad) < 0.0) {
                step = newton;
            }
        }

        const double f0 = f.value(theta);
        const double slope = grad.dot(step);
        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            const Eigen::VectorXd candidate = theta + t * step;
            if (f.value(candidate) <= f0 + 1e-4 * t * slope) {
                theta = candidate;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // no representable decrease left
            break;
        }
    }

    Probe probe;
    probe.w.assign(theta.data(), theta.data() + d);
    probe.b = theta[cols - 1];
    probe.train_size = pos.size(); // in pairs
    probe.converged = converged;
    result.probe = std::move(probe);
    result.iterations = iter;
    result.gradient_norm = grad_inf;
    return result;
}

double predict(const Probe & probe, std::span<const double> e) {
    if (e.size() != probe.w.size()) {
        throw std::invalid_argument("predict: dimension mismatch (" + std::to_string(e.size()) + " vs " +
                                    std::to_string(probe.w.size()) + ")");
    }
    return sigmoid(dot(probe.w, e) + probe.b);
}

double accuracy(const Probe & probe, const std::vector<LabeledVector> & examples) {
    if (examples.empty()) {
        throw std::invalid_argument("accuracy: empty example set");
    }
    size_t correct = 0;
    for (const auto & ex : examples) {
        if ((predict(probe, ex.x) >= 0.5) == ex.label) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

Cav cav(const Probe & probe) {
    const double norm = std::sqrt(dot(probe.w, probe.w));
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw std::invalid_argument("cav: probe weight vector is zero");
    }
    Cav c;
    c.v.resize(probe.w.size());
    for (size_t i = 0; i < probe.w.size(); ++i) {
        c.v[i] = probe.w[i] / norm;
    }
    return c;
}

std::vector<size_t> train_size_grid(size_t test_size) {
    const size_t s = 2 * test_size;
    std::vector<size_t> sizes;
    for (double f : kTrainFractions) {
        // fractions are exact in hundredths: ceil(f*s) = ceil(k*s/100)
        const auto k = static_cast<size_t>(std::llround(f * 100.0));
        sizes.push_back((k * s + 99) / 100);
    }
    return sizes;
}

namespace {

std::vector<LabeledVector> labeled(const LayerPairs & data, const std::vector<size_t> & idx) {
    std::vector<LabeledVector> out;
    out.reserve(2 * idx.size());
    for (size_t i : idx) {
        out.push_back({data.pos[i], true});
        out.push_back({data.neg[i], false});
    }
    return out;
}

void check_pairs(const LayerPairs & data) {
    if (data.pos.size() != data.neg.size() || data.ids.size() != data.pos.size()) {
        throw std::invalid_argument("layer pairs: ids, pos and neg must have equal length");
    }
}

Probe fit_on(const LayerPairs & data, const std::vector<size_t> & train_idx, const TrainOptions & options) {
    std::vector<Vector> pos, neg;
    pos.reserve(train_idx.size());
    neg.reserve(train_idx.size());
    for (size_t i : train_idx) {
        pos.push_back(data.pos[i]);
        neg.push_back(data.neg[i]);
    }
    Probe p = train_probe(pos, neg, options).probe;
    p.layer = data.layer;
    p.train_size = train_idx.size();
    return p;
}

} // namespace

AccuracyCurve accuracy_curve(const LayerPairs & data, size_t test_size, uint64_t seed, const TrainOptions & options) {
    check_pairs(data);
    if (test_size == 0) {
        throw std::invalid_argument("accuracy_curve: test size must be positive");
    }
    const auto [train_idx, test_idx] = split_indices(data.ids.size(), SplitSpec{test_size, test_size, seed});
    const auto test_set = labeled(data, test_idx);

    AccuracyCurve curve;
    curve.layer = data.layer;
    for (size_t i : test_idx) {
        curve.test_ids.push_back(data.ids[i]);
    }
    for (size_t size : train_size_grid(test_size)) {
        const std::vector<size_t> prefix(train_idx.begin(), train_idx.begin() + static_cast<std::ptrdiff_t>(size));
        const Probe p = fit_on(data, prefix, options);
        curve.points.push_back({size, accuracy(p, test_set)});
    }
    return curve;
}

Probe train_layer_probe(const LayerPairs & data, ConceptKind concept_kind, size_t test_size, size_t train_size,
                        uint64_t seed, const TrainOptions & options) {
    check_pairs(data);
    const auto [train_idx, test_idx] = split_indices(data.ids.size(), SplitSpec{test_size, train_size, seed});
    Probe p = fit_on(data, train_idx, options);
    p.concept_kind = concept_kind;
    p.test_accuracy = accuracy(p, labeled(data, test_idx));
    return p;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("median: empty list");
    }
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) {
        return values[n / 2];
    }
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double dynamic_threshold(const std::map<std::pair<std::string, std::string>, std::vector<double>> & tables) {
    if (tables.empty()) {
        throw std::invalid_argument("dynamic_threshold: no accuracy tables");
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto & [key, accs] : tables) {
        if (accs.empty()) {
            throw std::invalid_argument("dynamic_threshold: empty table for (" + key.first + ", " + key.second + ")");
        }
        best = std::min(best, median(accs));
    }
    return best;
}

std::string probe_filename(ConceptKind concept_kind, size_t layer) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "probe_%s_L%03zu.json", to_string(concept_kind), layer);
    return buf;
}

void save_probe(const Probe & p, const fs::path & dir) {
    json j = {
        {"concept", to_string(p.concept_kind)},
        {"layer", p.layer},
        {"w", p.w},
        {"b", p.b},
        {"test_accuracy", p.test_accuracy},
        {"train_size", p.train_size},
        {"converged", p.converged},
        {"model_id", p.model_id},
    };
    write_file_atomic(dir / probe_filename(p.concept_kind, p.layer), j.dump(2) + "\n");
}

Probe load_probe(const fs::path & file) {
    try {
        const json j = json::parse(read_file(file));
        Probe p;
        const auto concept_kind = parse_concept(j.at("concept").get<std::string>());
        if (!concept_kind) {
            throw data_error("unknown concept in " + file.string());
        }
        p.concept_kind = *concept_kind;
        p.layer = j.at("layer").get<size_t>();
        p.w = j.at("w").get<Vector>();
        p.b = j.at("b").get<double>();
        p.test_accuracy = j.at("test_accuracy").get<double>();
        p.train_size = j.at("train_size").get<size_t>();
        p.converged = j.value("converged", true);
        p.model_id = j.value("model_id", std::string());
        if (p.layer == 0 || p.w.empty() || !(p.test_accuracy >= 0.0 && p.test_accuracy <= 1.0)) {
            throw data_error("invalid probe fields in " + file.string());
        }
        return p;
    } catch (const json::exception & e) {
        throw data_error("bad probe file " + file.string() + ": " + e.what());
    }
}

namespace {

bool is_probe_file(const fs::path & p) {
    const auto name = p.filename().string();
    return name.rfind("probe_", 0) == 0 && p.extension() == ".json";
}

} // namespace

std::map<size_t, Probe> load_probe_store(const fs::path & dir, std::optional<ConceptKind> concept_kind) {
    if (!fs::is_directory(dir)) {
        throw data_error("probe directory not found: " + dir.string());
    }
    std::map<size_t, Probe> out;
    for (const auto & entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_probe_file(entry.path())) {
            continue;
        }
        Probe p = load_probe(entry.path());
        if (concept_kind && p.concept_kind != *concept_kind) {
            continue;
        }
        if (out.count(p.layer)) {
            throw data_error("probe directory " + dir.string() + " holds two probes for layer " +
                             std::to_string(p.layer) + "; pass --concept to select one");
        }
        out.emplace(p.layer, std::move(p));
    }
    return out;
}

std::map<std::pair<std::string, std::string>, std::vector<double>> collect_accuracy_tables(const fs::path & root) {
    if (!fs::is_directory(root)) {
        throw data_error("probe root not found: " + root.string());
    }
    std::map<std::pair<std::string, std::string>, std::map<size_t, double>> by_layer;
    std::vector<fs::path> files;
    for (const auto & entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && is_probe_file(entry.path())) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto & f : files) {
        const Probe p = load_probe(f);
        const std::string model = p.model_id.empty() ? f.parent_path().generic_string() : p.model_id;
        by_layer[{to_string(p.concept_kind), model}][p.layer] = p.test_accuracy;
    }
    std::map<std::pair<std::string, std::string>, std::vector<double>> tables;
    for (const auto & [key, layers] : by_layer) {
        auto & accs = tables[key];
        for (const auto & [layer, acc] : layers) {
            accs.push_back(acc);
        }
    }
    return tables;
}

} // namespace commentcav
