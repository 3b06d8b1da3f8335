#pragma once

#include "commentcav/comment_parser.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace commentcav {

using Vector = std::vector<double>;

// Per-layer logistic classifier; label 1 means the concept is present.
struct Probe {
    ConceptKind concept_kind = ConceptKind::Comment;
    size_t layer = 1;
    Vector w;
    double b = 0.0;
    double test_accuracy = 0.0;
    size_t train_size = 0; // pairs, not examples
    // not part of the classifier itself
    bool converged = true;
    std::string model_id;
};

struct TrainOptions {
    std::optional<double> lambda; // default 1 / n_train
    double tol = 1e-6;
    size_t max_iter = 500;
};

struct TrainResult {
    Probe probe;
    size_t iterations = 0;
    double gradient_norm = 0.0; // infinity norm at exit
};

// Minimizes mean logistic loss + (lambda/2)|w|^2 (bias unpenalized) with a
// damped Newton method started from zero.
TrainResult train_probe(const std::vector<Vector> & pos, const std::vector<Vector> & neg,
                        const TrainOptions & options = {});

double sigmoid(double z);
double logit(double p);

double predict(const Probe & probe, std::span<const double> e);

struct LabeledVector {
    Vector x;
    bool label = false;
};

// Fraction with (predict >= 0.5) == label.
double accuracy(const Probe & probe, const std::vector<LabeledVector> & examples);

// Unit-norm Concept Activation Vector.
struct Cav {
    Vector v;
};

Cav cav(const Probe & probe);

// Last-token embeddings of one layer, aligned by pair: pos[i] and neg[i] come
// from the pair ids[i].
struct LayerPairs {
    size_t layer = 1;
    std::vector<std::string> ids;
    std::vector<Vector> pos;
    std::vector<Vector> neg;
};

inline constexpr double kTrainFractions[] = {0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};

struct CurvePoint {
    size_t train_size = 0;
    double test_accuracy = 0.0;
};

struct AccuracyCurve {
    size_t layer = 1;
    std::vector<std::string> test_ids;
    std::vector<CurvePoint> points;
};

// Train sizes ceil(f * 2n) for every grid fraction f.
std::vector<size_t> train_size_grid(size_t test_size);

// Fixed n-pair test set, growing train prefix; one point per grid size.
AccuracyCurve accuracy_curve(const LayerPairs & data, size_t test_size, uint64_t seed,
                             const TrainOptions & options = {});

// Trains on train_size pairs and scores on the fixed test set.
Probe train_layer_probe(const LayerPairs & data, ConceptKind concept_kind, size_t test_size, size_t train_size,
                        uint64_t seed, const TrainOptions & options = {});

// Median of each table (mean of the two middle values for even length), then
// the minimum over tables.
double median(std::vector<double> values);
double dynamic_threshold(const std::map<std::pair<std::string, std::string>, std::vector<double>> & tables);

// Probe store: one JSON file per (concept, layer).
std::string probe_filename(ConceptKind concept_kind, size_t layer);
void save_probe(const Probe & probe, const std::filesystem::path & dir);
Probe load_probe(const std::filesystem::path & file);
// All probe files directly inside dir, keyed by layer; optionally filtered.
std::map<size_t, Probe> load_probe_store(const std::filesystem::path & dir,
                                         std::optional<ConceptKind> concept_kind = std::nullopt);
// Groups every probe file under root (recursively) by (concept, model id)
// into per-layer accuracy lists ordered by layer.
std::map<std::pair<std::string, std::string>, std::vector<double>>
collect_accuracy_tables(const std::filesystem::path & root);

} // namespace commentcav
