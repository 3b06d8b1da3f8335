#pragma once

#include "commentcav/dataset.hpp"
#include "commentcav/metrics.hpp"
#include "commentcav/probes.hpp"
#include "commentcav/steering.hpp"
#include "commentcav/tinylm.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace commentcav {

inline constexpr const char * kToolVersion = "0.1.0";

// ---- embeddings -----------------------------------------------------------

// Last-token states of one text at every layer; label 1 = concept present.
struct EmbeddingRecord {
    std::string id;
    int label = 0;
    std::vector<Vector> layers;
};

struct EmbedResult {
    std::vector<EmbeddingRecord> records; // positive then negative, per pair
    std::vector<std::string> skipped;     // pair ids over max_seq
};

EmbedResult embed_pairs(const tinylm::Model & model, const std::vector<ExamplePair> & pairs);

std::string embeddings_to_jsonl(const std::vector<EmbeddingRecord> & records);
std::vector<EmbeddingRecord> embeddings_from_jsonl(std::string_view text);

// Regroups records into aligned positive/negative lists per layer; ids with
// only one side are dropped.
std::vector<LayerPairs> to_layer_pairs(const std::vector<EmbeddingRecord> & records);

// ---- probe training -------------------------------------------------------

struct ProbeTraining {
    size_t test_size = 0;                // N
    std::vector<Probe> probes;           // one per layer, trained at 0.5S = N
    std::vector<AccuracyCurve> curves;   // optional, one per layer
};

// N = min(sample_size(pairs), pairs / 2).
size_t probe_test_size(size_t pair_count);

ProbeTraining train_probes(const std::vector<LayerPairs> & layers, ConceptKind concept_kind, uint64_t seed,
                           const std::string & model_id, bool with_curves);

void save_probe_training(const ProbeTraining & training, const std::filesystem::path & dir);
// Reads curves.json written by save_probe_training, if present.
std::vector<AccuracyCurve> load_curves(const std::filesystem::path & dir);

// ---- experiment runs ------------------------------------------------------

// One record of a run: code input and the expected output.
struct TaskRecord {
    std::string id;
    std::string input;
    std::string reference;
};

std::vector<TaskRecord> records_from_jsonl(std::string_view text);

struct ExperimentConfig {
    std::optional<std::filesystem::path> model_path;
    tinylm::ModelConfig model_config; // used when model_path is absent
    ConceptKind concept_kind = ConceptKind::Comment;
    std::filesystem::path records;
    std::string instruction;          // prepended when non-empty
    size_t max_new_tokens = 32;
    std::filesystem::path probes;
    std::filesystem::path probe_root; // scanned for threshold "auto"; defaults to probes
    uint64_t split_seed = 0;
    double target_against = kDeactivationTarget;
    double target_toward = kActivationTarget;
    std::optional<double> threshold;  // nullopt = auto
    tinylm::HookScope scope = tinylm::HookScope::AllSteps;
    std::vector<std::string> metrics = metrics::kAllMetrics;
    std::filesystem::path output_dir;
};

// Paths in the JSON are resolved against base_dir. Throws data_error.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path & base_dir);
std::string config_to_json(const ExperimentConfig & config);

inline const std::vector<std::string> kSettings = {"original", "stripped", "cd_original", "ca_stripped"};

struct StageStatus {
    std::string name;
    std::string status; // ok | failed | skipped
    std::string detail;
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string config_json;
    std::map<std::string, std::string> input_hashes;
    std::map<std::string, std::string> output_hashes;
    std::string started_at;
    std::string finished_at;
    std::vector<StageStatus> stages;
    bool ok = false;
};

// Runs original / stripped / CD(original) / CA(stripped) for every record and
// writes generations.jsonl, metrics.jsonl, deltas.json and manifest.json into
// the output directory. A failing stage is recorded in the manifest and
// rethrown.
RunManifest run_experiment(const ExperimentConfig & config);

// Threshold used for a config: fixed value or dynamic_threshold over probe_root.
double resolve_threshold(const ExperimentConfig & config);

// Merges run directories into report.md and report.csv under out_dir.
// Throws data_error for an empty list or a missing manifest.
std::vector<std::filesystem::path> report(const std::vector<std::filesystem::path> & run_dirs,
                                          const std::filesystem::path & out_dir);

} // namespace commentcav
