#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace commentcav::tinylm {

inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kPad = 258;
inline constexpr size_t kVocabSize = 259;

struct ModelConfig {
    size_t d_model = 64;
    size_t n_layers = 8;
    size_t n_heads = 4;
    size_t ff_mult = 4;
    size_t vocab_size = kVocabSize;
    size_t max_seq = 1024;
    uint64_t seed = 0;

    bool operator==(const ModelConfig &) const = default;
};

// Throws std::invalid_argument on a bad config.
void validate(const ModelConfig & config);

// Byte-level: BOS followed by one id per byte.
std::vector<int> tokenize(std::string_view text);
// Inverse of tokenize; special ids are dropped.
std::string detokenize(std::span<const int> tokens);

struct LayerWeights {
    std::vector<double> ln1_gain, ln1_bias;
    std::vector<double> wq, wk, wv, wo;     // d x d, row-major [out][in]
    std::vector<double> ln2_gain, ln2_bias;
    std::vector<double> ff_in, ff_in_bias;  // (ff_mult*d) x d
    std::vector<double> ff_out, ff_out_bias; // d x (ff_mult*d)
};

// Immutable after construction; share freely across threads.
struct Model {
    ModelConfig config;
    std::vector<double> token_embedding; // vocab x d
    std::vector<LayerWeights> layers;
    std::vector<double> final_gain, final_bias;
    std::vector<double> unembedding;     // vocab x d
};

Model init_model(const ModelConfig & config);

// Binary layout, little-endian: "TLM1", seven u64 config fields
// (d_model, n_layers, n_heads, ff_mult, vocab_size, max_seq, seed), then every
// tensor as f64 in the order of for_each_tensor.
void save_model(const Model & model, const std::filesystem::path & path);
Model load_model(const std::filesystem::path & path);

// Visits tensors in serialization order.
void for_each_tensor(Model & model, const std::function<void(std::vector<double> &)> & fn);
void for_each_tensor(const Model & model, const std::function<void(const std::vector<double> &)> & fn);

struct LayerEmbedding {
    size_t layer = 1; // 1-based
    std::vector<double> vector;
};

using CaptureTrace = std::vector<LayerEmbedding>;

// Called with (1-based layer, hidden state at the final position) after each
// layer block; the callee may overwrite the state in place.
using LayerHook = std::function<void(size_t layer, std::span<double> state)>;

// Incremental decoding state: one key/value cache per layer. A session only
// reads the model.
class Session {
public:
    explicit Session(const Model & model);

    // Appends one token, returns next-token logits. `trace`, when non-null,
    // receives each layer's output at this position (after the hook ran).
    std::vector<double> step(int token, const LayerHook * hook = nullptr, CaptureTrace * trace = nullptr);

    // Appends one token without computing logits.
    void feed(int token);
    size_t position() const { return pos_; }

private:
    std::vector<double> advance(int token, const LayerHook * hook, CaptureTrace * trace, bool want_logits);

    const Model & model_;
    size_t pos_ = 0;
    std::vector<std::vector<double>> keys_;   // per layer: pos x d
    std::vector<std::vector<double>> values_; // per layer: pos x d
};

struct ForwardResult {
    std::vector<double> logits;
    CaptureTrace trace;
};

// Throws std::invalid_argument on an empty or over-long token list.
ForwardResult forward_capture(const Model & model, std::span<const int> tokens);

// Trace at every position, for prefix/causality checks.
std::vector<CaptureTrace> forward_traces(const Model & model, std::span<const int> tokens);

enum class HookScope { AllSteps, PromptOnly };

// Greedy decoding. The hook sees the final position of every forward pass
// (the last prompt token, then each generated token for AllSteps).
std::string generate(const Model & model, std::string_view prompt, size_t max_new_tokens,
                     const LayerHook * hook = nullptr, HookScope scope = HookScope::AllSteps);

} // namespace commentcav::tinylm
