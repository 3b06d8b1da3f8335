#include "commentcav/tinylm.hpp"

#include "commentcav/util.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace commentcav::tinylm {

namespace {

// Projections use 1/sqrt(fan_in) so random blocks move the residual stream
// noticeably; with tiny weights every layer is close to the identity.
constexpr double kEmbeddingScale = 1.0;
constexpr double kLayerNormEps = 1e-5;
constexpr char kMagic[4] = {'T', 'L', 'M', '1'};

std::vector<double> gaussian_tensor(SplitMix64 & rng, size_t n, double scale) {
    std::vector<double> t(n);
    for (auto & x : t) {
        x = scale * rng.gaussian();
    }
    return t;
}

void layer_norm(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                std::span<double> out) {
    const size_t d = x.size();
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (size_t i = 0; i < d; ++i) {
        out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
    }
}

double fan_in_scale(size_t fan_in) {
    return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

// out = W x (+ bias), W is rows x cols row-major
void matvec(const std::vector<double> & w, std::span<const double> x, std::span<double> out,
            const std::vector<double> * bias = nullptr) {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Index rows = static_cast<Eigen::Index>(out.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(x.size());
    Eigen::Map<const RowMajor> W(w.data(), rows, cols);
    Eigen::Map<const Eigen::VectorXd> X(x.data(), cols);
    Eigen::Map<Eigen::VectorXd> Y(out.data(), rows);
    Y.noalias() = W * X;
    if (bias) {
        Y += Eigen::Map<const Eigen::VectorXd>(bias->data(), rows);
    }
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

void add_position_encoding(std::span<double> x, size_t pos) {
    const size_t d = x.size();
    for (size_t i = 0; i < d; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
        const double angle = static_cast<double>(pos) * freq;
        x[i] += std::sin(angle);
        if (i + 1 < d) {
            x[i + 1] += std::cos(angle);
        }
    }
}

void put_u64(std::string & out, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

uint64_t get_u64(std::string_view in, size_t & at) {
    if (at + 8 > in.size()) {
        throw data_error("model file truncated");
    }
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<uint64_t>(static_cast<unsigned char>(in[at + static_cast<size_t>(i)])) << (8 * i);
    }
    at += 8;
    return v;
}

} // namespace

void validate(const ModelConfig & c) {
    if (c.d_model == 0 || c.n_layers == 0 || c.n_heads == 0 || c.ff_mult == 0 || c.max_seq == 0) {
        throw std::invalid_argument("model config: all counts must be >= 1");
    }
    if (c.d_model % c.n_heads != 0) {
        throw std::invalid_argument("model config: d_model (" + std::to_string(c.d_model) +
                                    ") must be divisible by n_heads (" + std::to_string(c.n_heads) + ")");
    }
    if (c.vocab_size != kVocabSize) {
        throw std::invalid_argument("model config: vocab_size is fixed at 259");
    }
}

std::vector<int> tokenize(std::string_view text) {
    std::vector<int> ids;
    ids.reserve(text.size() + 1);
    ids.push_back(kBos);
    for (unsigned char c : text) {
        ids.push_back(c);
    }
    return ids;
}

std::string detokenize(std::span<const int> tokens) {
    std::string out;
    for (int t : tokens) {
        if (t >= 0 && t < 256) {
            out.push_back(static_cast<char>(t));
        }
    }
    return out;
}

template <typename M, typename F>
void visit_tensors(M & m, F && fn) {
    fn(m.token_embedding);
    for (auto & l : m.layers) {
        fn(l.ln1_gain);
        fn(l.ln1_bias);
        fn(l.wq);
        fn(l.wk);
        fn(l.wv);
        fn(l.wo);
        fn(l.ln2_gain);
        fn(l.ln2_bias);
        fn(l.ff_in);
        fn(l.ff_in_bias);
        fn(l.ff_out);
        fn(l.ff_out_bias);
    }
    fn(m.final_gain);
    fn(m.final_bias);
    fn(m.unembedding);
}

void for_each_tensor(Model & m, const std::function<void(std::vector<double> &)> & fn) {
    visit_tensors(m, fn);
}

void for_each_tensor(const Model & m, const std::function<void(const std::vector<double> &)> & fn) {
    visit_tensors(m, fn);
}

Model init_model(const ModelConfig & config) {
    validate(config);
    const size_t d = config.d_model;
    const size_t ff = config.ff_mult * d;
    SplitMix64 rng(config.seed);

    Model m;
    m.config = config;
    m.token_embedding = gaussian_tensor(rng, config.vocab_size * d, kEmbeddingScale);
    m.layers.resize(config.n_layers);
    for (auto & l : m.layers) {
        l.ln1_gain.assign(d, 1.0);
        l.ln1_bias.assign(d, 0.0);
        l.wq = gaussian_tensor(rng, d * d, fan_in_scale(d));
        l.wk = gaussian_tensor(rng, d * d, fan_in_scale(d));
        l.wv = gaussian_tensor(rng, d * d, fan_in_scale(d));
        l.wo = gaussian_tensor(rng, d * d, fan_in_scale(d));
        l.ln2_gain.assign(d, 1.0);
        l.ln2_bias.assign(d, 0.0);
        l.ff_in = gaussian_tensor(rng, ff * d, fan_in_scale(d));
        l.ff_in_bias.assign(ff, 0.0);
        l.ff_out = gaussian_tensor(rng, d * ff, fan_in_scale(ff));
        l.ff_out_bias.assign(d, 0.0);
    }
    m.final_gain.assign(d, 1.0);
    m.final_bias.assign(d, 0.0);
    m.unembedding = gaussian_tensor(rng, config.vocab_size * d, fan_in_scale(d));
    return m;
}

void save_model(const Model & model, const std::filesystem::path & path) {
    std::string out(kMagic, 4);
    const auto & c = model.config;
    for (uint64_t v : {uint64_t{c.d_model}, uint64_t{c.n_layers}, uint64_t{c.n_heads}, uint64_t{c.ff_mult},
                       uint64_t{c.vocab_size}, uint64_t{c.max_seq}, c.seed}) {
        put_u64(out, v);
    }
    for_each_tensor(model, [&](const std::vector<double> & t) {
        for (double x : t) {
            put_u64(out, std::bit_cast<uint64_t>(x));
        }
    });
    write_file_atomic(path, out);
}

Model load_model(const std::filesystem::path & path) {
    const std::string in = read_file(path);
    if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) {
        throw data_error("not a TLM1 model file: " + path.string());
    }
    size_t at = 4;
    ModelConfig c;
    c.d_model = get_u64(in, at);
    c.n_layers = get_u64(in, at);
    c.n_heads = get_u64(in, at);
    c.ff_mult = get_u64(in, at);
    c.vocab_size = get_u64(in, at);
    c.max_seq = get_u64(in, at);
    c.seed = get_u64(in, at);
    try {
        validate(c);
    } catch (const std::invalid_argument & e) {
        throw data_error(std::string("model file has invalid config: ") + e.what());
    }
    // shapes come from a fresh init; values are overwritten below
    Model m = init_model(c);
    for_each_tensor(m, [&](std::vector<double> & t) {
        for (double & x : t) {
            x = std::bit_cast<double>(get_u64(in, at));
        }
    });
    if (at != in.size()) {
        throw data_error("model file has trailing bytes: " + path.string());
    }
    return m;
}

Session::Session(const Model & model) : model_(model), keys_(model.config.n_layers), values_(model.config.n_layers) {}

std::vector<double> Session::step(int token, const LayerHook * hook, CaptureTrace * trace) {
    return advance(token, hook, trace, true);
}

void Session::feed(int token) {
    advance(token, nullptr, nullptr, false);
}

std::vector<double> Session::advance(int token, const LayerHook * hook, CaptureTrace * trace, bool want_logits) {
    const auto & c = model_.config;
    if (pos_ >= c.max_seq) {
        throw std::invalid_argument("sequence exceeds max_seq (" + std::to_string(c.max_seq) + ")");
    }
    if (token < 0 || static_cast<size_t>(token) >= c.vocab_size) {
        throw std::invalid_argument("token id out of range: " + std::to_string(token));
    }
    const size_t d = c.d_model;
    const size_t ff = c.ff_mult * d;
    const size_t heads = c.n_heads;
    const size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<double> x(model_.token_embedding.begin() + static_cast<std::ptrdiff_t>(token * d),
                          model_.token_embedding.begin() + static_cast<std::ptrdiff_t>((token + 1) * d));
    add_position_encoding(x, pos_);

    std::vector<double> h(d), q(d), k(d), v(d), att(d), proj(d), hidden(ff);
    std::vector<double> scores(pos_ + 1);
    if (trace) {
        trace->clear();
        trace->reserve(c.n_layers);
    }
    for (size_t li = 0; li < c.n_layers; ++li) {
        const LayerWeights & L = model_.layers[li];

        layer_norm(x, L.ln1_gain, L.ln1_bias, h);
        matvec(L.wq, h, q);
        matvec(L.wk, h, k);
        matvec(L.wv, h, v);
        auto & kc = keys_[li];
        auto & vc = values_[li];
        kc.insert(kc.end(), k.begin(), k.end());
        vc.insert(vc.end(), v.begin(), v.end());

        const size_t n = pos_ + 1;
        using Cache = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const Cache> K(kc.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        Eigen::Map<const Cache> V(vc.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        Eigen::Map<Eigen::VectorXd> S(scores.data(), static_cast<Eigen::Index>(n));
        for (size_t hd = 0; hd < heads; ++hd) {
            const auto off = static_cast<Eigen::Index>(hd * dh);
            const auto w = static_cast<Eigen::Index>(dh);
            S.noalias() = K.middleCols(off, w) * Eigen::Map<const Eigen::VectorXd>(q.data() + off, w);
            S *= scale;
            const double max_score = S.maxCoeff();
            double denom = 0.0;
            for (size_t t = 0; t < n; ++t) {
                scores[t] = std::exp(scores[t] - max_score);
                denom += scores[t];
            }
            S /= denom;
            Eigen::Map<Eigen::VectorXd>(att.data() + off, w).noalias() = V.middleCols(off, w).transpose() * S;
        }
        matvec(L.wo, att, proj);
        for (size_t i = 0; i < d; ++i) {
            x[i] += proj[i];
        }

        layer_norm(x, L.ln2_gain, L.ln2_bias, h);
        matvec(L.ff_in, h, hidden, &L.ff_in_bias);
        for (auto & z : hidden) {
            z = gelu(z);
        }
        matvec(L.ff_out, hidden, proj, &L.ff_out_bias);
        for (size_t i = 0; i < d; ++i) {
            x[i] += proj[i];
        }

        if (hook && *hook) {
            (*hook)(li + 1, std::span<double>(x));
        }
        if (trace) {
            trace->push_back({li + 1, x});
        }
    }
    ++pos_;
    if (!want_logits) {
        return {};
    }

    layer_norm(x, model_.final_gain, model_.final_bias, h);
    std::vector<double> logits(c.vocab_size);
    matvec(model_.unembedding, h, logits);
    return logits;
}

ForwardResult forward_capture(const Model & model, std::span<const int> tokens) {
    if (tokens.empty()) {
        throw std::invalid_argument("forward_capture: empty token list");
    }
    if (tokens.size() > model.config.max_seq) {
        throw std::invalid_argument("forward_capture: " + std::to_string(tokens.size()) +
                                    " tokens exceed max_seq " + std::to_string(model.config.max_seq));
    }
    Session session(model);
    ForwardResult r;
    for (size_t i = 0; i + 1 < tokens.size(); ++i) {
        session.feed(tokens[i]);
    }
    r.logits = session.step(tokens.back(), nullptr, &r.trace);
    return r;
}

std::vector<CaptureTrace> forward_traces(const Model & model, std::span<const int> tokens) {
    if (tokens.empty()) {
        throw std::invalid_argument("forward_traces: empty token list");
    }
    if (tokens.size() > model.config.max_seq) {
        throw std::invalid_argument("forward_traces: sequence too long");
    }
    Session session(model);
    std::vector<CaptureTrace> traces(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        session.step(tokens[i], nullptr, &traces[i]);
    }
    return traces;
}

std::string generate(const Model & model, std::string_view prompt, size_t max_new_tokens, const LayerHook * hook,
                     HookScope scope) {
    const auto tokens = tokenize(prompt);
    if (tokens.size() + max_new_tokens > model.config.max_seq) {
        throw std::invalid_argument("generate: prompt of " + std::to_string(tokens.size()) +
                                    " tokens plus " + std::to_string(max_new_tokens) +
                                    " new tokens exceeds max_seq " + std::to_string(model.config.max_seq));
    }
    if (max_new_tokens == 0) {
        return {};
    }
    Session session(model);
    for (size_t i = 0; i + 1 < tokens.size(); ++i) {
        session.feed(tokens[i]);
    }
    std::vector<double> logits = session.step(tokens.back(), hook);

    std::vector<int> produced;
    for (size_t n = 0; n < max_new_tokens; ++n) {
        const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
        const int next = static_cast<int>(best);
        if (next == kEos) {
            break;
        }
        produced.push_back(next);
        if (n + 1 == max_new_tokens) {
            break;
        }
        logits = session.step(next, scope == HookScope::AllSteps ? hook : nullptr);
    }
    return detokenize(produced);
}

} // namespace commentcav::tinylm
