#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mia/corpus.hpp"

namespace mia {

// Parameter and gradient buffers are kept 64-byte aligned: Eigen's kernels
// pick peeling points from runtime pointer alignment, so unaligned heap
// placement would make bitwise reproducibility depend on the allocator.
template <typename T>
using AlignedVec = std::vector<T, Eigen::aligned_allocator<T>>;

using MatF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// T x d_model real-valued sequence; the noise-injection surface.
using EmbeddingSeq = MatF;
// T x vocab_size next-token distributions; row t conditions on tokens 0..t.
using ProbSeq = MatF;

struct LmConfig {
    int vocab_size = kByteVocabSize;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int context_len = 128;
    double learning_rate = 3e-4;
    int train_steps = 3000;
    int batch_size = 16;
    std::uint64_t seed = 0;

    void validate() const;  // throws DataError(Errc::bad_config)
    bool operator==(const LmConfig&) const = default;
};

// Shape and flat-buffer offset of one named parameter tensor. The order of
// tensor_layout() is the canonical order for initialization, checkpoints and
// gradient buffers.
struct TensorSpec {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;  // element offset into the parameter buffer

    std::size_t size() const {
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }
};

std::vector<TensorSpec> tensor_layout(const LmConfig& cfg);
std::size_t param_count(const LmConfig& cfg);

// A pre-norm causal transformer held as one flat float buffer. The output
// head is weight-tied to the token embedding.
class LmModel {
public:
    LmModel() = default;
    LmModel(LmConfig cfg, AlignedVec<float> params);

    // N(0, 0.02) weights and embeddings, zero biases, unit layernorm gains.
    static LmModel random_init(const LmConfig& cfg, std::uint64_t seed);
    // All parameters zero: predicts the uniform distribution at every step.
    static LmModel zeros(const LmConfig& cfg);

    const LmConfig& config() const { return cfg_; }
    std::span<const float> params() const { return params_; }
    std::span<float> params() { return params_; }
    const std::vector<TensorSpec>& tensors() const { return specs_; }

    Eigen::Map<const MatF> tensor(std::string_view name) const;
    Eigen::Map<const MatF> token_embedding() const { return tensor("wte"); }
    Eigen::Map<const MatF> positional_embedding() const { return tensor("wpe"); }

    bool all_finite() const;

private:
    LmConfig cfg_;
    AlignedVec<float> params_;
    std::vector<TensorSpec> specs_;
};

// --- inference ---------------------------------------------------------

// Row t = token_embedding[x_t] + positional_embedding[t].
EmbeddingSeq embed(const LmModel& model, const TokenSequence& x);

// The network g applied to an embedding sequence: causal self-attention
// blocks, final layernorm, tied softmax head.
ProbSeq forward_from_embeddings(const LmModel& model, const EmbeddingSeq& h);

// f = g(e(x)); bitwise identical to the explicit composition.
ProbSeq next_token_probs(const LmModel& model, const TokenSequence& x);

// Mean negative log-likelihood over scored positions 2..|x| (the first token
// has no context), natural log, probabilities floored at 1e-12.
double perplexity(const LmModel& model, const TokenSequence& x);

// Same, but probabilities come from a (possibly perturbed) embedding
// sequence while the labels stay the original tokens.
double perplexity_from_embeddings(const LmModel& model, const EmbeddingSeq& h,
                                  const TokenSequence& labels);

// Shared NLL kernel: rows of `probs` score the *next* token, so position t
// is judged by row t-1. Exposed so tests can drive it with handmade rows.
double mean_nll(const ProbSeq& probs, const TokenSequence& labels);

inline constexpr double kLogProbFloor = 1e-12;

// --- training ----------------------------------------------------------

// Mini-batch Adam on the mean cross-entropy. Initialization and batch order
// are fully determined by `seed`; gradients are reduced over the batch in a
// fixed order, so results do not depend on thread count.
LmModel train(const LmConfig& cfg, const std::vector<TokenSequence>& train_set,
              std::uint64_t seed);

// Optional per-step progress hook (step, mean batch loss).
using TrainHook = void (*)(int step, double loss, void* ctx);
LmModel train(const LmConfig& cfg, const std::vector<TokenSequence>& train_set,
              std::uint64_t seed, TrainHook hook, void* hook_ctx);

// --- gradient validation -----------------------------------------------

// Eq.-1 objective and its analytic gradient evaluated in double precision
// (parameters upcast), so central differences at h = 1e-4 are meaningful.
double loss_f64(const LmModel& model, const TokenSequence& x);
AlignedVec<double> analytic_grad_f64(const LmModel& model,
                                     const TokenSequence& x);
double fd_grad_f64(const LmModel& model, const TokenSequence& x,
                   std::size_t param_index, double step);

// Compares analytic vs central-difference gradients on >= 100 randomly
// chosen parameters of a freshly initialized model; returns the max
// relative error.
double grad_check(const LmConfig& cfg, const TokenSequence& x);

}  // namespace mia
