#include "mia/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mia/error.hpp"
#include "mia/lm_kernels.hpp"
#include "mia/rng.hpp"

namespace mia {

using lmk::Layout;

void LmConfig::validate() const {
    if (vocab_size < 2 || d_model < 1 || n_layers < 1 || n_heads < 1 ||
        context_len < 2 || batch_size < 1 || train_steps < 0) {
        throw DataError(Errc::bad_config, "non-positive model dimension");
    }
    if (d_model % n_heads != 0) {
        throw DataError(Errc::bad_config,
                        "d_model must be divisible by n_heads");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw DataError(Errc::bad_config, "learning_rate must be positive");
    }
}

Layout Layout::make(const LmConfig& cfg) {
    Layout L;
    L.V = cfg.vocab_size;
    L.D = cfg.d_model;
    L.L = cfg.n_layers;
    L.H = cfg.n_heads;
    L.C = cfg.context_len;
    L.DH = cfg.d_model / cfg.n_heads;
    L.F = 4 * cfg.d_model;
    std::size_t off = 0;
    auto take = [&off](int r, int c) {
        std::size_t o = off;
        off += static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
        return o;
    };
    L.wte = take(L.V, L.D);
    L.wpe = take(L.C, L.D);
    L.blocks.resize(static_cast<std::size_t>(L.L));
    for (auto& b : L.blocks) {
        b.ln1_g = take(1, L.D);
        b.ln1_b = take(1, L.D);
        b.w_qkv = take(L.D, 3 * L.D);
        b.b_qkv = take(1, 3 * L.D);
        b.w_o = take(L.D, L.D);
        b.b_o = take(1, L.D);
        b.ln2_g = take(1, L.D);
        b.ln2_b = take(1, L.D);
        b.w_fc1 = take(L.D, L.F);
        b.b_fc1 = take(1, L.F);
        b.w_fc2 = take(L.F, L.D);
        b.b_fc2 = take(1, L.D);
    }
    L.ln_f_g = take(1, L.D);
    L.ln_f_b = take(1, L.D);
    L.total = off;
    return L;
}

std::vector<TensorSpec> tensor_layout(const LmConfig& cfg) {
    cfg.validate();
    Layout L = Layout::make(cfg);
    std::vector<TensorSpec> specs;
    specs.push_back({"wte", L.V, L.D, L.wte});
    specs.push_back({"wpe", L.C, L.D, L.wpe});
    for (int l = 0; l < L.L; ++l) {
        const auto& b = L.blocks[static_cast<std::size_t>(l)];
        std::string pre = "h" + std::to_string(l) + ".";
        specs.push_back({pre + "ln1.gamma", 1, L.D, b.ln1_g});
        specs.push_back({pre + "ln1.beta", 1, L.D, b.ln1_b});
        specs.push_back({pre + "attn.w_qkv", L.D, 3 * L.D, b.w_qkv});
        specs.push_back({pre + "attn.b_qkv", 1, 3 * L.D, b.b_qkv});
        specs.push_back({pre + "attn.w_o", L.D, L.D, b.w_o});
        specs.push_back({pre + "attn.b_o", 1, L.D, b.b_o});
        specs.push_back({pre + "ln2.gamma", 1, L.D, b.ln2_g});
        specs.push_back({pre + "ln2.beta", 1, L.D, b.ln2_b});
        specs.push_back({pre + "mlp.w_fc1", L.D, L.F, b.w_fc1});
        specs.push_back({pre + "mlp.b_fc1", 1, L.F, b.b_fc1});
        specs.push_back({pre + "mlp.w_fc2", L.F, L.D, b.w_fc2});
        specs.push_back({pre + "mlp.b_fc2", 1, L.D, b.b_fc2});
    }
    specs.push_back({"ln_f.gamma", 1, L.D, L.ln_f_g});
    specs.push_back({"ln_f.beta", 1, L.D, L.ln_f_b});
    return specs;
}

std::size_t param_count(const LmConfig& cfg) {
    return Layout::make(cfg).total;
}

LmModel::LmModel(LmConfig cfg, AlignedVec<float> params)
    : cfg_(cfg), params_(std::move(params)), specs_(tensor_layout(cfg)) {
    if (params_.size() != param_count(cfg_)) {
        throw DataError(Errc::bad_config,
                        "parameter buffer size does not match config");
    }
}

LmModel LmModel::random_init(const LmConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    AlignedVec<float> params(param_count(cfg), 0.0f);
    auto specs = tensor_layout(cfg);
    Rng rng(seed);
    constexpr float kInitStd = 0.02f;
    for (const auto& s : specs) {
        bool is_gain = s.name.ends_with("gamma");
        bool is_bias = s.name.ends_with("beta") ||
                       s.name.find(".b_") != std::string::npos;
        float* base = params.data() + s.offset;
        if (is_gain) {
            std::fill(base, base + s.size(), 1.0f);
        } else if (is_bias) {
            // already zero
        } else {
            for (std::size_t i = 0; i < s.size(); ++i) {
                base[i] = static_cast<float>(rng.next_normal(0.0, kInitStd));
            }
        }
    }
    return LmModel(cfg, std::move(params));
}

LmModel LmModel::zeros(const LmConfig& cfg) {
    cfg.validate();
    return LmModel(cfg, AlignedVec<float>(param_count(cfg), 0.0f));
}

Eigen::Map<const MatF> LmModel::tensor(std::string_view name) const {
    for (const auto& s : specs_) {
        if (s.name == name) {
            return Eigen::Map<const MatF>(params_.data() + s.offset, s.rows,
                                          s.cols);
        }
    }
    throw DataError(Errc::bad_config,
                    "unknown tensor name: " + std::string(name));
}

bool LmModel::all_finite() const {
    for (float v : params_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

void check_sequence(const LmModel& model, const TokenSequence& x,
                    std::size_t min_len) {
    if (x.tokens.size() < min_len) {
        throw DataError(Errc::sequence_too_short,
                        "sequence of length " + std::to_string(x.tokens.size()) +
                            " is shorter than " + std::to_string(min_len));
    }
    if (x.tokens.size() >
        static_cast<std::size_t>(model.config().context_len)) {
        throw DataError(Errc::sequence_too_long,
                        "sequence exceeds context_len");
    }
    for (std::int32_t id : x.tokens) {
        if (id < 0 || id >= model.config().vocab_size) {
            throw DataError(Errc::token_out_of_range,
                            "token id " + std::to_string(id) +
                                " outside [0, vocab_size)");
        }
    }
}

}  // namespace

EmbeddingSeq embed(const LmModel& model, const TokenSequence& x) {
    check_sequence(model, x, 1);
    Layout L = Layout::make(model.config());
    lmk::Mat<float> x0;
    lmk::embed_tokens(model.params().data(), L, std::span(x.tokens), x0);
    return x0;
}

namespace {

// Scoring reuses one workspace per thread: a fresh ~1 MB of activations per
// forward would otherwise dominate the audit's runtime in page faults.
lmk::Workspace<float>& scoring_workspace() {
    thread_local lmk::Workspace<float> ws;
    return ws;
}

}  // namespace

ProbSeq forward_from_embeddings(const LmModel& model, const EmbeddingSeq& h) {
    const auto& cfg = model.config();
    if (h.rows() < 1 || h.rows() > cfg.context_len) {
        throw DataError(Errc::sequence_too_long,
                        "embedding sequence length outside [1, context_len]");
    }
    if (h.cols() != cfg.d_model) {
        throw DataError(Errc::length_mismatch,
                        "embedding width does not match d_model");
    }
    if (!h.allFinite()) {
        throw DataError(Errc::non_finite_input,
                        "embedding sequence contains NaN/Inf");
    }
    Layout L = Layout::make(cfg);
    lmk::Workspace<float>& ws = scoring_workspace();
    lmk::forward_embeddings(model.params().data(), L, h, ws);
    return ws.probs;
}

ProbSeq next_token_probs(const LmModel& model, const TokenSequence& x) {
    return forward_from_embeddings(model, embed(model, x));
}

double mean_nll(const ProbSeq& probs, const TokenSequence& labels) {
    const std::size_t T = labels.tokens.size();
    if (T < 2) {
        throw DataError(Errc::sequence_too_short,
                        "need at least 2 tokens to score");
    }
    if (static_cast<std::size_t>(probs.rows()) + 1 < T) {
        throw DataError(Errc::length_mismatch,
                        "probability rows do not cover the labels");
    }
    double acc = 0.0;
    for (std::size_t t = 1; t < T; ++t) {
        std::int32_t id = labels.tokens[t];
        if (id < 0 || id >= probs.cols()) {
            throw DataError(Errc::token_out_of_range,
                            "label outside probability row");
        }
        double pt = static_cast<double>(probs(static_cast<Eigen::Index>(t - 1), id));
        acc -= std::log(pt < kLogProbFloor ? kLogProbFloor : pt);
    }
    return acc / static_cast<double>(T - 1);
}

double perplexity(const LmModel& model, const TokenSequence& x) {
    check_sequence(model, x, 2);
    return mean_nll(next_token_probs(model, x), x);
}

double perplexity_from_embeddings(const LmModel& model, const EmbeddingSeq& h,
                                  const TokenSequence& labels) {
    if (static_cast<std::size_t>(h.rows()) != labels.tokens.size()) {
        throw DataError(Errc::length_mismatch,
                        "embedding rows != label count");
    }
    check_sequence(model, labels, 2);
    return mean_nll(forward_from_embeddings(model, h), labels);
}

LmModel train(const LmConfig& cfg, const std::vector<TokenSequence>& train_set,
              std::uint64_t seed) {
    return train(cfg, train_set, seed, nullptr, nullptr);
}

LmModel train(const LmConfig& cfg, const std::vector<TokenSequence>& train_set,
              std::uint64_t seed, TrainHook hook, void* hook_ctx) {
    cfg.validate();
    if (train_set.empty()) {
        throw DataError(Errc::empty_train_set, "empty training set");
    }
    LmModel model = LmModel::random_init(cfg, seed);
    for (const auto& w : train_set) {
        check_sequence(model, w, 2);
    }
    if (cfg.train_steps == 0) return model;

    Layout L = Layout::make(cfg);
    const std::size_t P = L.total;
    const int B = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                              train_set.size()));

    AlignedVec<float> m(P, 0.0f), v(P, 0.0f);
    std::vector<AlignedVec<float>> slot_grad(
        static_cast<std::size_t>(B), AlignedVec<float>(P, 0.0f));
    std::vector<lmk::Workspace<float>> slot_ws(static_cast<std::size_t>(B));
    std::vector<double> slot_loss(static_cast<std::size_t>(B), 0.0);
    std::vector<std::size_t> batch(static_cast<std::size_t>(B), 0);

    // Batch order comes from its own stream so changing the init routine
    // can never silently reshuffle the data.
    Rng order_rng(mix_seed(seed, 0x6261746368ULL));  // "batch"
    std::vector<std::size_t> perm(train_set.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    order_rng.shuffle(perm);
    std::size_t cursor = 0;

    const float beta1 = 0.9f, beta2 = 0.999f, adam_eps = 1e-8f;
    const float lr = static_cast<float>(cfg.learning_rate);
    float* theta = model.params().data();

    for (int step = 1; step <= cfg.train_steps; ++step) {
        if (cursor + static_cast<std::size_t>(B) > perm.size()) {
            order_rng.shuffle(perm);  // new epoch; remainder dropped
            cursor = 0;
        }
        for (int b = 0; b < B; ++b) {
            batch[static_cast<std::size_t>(b)] = perm[cursor++];
        }

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int b = 0; b < B; ++b) {
            auto& g = slot_grad[static_cast<std::size_t>(b)];
            std::memset(g.data(), 0, g.size() * sizeof(float));
            auto& ws = slot_ws[static_cast<std::size_t>(b)];
            const auto& seq = train_set[batch[static_cast<std::size_t>(b)]];
            slot_loss[static_cast<std::size_t>(b)] =
                lmk::loss_of<float>(theta, L, std::span(seq.tokens), ws);
            lmk::backward<float>(theta, L, std::span(seq.tokens), ws, g.data());
        }

        double loss = 0.0;
        for (int b = 0; b < B; ++b) loss += slot_loss[static_cast<std::size_t>(b)];
        loss /= B;
        if (!std::isfinite(loss)) {
            throw NumericError(Errc::training_diverged,
                               "non-finite loss at step " + std::to_string(step));
        }

        // Fused reduction + Adam update, parallelized over fixed parameter
        // chunks. Each element is reduced over slots in slot order, so the
        // result does not depend on the thread count.
        const float inv_b = 1.0f / static_cast<float>(B);
        const float bc1 =
            1.0f / (1.0f - static_cast<float>(std::pow(beta1, step)));
        const float bc2 =
            1.0f / (1.0f - static_cast<float>(std::pow(beta2, step)));
        constexpr std::size_t kChunk = 8192;
        const auto n_chunks =
            static_cast<std::ptrdiff_t>((P + kChunk - 1) / kChunk);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (std::ptrdiff_t c = 0; c < n_chunks; ++c) {
            const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
            const std::size_t end = std::min(P, begin + kChunk);
            for (std::size_t i = begin; i < end; ++i) {
                float g = slot_grad[0][i];
                for (int b = 1; b < B; ++b) {
                    g += slot_grad[static_cast<std::size_t>(b)][i];
                }
                g *= inv_b;
                m[i] = beta1 * m[i] + (1.0f - beta1) * g;
                v[i] = beta2 * v[i] + (1.0f - beta2) * g * g;
                theta[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + adam_eps);
            }
        }

        if (hook) hook(step, loss, hook_ctx);
    }

    if (!model.all_finite()) {
        throw NumericError(Errc::training_diverged,
                           "non-finite parameters after training");
    }
    return model;
}

namespace {

AlignedVec<double> params_f64(const LmModel& model) {
    AlignedVec<double> p(model.params().size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = static_cast<double>(model.params()[i]);
    }
    return p;
}

}  // namespace

double loss_f64(const LmModel& model, const TokenSequence& x) {
    check_sequence(model, x, 2);
    Layout L = Layout::make(model.config());
    auto p = params_f64(model);
    lmk::Workspace<double> ws;
    return lmk::loss_of<double>(p.data(), L, std::span(x.tokens), ws);
}

AlignedVec<double> analytic_grad_f64(const LmModel& model,
                                     const TokenSequence& x) {
    check_sequence(model, x, 2);
    Layout L = Layout::make(model.config());
    auto p = params_f64(model);
    lmk::Workspace<double> ws;
    lmk::loss_of<double>(p.data(), L, std::span(x.tokens), ws);
    AlignedVec<double> grad(L.total, 0.0);
    lmk::backward<double>(p.data(), L, std::span(x.tokens), ws, grad.data());
    return grad;
}

double fd_grad_f64(const LmModel& model, const TokenSequence& x,
                   std::size_t param_index, double step) {
    check_sequence(model, x, 2);
    Layout L = Layout::make(model.config());
    auto p = params_f64(model);
    lmk::Workspace<double> ws;
    double saved = p[param_index];
    p[param_index] = saved + step;
    double up = lmk::loss_of<double>(p.data(), L, std::span(x.tokens), ws);
    p[param_index] = saved - step;
    double down = lmk::loss_of<double>(p.data(), L, std::span(x.tokens), ws);
    return (up - down) / (2.0 * step);
}

double grad_check(const LmConfig& cfg, const TokenSequence& x) {
    cfg.validate();
    LmModel model = LmModel::random_init(cfg, cfg.seed);
    auto grad = analytic_grad_f64(model, x);

    constexpr int kChecks = 128;
    constexpr double kStep = 1e-4;
    Rng pick(mix_seed(cfg.seed, 0x67636865636bULL));  // "gcheck"
    double worst = 0.0;
    for (int i = 0; i < kChecks; ++i) {
        auto idx = static_cast<std::size_t>(pick.bounded(grad.size()));
        double fd = fd_grad_f64(model, x, idx, kStep);
        double a = grad[idx];
        double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(a - fd) / denom);
    }
    return worst;
}

}  // namespace mia
