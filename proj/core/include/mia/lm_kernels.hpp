#pragma once

// Scalar-generic transformer kernels. Training and inference instantiate
// float; the finite-difference gradient oracle instantiates double. Keeping
// one template for both paths means the checked math is the shipped math.
//
// All activations and scratch live in a caller-owned Workspace so repeated
// calls do no allocation; alignment-stable buffers keep results bitwise
// reproducible.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mia/lm.hpp"

namespace mia::lmk {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Row = Eigen::Matrix<S, 1, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Element offsets of every tensor, precomputed from the config.
struct Layout {
    int V, D, L, H, C, DH, F;  // vocab, d_model, layers, heads, ctx, head, ff
    std::size_t wte, wpe;
    struct Block {
        std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o;
        std::size_t ln2_g, ln2_b, w_fc1, b_fc1, w_fc2, b_fc2;
    };
    std::vector<Block> blocks;
    std::size_t ln_f_g, ln_f_b;
    std::size_t total;

    static Layout make(const LmConfig& cfg);
};

inline constexpr double kLnEps = 1e-5;

template <typename S>
struct Activations {
    Mat<S> x_in, ln1, qkv, att, ctx, x_mid, ln2, fc1, gelu;
    Mat<S> gelu_t;  // tanh(c (x + a x^3)), reused by the backward pass
};

// Everything the forward pass stores that the backward pass re-reads, plus
// scratch reused across calls.
template <typename S>
struct Workspace {
    std::vector<Activations<S>> blk;
    Mat<S> x_last, ln_f_out, logits, probs;
    // scratch
    Mat<S> q, k, v, scores, d_x, d_tmp, d_qkv, d_ctx, d_fc1, d_logits, d_a, d_s;
    Col<S> mu, inv, red1, red2;
    int T = 0;
};

template <typename S>
Eigen::Map<const Mat<S>> cmap(const S* p, std::size_t off, int r, int c) {
    return Eigen::Map<const Mat<S>>(p + off, r, c);
}
template <typename S>
Eigen::Map<Mat<S>> mmap(S* p, std::size_t off, int r, int c) {
    return Eigen::Map<Mat<S>>(p + off, r, c);
}

// tanh-approximation GELU constants
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

// Row-wise layernorm: y = (x - mu) / sqrt(var + eps) * gamma + beta.
template <typename S>
void layernorm(const Mat<S>& x, const S* g, const S* b, Mat<S>& y,
               Col<S>& mu, Col<S>& inv) {
    const int D = static_cast<int>(x.cols());
    Eigen::Map<const Row<S>> gamma(g, D), beta(b, D);
    mu = x.rowwise().mean();
    y = x;
    y.colwise() -= mu;
    inv = ((y.rowwise().squaredNorm() / static_cast<S>(D)).array() +
           static_cast<S>(kLnEps))
              .rsqrt()
              .matrix();
    y.array().colwise() *= inv.array();
    y = ((y.array().rowwise() * gamma.array()).rowwise() + beta.array())
            .matrix();
}

// dx, dgamma, dbeta from upstream dy; recomputes the row statistics.
template <typename S>
void layernorm_backward(const Mat<S>& x, const S* g, const Mat<S>& dy,
                        Workspace<S>& ws, Mat<S>& dx, S* dgamma, S* dbeta) {
    const int D = static_cast<int>(x.cols());
    Eigen::Map<const Row<S>> gamma(g, D);
    Eigen::Map<Row<S>> dG(dgamma, D), dB(dbeta, D);

    ws.mu = x.rowwise().mean();
    Mat<S>& xhat = ws.d_tmp;
    xhat = x;
    xhat.colwise() -= ws.mu;
    ws.inv = ((xhat.rowwise().squaredNorm() / static_cast<S>(D)).array() +
              static_cast<S>(kLnEps))
                 .rsqrt()
                 .matrix();
    xhat.array().colwise() *= ws.inv.array();

    dB += dy.colwise().sum();
    dG += (dy.array() * xhat.array()).colwise().sum().matrix();

    // dx = inv * (gy - mean(gy) - xhat * mean(gy .* xhat)), row-wise
    dx = (dy.array().rowwise() * gamma.array()).matrix();
    ws.red1 = dx.rowwise().mean();
    ws.red2 = (dx.array() * xhat.array()).rowwise().mean();
    dx.colwise() -= ws.red1;
    dx.array() -= xhat.array().colwise() * ws.red2.array();
    dx.array().colwise() *= ws.inv.array();
}

// Causal softmax over each row's prefix [0..t]; columns past t are zeroed.
template <typename S, typename Block>
void causal_softmax_rows(Block scores) {
    const int T = static_cast<int>(scores.rows());
    for (int t = 0; t < T; ++t) {
        auto pre = scores.row(t).head(t + 1);
        S m = pre.maxCoeff();
        pre = (pre.array() - m).exp();
        pre /= pre.sum();
        if (t + 1 < static_cast<int>(scores.cols())) {
            scores.row(t).tail(scores.cols() - (t + 1)).setZero();
        }
    }
}

// Forward from an embedding sequence through the blocks, final layernorm and
// tied softmax head. Fills the workspace for a later backward pass.
template <typename S>
void forward_embeddings(const S* p, const Layout& L, const Mat<S>& x0,
                        Workspace<S>& ws) {
    const int T = static_cast<int>(x0.rows());
    const int D = L.D, H = L.H, DH = L.DH;
    const S scale = S(1) / std::sqrt(static_cast<S>(DH));
    ws.T = T;
    ws.blk.resize(static_cast<std::size_t>(L.L));

    const Mat<S>* x = &x0;
    for (int l = 0; l < L.L; ++l) {
        auto& a = ws.blk[static_cast<std::size_t>(l)];
        const auto& B = L.blocks[static_cast<std::size_t>(l)];
        a.x_in = *x;

        layernorm(a.x_in, p + B.ln1_g, p + B.ln1_b, a.ln1, ws.mu, ws.inv);
        a.qkv.noalias() = a.ln1 * cmap(p, B.w_qkv, D, 3 * D);
        a.qkv.rowwise() += cmap(p, B.b_qkv, 1, 3 * D).row(0);

        a.att.resize(H * T, T);
        a.ctx.resize(T, D);
        for (int h = 0; h < H; ++h) {
            ws.q = a.qkv.middleCols(h * DH, DH);
            ws.k = a.qkv.middleCols(D + h * DH, DH);
            ws.v = a.qkv.middleCols(2 * D + h * DH, DH);
            auto A = a.att.middleRows(h * T, T);
            A.noalias() = ws.q * ws.k.transpose() * scale;
            causal_softmax_rows<S>(A);
            a.ctx.middleCols(h * DH, DH).noalias() = A * ws.v;
        }

        // x_mid = x_in + attention output
        a.x_mid.noalias() = a.ctx * cmap(p, B.w_o, D, D);
        a.x_mid.rowwise() += cmap(p, B.b_o, 1, D).row(0);
        a.x_mid += a.x_in;

        layernorm(a.x_mid, p + B.ln2_g, p + B.ln2_b, a.ln2, ws.mu, ws.inv);
        a.fc1.noalias() = a.ln2 * cmap(p, B.w_fc1, D, L.F);
        a.fc1.rowwise() += cmap(p, B.b_fc1, 1, L.F).row(0);
        const S cg = static_cast<S>(kGeluC), ag = static_cast<S>(kGeluA);
        a.gelu_t =
            ((a.fc1.array() + ag * a.fc1.array().cube()) * cg).tanh().matrix();
        a.gelu =
            (S(0.5) * a.fc1.array() * (S(1) + a.gelu_t.array())).matrix();

        // block output = x_mid + MLP output; stored in x_last
        ws.x_last.noalias() = a.gelu * cmap(p, B.w_fc2, L.F, D);
        ws.x_last.rowwise() += cmap(p, B.b_fc2, 1, D).row(0);
        ws.x_last += a.x_mid;
        x = &ws.x_last;
    }
    if (L.L == 0) ws.x_last = x0;

    layernorm(ws.x_last, p + L.ln_f_g, p + L.ln_f_b, ws.ln_f_out, ws.mu, ws.inv);
    ws.logits.noalias() = ws.ln_f_out * cmap(p, L.wte, L.V, D).transpose();

    ws.mu = ws.logits.rowwise().maxCoeff();
    ws.probs = ws.logits;
    ws.probs.colwise() -= ws.mu;
    ws.probs = ws.probs.array().exp().matrix();
    ws.red1 = ws.probs.rowwise().sum();
    ws.probs.array().colwise() /= ws.red1.array();
}

template <typename S>
void embed_tokens(const S* p, const Layout& L, std::span<const std::int32_t> ids,
                  Mat<S>& x0) {
    const int T = static_cast<int>(ids.size());
    x0.resize(T, L.D);
    auto wte = cmap(p, L.wte, L.V, L.D);
    auto wpe = cmap(p, L.wpe, L.C, L.D);
    for (int t = 0; t < T; ++t) {
        x0.row(t) = wte.row(ids[static_cast<std::size_t>(t)]) + wpe.row(t);
    }
}

// Mean NLL over scored positions 2..T (targets ids[1..T-1]), natural log,
// probabilities floored at 1e-12. Accumulated in double regardless of S.
template <typename S>
double mean_nll_ws(const Workspace<S>& ws, std::span<const std::int32_t> ids) {
    const int T = static_cast<int>(ids.size());
    double acc = 0.0;
    for (int t = 1; t < T; ++t) {
        double pt = static_cast<double>(
            ws.probs(t - 1, ids[static_cast<std::size_t>(t)]));
        acc -= std::log(pt < kLogProbFloor ? kLogProbFloor : pt);
    }
    return acc / static_cast<double>(T - 1);
}

// Backward of mean_nll_ws through the whole network. `grad` has Layout.total
// entries and must be zeroed by the caller; embedding gradients include both
// the tied-head and the input-scatter contributions. The workspace must hold
// the matching forward pass.
template <typename S>
void backward(const S* p, const Layout& L, std::span<const std::int32_t> ids,
              Workspace<S>& ws, S* grad) {
    const int T = ws.T;
    const int D = L.D, H = L.H, DH = L.DH;
    const S scale = S(1) / std::sqrt(static_cast<S>(DH));
    const S inv_n = S(1) / static_cast<S>(T - 1);

    // d logits: (softmax - onehot) / (T-1) on rows 0..T-2; last row unscored.
    ws.d_logits = ws.probs * inv_n;
    ws.d_logits.row(T - 1).setZero();
    for (int t = 1; t < T; ++t) {
        ws.d_logits(t - 1, ids[static_cast<std::size_t>(t)]) -= inv_n;
    }

    auto wte = cmap(p, L.wte, L.V, D);
    // logits = ln_f_out * wte^T  (tied head)
    mmap(grad, L.wte, L.V, D).noalias() += ws.d_logits.transpose() * ws.ln_f_out;
    Mat<S>& d_lnf = ws.d_ctx;  // borrow scratch
    d_lnf.noalias() = ws.d_logits * wte;

    layernorm_backward(ws.x_last, p + L.ln_f_g, d_lnf, ws, ws.d_x,
                       grad + L.ln_f_g, grad + L.ln_f_b);

    for (int l = L.L - 1; l >= 0; --l) {
        auto& a = ws.blk[static_cast<std::size_t>(l)];
        const auto& B = L.blocks[static_cast<std::size_t>(l)];

        // x_out = x_mid + (gelu(fc1) * w_fc2 + b_fc2)
        Mat<S>& d_out = ws.d_x;
        mmap(grad, B.w_fc2, L.F, D).noalias() += a.gelu.transpose() * d_out;
        mmap(grad, B.b_fc2, 1, D).row(0) += d_out.colwise().sum();
        ws.d_fc1.noalias() = d_out * cmap(p, B.w_fc2, L.F, D).transpose();
        {
            const S cg = static_cast<S>(kGeluC), ag = static_cast<S>(kGeluA);
            // gelu'(x) = 0.5(1+t) + 0.5 x (1 - t^2) c (1 + 3 a x^2)
            ws.d_fc1.array() *=
                S(0.5) * (S(1) + a.gelu_t.array()) +
                S(0.5) * a.fc1.array() * (S(1) - a.gelu_t.array().square()) *
                    cg * (S(1) + S(3) * ag * a.fc1.array().square());
        }
        mmap(grad, B.w_fc1, D, L.F).noalias() += a.ln2.transpose() * ws.d_fc1;
        mmap(grad, B.b_fc1, 1, L.F).row(0) += ws.d_fc1.colwise().sum();
        Mat<S>& d_ln2 = ws.d_ctx;  // borrow scratch
        d_ln2.noalias() = ws.d_fc1 * cmap(p, B.w_fc1, D, L.F).transpose();
        layernorm_backward(a.x_mid, p + B.ln2_g, d_ln2, ws, ws.d_s,
                           grad + B.ln2_g, grad + B.ln2_b);
        ws.d_x += ws.d_s;  // residual join at x_mid

        // x_mid = x_in + (ctx * w_o + b_o)
        Mat<S>& d_mid = ws.d_x;
        mmap(grad, B.w_o, D, D).noalias() += a.ctx.transpose() * d_mid;
        mmap(grad, B.b_o, 1, D).row(0) += d_mid.colwise().sum();
        ws.d_ctx.noalias() = d_mid * cmap(p, B.w_o, D, D).transpose();

        ws.d_qkv.resize(T, 3 * D);
        for (int h = 0; h < H; ++h) {
            ws.q = a.qkv.middleCols(h * DH, DH);
            ws.k = a.qkv.middleCols(D + h * DH, DH);
            ws.v = a.qkv.middleCols(2 * D + h * DH, DH);
            auto A = a.att.middleRows(h * T, T);
            auto d_ctx_h = ws.d_ctx.middleCols(h * DH, DH);

            ws.d_a.noalias() = d_ctx_h * ws.v.transpose();
            ws.d_qkv.middleCols(2 * D + h * DH, DH).noalias() =
                A.transpose() * d_ctx_h;
            // softmax backward row-wise; masked entries have A == 0.
            ws.red1 = (A.array() * ws.d_a.array()).rowwise().sum().matrix();
            ws.d_a.colwise() -= ws.red1;
            ws.d_s = (A.array() * ws.d_a.array()).matrix();
            ws.d_qkv.middleCols(h * DH, DH).noalias() = ws.d_s * ws.k * scale;
            ws.d_qkv.middleCols(D + h * DH, DH).noalias() =
                ws.d_s.transpose() * ws.q * scale;
        }

        mmap(grad, B.w_qkv, D, 3 * D).noalias() +=
            a.ln1.transpose() * ws.d_qkv;
        mmap(grad, B.b_qkv, 1, 3 * D).row(0) += ws.d_qkv.colwise().sum();
        Mat<S>& d_ln1 = ws.d_ctx;  // borrow scratch
        d_ln1.noalias() = ws.d_qkv * cmap(p, B.w_qkv, D, 3 * D).transpose();
        layernorm_backward(a.x_in, p + B.ln1_g, d_ln1, ws, ws.d_s,
                           grad + B.ln1_g, grad + B.ln1_b);
        ws.d_x += ws.d_s;  // residual join at x_in
    }

    // x0 row t = wte[ids[t]] + wpe[t]
    auto g_wte = mmap(grad, L.wte, L.V, D);
    auto g_wpe = mmap(grad, L.wpe, L.C, D);
    for (int t = 0; t < T; ++t) {
        g_wte.row(ids[static_cast<std::size_t>(t)]) += ws.d_x.row(t);
        g_wpe.row(t) += ws.d_x.row(t);
    }
}

// Convenience for the gradient oracle: loss of one sequence from scratch.
template <typename S>
double loss_of(const S* p, const Layout& L, std::span<const std::int32_t> ids,
               Workspace<S>& ws) {
    Mat<S> x0;
    embed_tokens(p, L, ids, x0);
    forward_embeddings(p, L, x0, ws);
    return mean_nll_ws(ws, ids);
}

}  // namespace mia::lmk
