#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mia/error.hpp"
#include "mia/lm.hpp"
#include "mia/rng.hpp"

namespace {

mia::TokenSequence random_seq(mia::Rng& rng, std::size_t len, int vocab = 256) {
    mia::TokenSequence x;
    x.tokens.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        x.tokens.push_back(static_cast<std::int32_t>(rng.bounded(vocab)));
    }
    return x;
}

mia::LmConfig tiny_config() {
    mia::LmConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.context_len = 32;
    return cfg;
}

bool bitwise_equal(const mia::MatF& a, const mia::MatF& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (a(i, j) != b(i, j)) return false;
        }
    }
    return true;
}

const double kLn256 = std::log(256.0);

}  // namespace

TEST_CASE("zero model predicts the uniform distribution exactly") {
    mia::LmConfig cfg;  // defaults: d64, 2 layers
    mia::LmModel model = mia::LmModel::zeros(cfg);
    mia::Rng rng(1);
    mia::TokenSequence x = random_seq(rng, 126);
    mia::ProbSeq probs = mia::next_token_probs(model, x);
    REQUIRE(probs.rows() == 126);
    REQUIRE(probs.cols() == 256);
    for (Eigen::Index t = 0; t < probs.rows(); ++t) {
        for (Eigen::Index w = 0; w < probs.cols(); ++w) {
            CHECK(probs(t, w) == doctest::Approx(1.0 / 256.0).epsilon(1e-9));
        }
    }
    CHECK(mia::perplexity(model, x) == doctest::Approx(kLn256).epsilon(1e-9));
}

TEST_CASE("embed: zero tables give zero output; shape and determinism") {
    mia::LmConfig cfg;
    mia::LmModel zero = mia::LmModel::zeros(cfg);
    mia::Rng rng(2);
    mia::TokenSequence x = random_seq(rng, 126);
    mia::EmbeddingSeq h = mia::embed(zero, x);
    REQUIRE(h.rows() == 126);
    REQUIRE(h.cols() == 64);
    CHECK(h.cwiseAbs().maxCoeff() == 0.0f);

    mia::LmModel model = mia::LmModel::random_init(cfg, 99);
    CHECK(bitwise_equal(mia::embed(model, x), mia::embed(model, x)));

    // row t = wte[x_t] + wpe[t]
    mia::EmbeddingSeq h2 = mia::embed(model, x);
    auto wte = model.token_embedding();
    auto wpe = model.positional_embedding();
    for (int t : {0, 17, 125}) {
        for (int j = 0; j < 64; ++j) {
            CHECK(h2(t, j) ==
                  wte(x.tokens[static_cast<std::size_t>(t)], j) + wpe(t, j));
        }
    }
}

TEST_CASE("factorization: next_token_probs == g(e(x)) bitwise") {
    mia::LmConfig cfg = tiny_config();
    mia::LmModel model = mia::LmModel::random_init(cfg, 7);
    mia::Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        mia::TokenSequence x = random_seq(rng, 8 + rng.bounded(24));
        mia::ProbSeq direct = mia::next_token_probs(model, x);
        mia::ProbSeq composed =
            mia::forward_from_embeddings(model, mia::embed(model, x));
        CHECK(bitwise_equal(direct, composed));
    }
}

TEST_CASE("probability rows are normalized and non-negative") {
    mia::LmConfig cfg = tiny_config();
    mia::Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        mia::LmModel model = mia::LmModel::random_init(cfg, rng.next_u64());
        mia::TokenSequence x = random_seq(rng, 4 + rng.bounded(28));
        mia::ProbSeq probs = mia::next_token_probs(model, x);
        for (Eigen::Index t = 0; t < probs.rows(); ++t) {
            double sum = 0.0;
            for (Eigen::Index w = 0; w < probs.cols(); ++w) {
                CHECK(probs(t, w) >= 0.0f);
                sum += probs(t, w);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
}

TEST_CASE("causality: rows past t never influence output row t") {
    mia::LmConfig cfg = tiny_config();
    mia::LmModel model = mia::LmModel::random_init(cfg, 11);
    mia::Rng rng(5);
    mia::TokenSequence x = random_seq(rng, 20);
    mia::EmbeddingSeq h = mia::embed(model, x);
    mia::ProbSeq base = mia::forward_from_embeddings(model, h);

    const int cut = 9;
    mia::EmbeddingSeq mutated = h;
    for (Eigen::Index t = cut + 1; t < mutated.rows(); ++t) {
        for (Eigen::Index j = 0; j < mutated.cols(); ++j) {
            mutated(t, j) = static_cast<float>(rng.next_normal(0.0, 3.0));
        }
    }
    mia::ProbSeq perturbed = mia::forward_from_embeddings(model, mutated);
    for (Eigen::Index t = 0; t <= cut; ++t) {
        for (Eigen::Index w = 0; w < base.cols(); ++w) {
            CHECK(base(t, w) == perturbed(t, w));
        }
    }
}

TEST_CASE("perplexity: perfect-prediction construction scores ~0") {
    mia::LmConfig cfg;
    mia::LmModel model = mia::LmModel::zeros(cfg);
    // Put all embedding mass of token 7 on one axis: after the final
    // layernorm the tied head gives that token a huge logit and every
    // other token logit 0.
    const int c = 7;
    auto params = model.params();
    auto specs = model.tensors();
    for (const auto& s : specs) {
        if (s.name == "wte") {
            params[s.offset + static_cast<std::size_t>(c) *
                                  static_cast<std::size_t>(s.cols)] = 5.0f;
        }
        if (s.name.ends_with("gamma")) {
            for (std::size_t i = 0; i < s.size(); ++i) params[s.offset + i] = 1.0f;
        }
    }
    mia::TokenSequence x;
    x.tokens.assign(100, c);
    CHECK(mia::perplexity(model, x) < 1e-6);
}

TEST_CASE("mean_nll matches the independent log-sum oracle") {
    mia::ProbSeq probs = mia::ProbSeq::Constant(3, 8, 0.01f);
    mia::TokenSequence labels;
    labels.tokens = {0, 1, 2, 3};
    probs(0, 1) = 0.5f;
    probs(1, 2) = 0.25f;
    probs(2, 3) = 0.125f;
    double expected = -(std::log(0.5) + std::log(0.25) + std::log(0.125)) / 3.0;
    CHECK(expected == doctest::Approx(1.3862943611198906).epsilon(1e-12));
    CHECK(mia::mean_nll(probs, labels) ==
          doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("perplexity bounds hold for random models") {
    mia::LmConfig cfg = tiny_config();
    mia::Rng rng(6);
    const double upper = -std::log(1e-12);
    for (int trial = 0; trial < 8; ++trial) {
        mia::LmModel model = mia::LmModel::random_init(cfg, rng.next_u64());
        mia::TokenSequence x = random_seq(rng, 2 + rng.bounded(30));
        double ppx = mia::perplexity(model, x);
        CHECK(ppx >= 0.0);
        CHECK(ppx <= upper);
    }
}

TEST_CASE("perplexity_from_embeddings: identity and error paths") {
    mia::LmConfig cfg = tiny_config();
    mia::LmModel model = mia::LmModel::random_init(cfg, 13);
    mia::Rng rng(7);
    mia::TokenSequence x = random_seq(rng, 24);
    mia::EmbeddingSeq h = mia::embed(model, x);

    // sigma = 0 case: exact equality with the token path
    CHECK(mia::perplexity_from_embeddings(model, h, x) ==
          mia::perplexity(model, x));

    // adding an all-zero noise matrix changes nothing
    mia::EmbeddingSeq h2 = h + mia::EmbeddingSeq::Zero(h.rows(), h.cols());
    CHECK(mia::perplexity_from_embeddings(model, h2, x) ==
          mia::perplexity(model, x));

    mia::TokenSequence short_labels = x;
    short_labels.tokens.pop_back();
    try {
        mia::perplexity_from_embeddings(model, h, short_labels);
        FAIL("expected length_mismatch");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::length_mismatch);
    }
}

TEST_CASE("input validation: short/long sequences and bad token ids") {
    mia::LmConfig cfg = tiny_config();
    mia::LmModel model = mia::LmModel::random_init(cfg, 17);
    mia::TokenSequence one;
    one.tokens = {5};
    try {
        mia::perplexity(model, one);
        FAIL("expected sequence_too_short");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::sequence_too_short);
    }

    mia::Rng rng(8);
    mia::TokenSequence long_seq = random_seq(rng, 33);  // context_len 32
    try {
        mia::embed(model, long_seq);
        FAIL("expected sequence_too_long");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::sequence_too_long);
    }

    mia::TokenSequence bad;
    bad.tokens = {1, 2, 999};
    try {
        mia::embed(model, bad);
        FAIL("expected token_out_of_range");
    } catch (const mia::DataError& e) {
        CHECK(e.code() == mia::Errc::token_out_of_range);
    }
}

TEST_CASE("train: zero steps returns the initialized model bitwise") {
    mia::LmConfig cfg = tiny_config();
    cfg.train_steps = 0;
    mia::Rng rng(9);
    std::vector<mia::TokenSequence> data;
    for (int i = 0; i < 4; ++i) data.push_back(random_seq(rng, 16));
    mia::LmModel trained = mia::train(cfg, data, 123);
    mia::LmModel init = mia::LmModel::random_init(cfg, 123);
    REQUIRE(trained.params().size() == init.params().size());
    for (std::size_t i = 0; i < trained.params().size(); ++i) {
        CHECK(trained.params()[i] == init.params()[i]);
    }
}

TEST_CASE("train is bitwise deterministic for a fixed seed") {
    mia::LmConfig cfg = tiny_config();
    cfg.train_steps = 25;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-3;
    mia::Rng rng(10);
    std::vector<mia::TokenSequence> data;
    for (int i = 0; i < 10; ++i) data.push_back(random_seq(rng, 16));

    mia::LmModel a = mia::train(cfg, data, 777);
    mia::LmModel b = mia::train(cfg, data, 777);
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        CHECK(a.params()[i] == b.params()[i]);
    }

    mia::LmModel c = mia::train(cfg, data, 778);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        if (a.params()[i] != c.params()[i]) {
            any_diff = true;
            break;
        }
    }
    CHECK(any_diff);
}

TEST_CASE("train memorizes a single repeated window") {
    mia::LmConfig cfg;  // default shape
    cfg.train_steps = 500;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-3;
    mia::Rng rng(11);
    mia::TokenSequence window = random_seq(rng, 126);
    std::vector<mia::TokenSequence> data(50, window);

    mia::LmModel init = mia::LmModel::random_init(cfg, 2024);
    double before = mia::perplexity(init, window);
    mia::LmModel trained = mia::train(cfg, data, 2024);
    double after = mia::perplexity(trained, window);

    CHECK(after < 0.5 * kLn256);
    CHECK(after < before);
    CHECK(trained.all_finite());
}
