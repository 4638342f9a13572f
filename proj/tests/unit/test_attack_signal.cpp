// Statistical end-to-end check of the attack signal: after training past the
// generalization point, members must score lower than non-members under the
// noisy strategy at the searched sigma. Uses a reduced-scale setup so this
// stays a (slow) unit test; the acceptance suite runs the full protocol.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mia/attack.hpp"
#include "mia/lm.hpp"
#include "mia/metrics.hpp"
#include "mia/rng.hpp"

namespace {

// One-sided Welch t-test p-value for mean(a) < mean(b), via the Student-t
// CDF expressed with the regularized incomplete beta function.
double welch_p_one_sided(const std::vector<double>& a,
                         const std::vector<double>& b) {
    auto moments = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size() - 1);
        return std::pair<double, double>{mean, var};
    };
    auto [ma, va] = moments(a);
    auto [mb, vb] = moments(b);
    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());
    double se2 = va / na + vb / nb;
    double t = (ma - mb) / std::sqrt(se2);
    double df = se2 * se2 /
                (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    // P(T < t) for t < 0 equals 0.5 * I_{df/(df+t^2)}(df/2, 1/2)
    double x = df / (df + t * t);
    double tail = 0.5 * mia::ibeta_reg(df / 2.0, 0.5, x);
    return t < 0.0 ? tail : 1.0 - tail;
}

// Windows of structured-but-random text: pairs of (symbol, follower) so some
// per-window structure exists to memorize.
mia::TokenSequence make_window(mia::Rng& rng) {
    mia::TokenSequence x;
    while (x.tokens.size() < 126) {
        int sym = 97 + static_cast<int>(rng.bounded(26));
        x.tokens.push_back(sym);
        x.tokens.push_back(32 + static_cast<int>(rng.bounded(16)));
    }
    x.tokens.resize(126);
    return x;
}

}  // namespace

TEST_CASE("memorization drives the loss, shadow-free noisy signal") {
    mia::Rng rng(20240917);
    std::vector<mia::TokenSequence> member_windows, nonmember_windows;
    for (int i = 0; i < 96; ++i) member_windows.push_back(make_window(rng));
    for (int i = 0; i < 64; ++i) nonmember_windows.push_back(make_window(rng));

    mia::LmConfig cfg;
    cfg.d_model = 32;
    cfg.n_layers = 1;
    cfg.n_heads = 4;
    cfg.context_len = 128;
    cfg.train_steps = 1200;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-3;
    mia::LmModel target = mia::train(cfg, member_windows, 1);

    // memorized samples score lower than unseen ones under the raw loss
    double member_ppx = 0.0, nonmember_ppx = 0.0;
    for (int i = 0; i < 32; ++i) {
        member_ppx += mia::perplexity(target, member_windows[static_cast<std::size_t>(i)]);
        nonmember_ppx +=
            mia::perplexity(target, nonmember_windows[static_cast<std::size_t>(i)]);
    }
    CHECK(member_ppx / 32.0 < nonmember_ppx / 32.0);

    // calibration halves for the sigma search, evaluation halves for the test
    std::vector<mia::AuditSample> cal_m, cal_n, eval_m, eval_n;
    std::uint64_t id = 0;
    for (std::size_t i = 0; i < member_windows.size(); ++i, ++id) {
        (i < 48 ? cal_m : eval_m).push_back({id, member_windows[i]});
    }
    for (std::size_t i = 0; i < nonmember_windows.size(); ++i, ++id) {
        (i < 32 ? cal_n : eval_n).push_back({id, nonmember_windows[i]});
    }

    mia::SigmaSearchResult found =
        mia::sigma_search(target, cal_m, cal_n, 1e-3, 10.0, 10, 1e-2, 555);

    mia::StrategySpec spec;
    spec.kind = mia::StrategyKind::noisy;
    spec.sigma = found.sigma_star;
    spec.neighbor_count = 10;
    spec.seed = 556;
    auto records = mia::audit(target, spec, eval_m, eval_n);

    std::vector<double> member_scores, nonmember_scores;
    for (const auto& r : records) {
        (r.is_member ? member_scores : nonmember_scores).push_back(r.calibrated_score);
    }
    double mean_m = 0.0, mean_n = 0.0;
    for (double s : member_scores) mean_m += s;
    for (double s : nonmember_scores) mean_n += s;
    mean_m /= static_cast<double>(member_scores.size());
    mean_n /= static_cast<double>(nonmember_scores.size());

    CHECK(mean_m < mean_n);
    double p = welch_p_one_sided(member_scores, nonmember_scores);
    CHECK(p < 0.01);

    // re-evaluating the calibration set with the probe seed reproduces the
    // probe AUC
    mia::StrategySpec probe_spec = spec;
    probe_spec.seed = 555;
    auto cal_records = mia::audit(target, probe_spec, cal_m, cal_n);
    double cal_auc = mia::auc(mia::roc(cal_records));
    double best_probe = 0.0;
    for (const auto& pr : found.probe_log) {
        if (pr.sigma == found.sigma_star) best_probe = pr.auc;
    }
    CHECK(std::abs(cal_auc - best_probe) < 1e-9);
}
