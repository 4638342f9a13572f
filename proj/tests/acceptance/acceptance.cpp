// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Criteria 8-9 run the full desk-scale audit protocol on
// the bundled corpus and dominate the runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mia/attack.hpp"
#include "mia/checkpoint.hpp"
#include "mia/config.hpp"
#include "mia/lm.hpp"
#include "mia/metrics.hpp"
#include "mia/pipeline.hpp"
#include "mia/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& s) {
        if (!detail.empty()) detail += "; ";
        detail += s;
    }
};

std::string fmt(double v, int prec = 4) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

mia::TokenSequence random_seq(mia::Rng& rng, std::size_t len) {
    mia::TokenSequence x;
    for (std::size_t i = 0; i < len; ++i) {
        x.tokens.push_back(static_cast<std::int32_t>(rng.bounded(256)));
    }
    return x;
}

// ---- criterion 1: E||rho|| = sigma * sqrt(n) within 2% (n = 64) ----------

Outcome criterion_noise_distance() {
    Outcome out;
    mia::LmConfig cfg;  // d_model 64
    mia::LmModel zero = mia::LmModel::zeros(cfg);
    mia::TokenSequence x;
    x.tokens.assign(10, 0);  // embed == 0, so the neighbor IS rho

    for (double sigma : {0.05, 0.1, 0.5}) {
        mia::Rng stream(0xABCD ^ static_cast<std::uint64_t>(sigma * 1e4));
        double acc = 0.0;
        std::size_t rows = 0;
        for (int rep = 0; rep < 1000; ++rep) {  // 1000 x 10 rows = 1e4 draws
            mia::EmbeddingSeq rho = mia::make_noisy_neighbor(zero, x, sigma, stream);
            for (Eigen::Index t = 0; t < rho.rows(); ++t) {
                acc += std::sqrt(rho.row(t).cast<double>().squaredNorm());
                ++rows;
            }
        }
        double mean = acc / static_cast<double>(rows);
        double expected = sigma * 8.0;  // sqrt(64)
        double rel = std::abs(mean - expected) / expected;
        out.require(rel < 0.02, "sigma=" + fmt(sigma, 2) + " rel err " + fmt(rel, 4));
        out.note("sigma=" + fmt(sigma, 2) + ": mean " + fmt(mean, 4) + " vs " +
                 fmt(expected, 4));
    }
    return out;
}

// ---- criterion 2: perplexity oracles --------------------------------------

Outcome criterion_perplexity_oracle() {
    Outcome out;
    mia::LmConfig cfg;
    mia::LmModel uniform = mia::LmModel::zeros(cfg);
    const double ln256 = std::log(256.0);
    mia::Rng rng(2);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        mia::TokenSequence x = random_seq(rng, 126);
        worst = std::max(worst, std::abs(mia::perplexity(uniform, x) - ln256));
    }
    out.require(worst <= 1e-6, "uniform |ppx - ln 256| = " + fmt(worst, 9));
    out.note("uniform max dev " + fmt(worst, 9));

    // perfect prediction: one token's embedding dominates the tied head
    mia::LmModel perfect = mia::LmModel::zeros(cfg);
    const int c = 7;
    for (const auto& s : perfect.tensors()) {
        auto params = perfect.params();
        if (s.name == "wte") {
            params[s.offset + static_cast<std::size_t>(c) * static_cast<std::size_t>(s.cols)] = 5.0f;
        } else if (s.name.ends_with("gamma")) {
            for (std::size_t i = 0; i < s.size(); ++i) params[s.offset + i] = 1.0f;
        }
    }
    mia::TokenSequence rep;
    rep.tokens.assign(100, c);
    double ppx = mia::perplexity(perfect, rep);
    out.require(ppx < 1e-6, "perfect-prediction ppx = " + fmt(ppx, 9));
    out.note("perfect ppx " + fmt(ppx, 9));
    return out;
}

// ---- criterion 3: trapezoid AUC == Mann-Whitney ----------------------------

Outcome criterion_auc_oracle() {
    Outcome out;
    mia::Rng rng(3);
    double worst = 0.0;
    for (int set = 0; set < 200; ++set) {
        std::size_t nm = 1 + rng.bounded(100);
        std::size_t nn = 1 + rng.bounded(100);
        std::vector<mia::ScoreRecord> records;
        std::vector<double> ms, ns;
        auto push = [&](bool member, double score) {
            mia::ScoreRecord r;
            r.sample_id = records.size();
            r.is_member = member;
            r.calibrated_score = score;
            records.push_back(r);
            (member ? ms : ns).push_back(score);
        };
        for (std::size_t i = 0; i < nm; ++i) {
            push(true, std::floor(rng.next_normal(0.0, 2.0) * 4.0) / 4.0);
        }
        for (std::size_t i = 0; i < nn; ++i) {
            push(false, std::floor(rng.next_normal(0.3, 2.0) * 4.0) / 4.0);
        }
        double trap = mia::auc(mia::roc(records));
        double mw = 0.0;
        for (double m : ms) {
            for (double n : ns) mw += (m < n) ? 1.0 : (m == n ? 0.5 : 0.0);
        }
        mw /= static_cast<double>(nm) * static_cast<double>(nn);
        worst = std::max(worst, std::abs(trap - mw));
    }
    out.require(worst < 1e-12, "max |trap - MW| = " + fmt(worst, 15));
    out.note("200 sets, max dev " + fmt(worst, 15));
    return out;
}

// ---- criterion 4: Clopper-Pearson ------------------------------------------

Outcome criterion_clopper_pearson() {
    Outcome out;
    auto iv = mia::clopper_pearson(0, 10, 0.95);
    double closed_form = 1.0 - std::pow(0.025, 0.1);
    out.require(std::abs(iv.hi - 0.3085) <= 1e-3,
                "k=0 upper " + fmt(iv.hi, 5) + " != 0.3085");
    out.require(std::abs(iv.hi - closed_form) <= 1e-9,
                "k=0 upper disagrees with the closed form");
    out.note("k=0,n=10 upper " + fmt(iv.hi, 5));

    mia::Rng rng(4);
    const std::size_t n = 50;
    for (double p : {0.05, 0.5, 0.95}) {
        int covered = 0;
        const int trials = 10000;
        for (int t = 0; t < trials; ++t) {
            std::size_t k = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (rng.next_unit() < p) ++k;
            }
            auto ci = mia::clopper_pearson(k, n, 0.95);
            if (ci.lo <= p && p <= ci.hi) ++covered;
        }
        double rate = static_cast<double>(covered) / trials;
        out.require(rate >= 0.95, "coverage " + fmt(rate, 4) + " at p=" + fmt(p, 2));
        out.note("p=" + fmt(p, 2) + " coverage " + fmt(rate, 4));
    }
    return out;
}

// ---- criterion 5: empirical epsilon ----------------------------------------

Outcome criterion_empirical_epsilon() {
    Outcome out;
    // exactness on a structured score set
    mia::Rng rng(5);
    std::vector<mia::ScoreRecord> records;
    for (int i = 0; i < 400; ++i) {
        mia::ScoreRecord r;
        r.sample_id = static_cast<std::uint64_t>(i);
        r.is_member = i % 2 == 0;
        r.calibrated_score = rng.next_normal(r.is_member ? -0.3 : 0.3, 1.0);
        records.push_back(r);
    }
    mia::RocCurve curve = mia::roc(records);
    mia::EpsCurve eps = mia::empirical_epsilon(curve);
    bool exact = !eps.points.empty();
    for (const auto& e : eps.points) {
        if (e.eps_lower != std::log(e.tpr / e.fpr)) exact = false;
    }
    out.require(exact, "eps != ln(tpr/fpr) at some point");
    out.note(std::to_string(eps.points.size()) + " eps points exact");

    // coin-flip classifier: 1e4 Bernoulli scores
    std::vector<mia::ScoreRecord> coins;
    for (int i = 0; i < 10000; ++i) {
        mia::ScoreRecord r;
        r.sample_id = static_cast<std::uint64_t>(i);
        r.is_member = i < 5000;
        r.calibrated_score = rng.next_unit() < 0.5 ? 0.0 : 1.0;
        coins.push_back(r);
    }
    mia::EpsCurve coin_eps = mia::empirical_epsilon(mia::roc(coins));
    double max_eps = 0.0;
    for (const auto& e : coin_eps.points) {
        if (e.fpr >= 1e-2) max_eps = std::max(max_eps, e.eps_lower);
    }
    out.require(max_eps < 0.3, "coin-flip max eps " + fmt(max_eps, 4));
    out.note("coin-flip max eps " + fmt(max_eps, 4) + " over fpr >= 1e-2");
    return out;
}

// ---- criterion 6: gradient check --------------------------------------------

Outcome criterion_grad_check() {
    Outcome out;
    mia::LmConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 4;
    cfg.context_len = 32;
    cfg.seed = 6;
    mia::Rng rng(6);
    mia::TokenSequence x = random_seq(rng, 16);
    double worst = mia::grad_check(cfg, x);  // 128 sampled parameters
    out.require(worst < 1e-3, "max rel err " + fmt(worst, 7));
    out.note("max rel err " + fmt(worst, 7) + " on 128 params");
    return out;
}

// ---- criterion 7: sigma search on the synthetic objective ------------------

Outcome criterion_sigma_search() {
    Outcome out;
    int evals = 0;
    auto objective = [&evals](double sigma) {
        ++evals;
        double d = std::log(sigma) - std::log(0.3);
        return 0.5 + 0.3 * std::exp(-d * d);
    };
    mia::SigmaSearchResult res = mia::find_sigma_peak(objective, 1e-3, 10.0, 1e-2);
    out.require(std::abs(res.sigma_star - 0.3) <= 1e-2,
                "sigma* = " + fmt(res.sigma_star, 5));
    out.require(evals <= 40, std::to_string(evals) + " evaluations > 40");
    out.note("sigma* " + fmt(res.sigma_star, 4) + " in " + std::to_string(evals) +
             " evals");
    return out;
}

// ---- criteria 8/9: desk-scale end-to-end audit ------------------------------

struct SeedResult {
    double auc_loss = 0.0, auc_shadow = 0.0, auc_noisy = 0.0;
    double unimodal_dev = 0.0, noise_slack = 0.0;
    fs::path out_dir;
};

// Deviation of the probe log from its best unimodal (rise-then-fall)
// envelope. Zero for perfectly unimodal data; probe noise makes it small
// but nonzero.
double unimodal_deviation(std::vector<mia::SigmaProbe> probes) {
    std::sort(probes.begin(), probes.end(),
              [](const mia::SigmaProbe& a, const mia::SigmaProbe& b) {
                  return a.sigma < b.sigma;
              });
    const std::size_t n = probes.size();
    std::vector<double> j(n);
    for (std::size_t i = 0; i < n; ++i) j[i] = probes[i].auc;
    // dev_up[i]: worst drop below the running max when scanning 0..i
    std::vector<double> dev_up(n), dev_down(n);
    double run_max = -1.0, worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        run_max = std::max(run_max, j[i]);
        worst = std::max(worst, run_max - j[i]);
        dev_up[i] = worst;
    }
    run_max = -1.0;
    worst = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        run_max = std::max(run_max, j[i]);
        worst = std::max(worst, run_max - j[i]);
        dev_down[i] = worst;
    }
    double best = 1.0;
    for (std::size_t p = 0; p < n; ++p) {
        double up = p > 0 ? dev_up[p - 1] : 0.0;
        best = std::min(best, std::max(up, dev_down[p]));
    }
    return best;
}

SeedResult run_pipeline_for_seed(const mia::RunConfig& base, std::uint64_t seed,
                                 const fs::path& out_root, std::ostream& log) {
    mia::RunConfig cfg = base;
    cfg.master_seed = seed;
    fs::path dir = out_root / ("seed" + std::to_string(seed));
    fs::remove_all(dir);
    cfg.out_dir = dir.string();

    mia::cmd_train(cfg, log);
    mia::cmd_shadows(cfg, log);
    mia::cmd_sigma_search(cfg, log);
    mia::cmd_audit(cfg,
                   {mia::StrategyKind::loss, mia::StrategyKind::shadow,
                    mia::StrategyKind::noisy},
                   log);

    mia::OutputPaths paths{dir};
    SeedResult r;
    r.out_dir = dir;
    std::ifstream rin(paths.report());
    json report;
    rin >> report;
    r.auc_loss = report.at("strategies").at("loss").at("auc").get<double>();
    r.auc_shadow = report.at("strategies").at("shadow").at("auc").get<double>();
    r.auc_noisy = report.at("strategies").at("noisy").at("auc").get<double>();

    std::ifstream sin(paths.sigma_result());
    json sigma_json;
    sin >> sigma_json;
    std::vector<mia::SigmaProbe> probes;
    double best_auc = 0.5;
    for (const auto& p : sigma_json.at("probes")) {
        probes.push_back({p.at("sigma").get<double>(), p.at("auc").get<double>()});
        best_auc = std::max(best_auc, probes.back().auc);
    }
    r.unimodal_dev = unimodal_deviation(probes);
    // Probe noise scale: three Hanley-McNeil standard errors of an AUC
    // estimated from the capped calibration sets.
    auto n_m = sigma_json.at("calibration").at("n_members").get<double>();
    auto n_n = sigma_json.at("calibration").at("n_nonmembers").get<double>();
    double a = best_auc;
    double q1 = a / (2.0 - a), q2 = 2.0 * a * a / (1.0 + a);
    double se = std::sqrt((a * (1.0 - a) + (n_m - 1.0) * (q1 - a * a) +
                           (n_n - 1.0) * (q2 - a * a)) /
                          (n_m * n_n));
    r.noise_slack = 3.0 * se;
    return r;
}

Outcome criterion_end_to_end(const std::string& config_path,
                             const std::string& corpus_override,
                             const fs::path& out_root,
                             std::vector<SeedResult>& results) {
    Outcome out;
    mia::RunConfig base = mia::load_run_config(config_path);
    if (!corpus_override.empty()) base.corpus_path = corpus_override;
    std::ostringstream sink;
    double mean_loss = 0.0, mean_shadow = 0.0, mean_noisy = 0.0;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        SeedResult r = run_pipeline_for_seed(base, seed, out_root, sink);
        std::cout << "    seed " << seed << ": loss " << fmt(r.auc_loss, 3)
                  << ", shadow " << fmt(r.auc_shadow, 3) << ", noisy "
                  << fmt(r.auc_noisy, 3) << ", unimodal dev "
                  << fmt(r.unimodal_dev, 3) << " (slack " << fmt(r.noise_slack, 3)
                  << ")\n";
        mean_loss += r.auc_loss / 3.0;
        mean_shadow += r.auc_shadow / 3.0;
        mean_noisy += r.auc_noisy / 3.0;
        out.require(r.unimodal_dev <= r.noise_slack,
                    "seed " + std::to_string(seed) + " probe log not unimodal (dev " +
                        fmt(r.unimodal_dev, 3) + " > " + fmt(r.noise_slack, 3) + ")");
        results.push_back(r);
    }
    out.require(mean_loss > 0.55, "mean loss AUC " + fmt(mean_loss, 3) + " <= 0.55");
    out.require(mean_noisy >= mean_loss,
                "mean noisy AUC " + fmt(mean_noisy, 3) + " < loss " + fmt(mean_loss, 3));
    out.require(std::abs(mean_noisy - mean_shadow) <= 0.08,
                "|noisy - shadow| = " + fmt(std::abs(mean_noisy - mean_shadow), 3));
    out.note("mean AUC loss " + fmt(mean_loss, 3) + ", shadow " +
             fmt(mean_shadow, 3) + ", noisy " + fmt(mean_noisy, 3));
    return out;
}

Outcome criterion_determinism(const std::string& config_path,
                              const std::string& corpus_override,
                              const fs::path& out_root,
                              const std::vector<SeedResult>& results) {
    Outcome out;
    if (results.empty()) {
        out.require(false, "end-to-end runs unavailable");
        return out;
    }
    mia::RunConfig base = mia::load_run_config(config_path);
    if (!corpus_override.empty()) base.corpus_path = corpus_override;
    std::ostringstream sink;
    mia::RunConfig cfg = base;
    cfg.master_seed = 1;
    fs::path dir = out_root / "seed1_repeat";
    fs::remove_all(dir);
    cfg.out_dir = dir.string();
    mia::cmd_train(cfg, sink);
    mia::cmd_shadows(cfg, sink);
    mia::cmd_sigma_search(cfg, sink);
    mia::cmd_audit(cfg,
                   {mia::StrategyKind::loss, mia::StrategyKind::shadow,
                    mia::StrategyKind::noisy},
                   sink);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const fs::path first = results.front().out_dir;
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(first)) {
        if (entry.path().extension() != ".csv") continue;
        fs::path other = dir / entry.path().filename();
        bool same = fs::exists(other) && slurp(entry.path()) == slurp(other);
        out.require(same, entry.path().filename().string() + " differs");
        ++compared;
    }
    out.require(compared >= 10, "only " + std::to_string(compared) + " CSVs compared");
    out.note(std::to_string(compared) + " CSVs byte-identical");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance suite"};
    std::string config_path = "configs/audit.json";
    std::string corpus_override;
    std::string out_root = "acceptance_runs";
    std::vector<int> only;
    app.add_option("--config", config_path, "bundled audit config");
    app.add_option("--corpus", corpus_override,
                   "absolute corpus path (overrides the config)");
    app.add_option("--out-root", out_root, "scratch directory for e2e runs");
    app.add_option("--only", only, "run only these criterion numbers");
    CLI11_PARSE(app, argc, argv);

    auto enabled = [&](int id) {
        return only.empty() ||
               std::find(only.begin(), only.end(), id) != only.end();
    };

    std::vector<SeedResult> e2e_results;
    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const fs::path root(out_root);
    std::vector<Entry> entries = {
        {1, "noise-distance law E||rho|| = sigma*sqrt(n) (2%)",
         criterion_noise_distance},
        {2, "perplexity oracles (uniform = ln 256, perfect = 0)",
         criterion_perplexity_oracle},
        {3, "trapezoidal AUC == Mann-Whitney (1e-12)", criterion_auc_oracle},
        {4, "Clopper-Pearson closed form + coverage", criterion_clopper_pearson},
        {5, "empirical epsilon exactness + random classifier",
         criterion_empirical_epsilon},
        {6, "gradient check vs central differences (1e-3)", criterion_grad_check},
        {7, "sigma search on synthetic unimodal objective", criterion_sigma_search},
        {8, "desk-scale end-to-end audit (3 seeds)",
         [&] {
             return criterion_end_to_end(config_path, corpus_override, root,
                                         e2e_results);
         }},
        {9, "byte-for-byte determinism of the audit CSVs",
         [&] {
             return criterion_determinism(config_path, corpus_override, root,
                                          e2e_results);
         }},
    };

    int failures = 0;
    double total = 0.0;
    for (auto& e : entries) {
        if (!enabled(e.id)) continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = e.run();
        } catch (const std::exception& ex) {
            out.pass = false;
            out.detail = std::string("exception: ") + ex.what();
        }
        double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        total += secs;
        std::printf("[%s] criterion %d: %s (%.1fs) %s\n",
                    out.pass ? "PASS" : "FAIL", e.id, e.name, secs,
                    out.detail.c_str());
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    std::printf("acceptance total: %.1fs, %d failure(s)\n", total, failures);
    return failures == 0 ? 0 : 1;
}
