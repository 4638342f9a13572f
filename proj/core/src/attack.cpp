#include "mia/attack.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mia/error.hpp"
#include "mia/metrics.hpp"

namespace mia {

const char* strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::loss: return "loss";
        case StrategyKind::shadow: return "shadow";
        case StrategyKind::noisy: return "noisy";
    }
    return "unknown";
}

StrategyKind strategy_from_name(const std::string& name) {
    if (name == "loss") return StrategyKind::loss;
    if (name == "shadow") return StrategyKind::shadow;
    if (name == "noisy") return StrategyKind::noisy;
    throw DataError(Errc::bad_strategy, "unknown strategy: " + name);
}

void StrategySpec::validate() const {
    if (kind == StrategyKind::noisy) {
        if (sigma < 0.0 || !std::isfinite(sigma)) {
            throw DataError(Errc::negative_sigma, "sigma must be >= 0");
        }
        if (neighbor_count < 1) {
            throw DataError(Errc::bad_strategy, "neighbor_count must be >= 1");
        }
    }
    if (kind == StrategyKind::shadow && shadow_count < 1) {
        throw DataError(Errc::bad_strategy, "shadow_count must be >= 1");
    }
}

ScoreRecord score_loss(const LmModel& model, const TokenSequence& x) {
    ScoreRecord r;
    r.strategy.kind = StrategyKind::loss;
    r.raw_ppx = perplexity(model, x);
    r.calibrated_score = r.raw_ppx;
    return r;
}

ScoreRecord score_shadow(const LmModel& model,
                         std::span<const LmModel> shadows,
                         const TokenSequence& x) {
    if (shadows.empty()) {
        throw DataError(Errc::empty_shadow_list,
                        "shadow calibration needs at least one shadow model");
    }
    ScoreRecord r;
    r.strategy.kind = StrategyKind::shadow;
    r.strategy.shadow_count = static_cast<int>(shadows.size());
    r.raw_ppx = perplexity(model, x);
    // Accumulate deltas against the raw score: numerically centered, and
    // exactly zero when the shadows coincide with the target.
    double sum_d = 0.0, sum_d2 = 0.0;
    for (const auto& shadow : shadows) {
        double d = perplexity(shadow, x) - r.raw_ppx;
        sum_d += d;
        sum_d2 += d * d;
    }
    const auto n = static_cast<double>(shadows.size());
    double mean_d = sum_d / n;
    r.neighbor_ppx_mean = r.raw_ppx + mean_d;
    r.neighbor_ppx_std =
        shadows.size() > 1
            ? std::sqrt(std::max(0.0, (sum_d2 - n * mean_d * mean_d) / (n - 1.0)))
            : 0.0;
    r.calibrated_score = -mean_d;  // == raw - neighbor mean
    return r;
}

EmbeddingSeq make_noisy_neighbor(const LmModel& model, const TokenSequence& x,
                                 double sigma, Rng& rng) {
    if (sigma < 0.0 || !std::isfinite(sigma)) {
        throw DataError(Errc::negative_sigma, "sigma must be >= 0");
    }
    EmbeddingSeq h = embed(model, x);
    for (Eigen::Index t = 0; t < h.rows(); ++t) {
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            h(t, j) += static_cast<float>(sigma * rng.next_normal());
        }
    }
    return h;
}

ScoreRecord score_noisy(const LmModel& model, const TokenSequence& x,
                        double sigma, int neighbor_count, Rng& rng) {
    if (neighbor_count < 1) {
        throw DataError(Errc::bad_strategy, "neighbor_count must be >= 1");
    }
    ScoreRecord r;
    r.strategy.kind = StrategyKind::noisy;
    r.strategy.sigma = sigma;
    r.strategy.neighbor_count = neighbor_count;
    r.raw_ppx = perplexity(model, x);
    double sum_d = 0.0, sum_d2 = 0.0;
    for (int k = 0; k < neighbor_count; ++k) {
        EmbeddingSeq h = make_noisy_neighbor(model, x, sigma, rng);
        double d = perplexity_from_embeddings(model, h, x) - r.raw_ppx;
        sum_d += d;
        sum_d2 += d * d;
    }
    const auto n = static_cast<double>(neighbor_count);
    double mean_d = sum_d / n;
    r.neighbor_ppx_mean = r.raw_ppx + mean_d;
    r.neighbor_ppx_std =
        neighbor_count > 1
            ? std::sqrt(std::max(0.0, (sum_d2 - n * mean_d * mean_d) / (n - 1.0)))
            : 0.0;
    r.calibrated_score = -mean_d;
    return r;
}

SigmaSearchResult find_sigma_peak(const std::function<double(double)>& objective,
                                  double lo, double hi, double tol,
                                  int max_evals) {
    if (!(lo >= 0.0) || !(lo < hi) || !std::isfinite(hi)) {
        throw NumericError(Errc::invalid_bracket,
                           "sigma bracket must satisfy 0 <= lo < hi");
    }
    if (!(tol > 0.0)) {
        throw NumericError(Errc::invalid_bracket, "tol must be positive");
    }

    SigmaSearchResult res;
    int evals = 0;
    auto probe = [&](double sigma) {
        double j = objective(sigma);
        res.probe_log.push_back({sigma, j});
        ++evals;
        return j;
    };

    // Geometric grid needs a positive start; a zero lower edge is replaced
    // by hi * 1e-6 (sigma = 0 is the uninformative collapse anyway).
    const double grid_lo = lo > 0.0 ? lo : hi * 1e-6;
    constexpr int kGrid = 8;
    const double ratio = std::pow(hi / grid_lo, 1.0 / (kGrid - 1));
    std::array<double, kGrid> gs{};
    std::array<double, kGrid> js{};
    for (int i = 0; i < kGrid; ++i) {
        gs[static_cast<std::size_t>(i)] =
            (i == kGrid - 1) ? hi : grid_lo * std::pow(ratio, i);
        js[static_cast<std::size_t>(i)] = probe(gs[static_cast<std::size_t>(i)]);
    }
    int best = 0;
    for (int i = 1; i < kGrid; ++i) {
        if (js[static_cast<std::size_t>(i)] > js[static_cast<std::size_t>(best)]) best = i;
    }
    res.bracket_lo = gs[static_cast<std::size_t>(std::max(0, best - 1))];
    res.bracket_hi = gs[static_cast<std::size_t>(std::min(kGrid - 1, best + 1))];

    // Golden-section in log space on the bracketing triple.
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double ulo = std::log(res.bracket_lo);
    double uhi = std::log(res.bracket_hi);
    double u1 = uhi - phi * (uhi - ulo);
    double u2 = ulo + phi * (uhi - ulo);
    double j1 = probe(std::exp(u1));
    double j2 = probe(std::exp(u2));
    while (std::exp(uhi) - std::exp(ulo) > tol && evals < max_evals) {
        if (j1 < j2) {
            ulo = u1;
            u1 = u2;
            j1 = j2;
            u2 = ulo + phi * (uhi - ulo);
            j2 = probe(std::exp(u2));
        } else {
            uhi = u2;
            u2 = u1;
            j2 = j1;
            u1 = uhi - phi * (uhi - ulo);
            j1 = probe(std::exp(u1));
        }
    }

    // Argmax over everything probed; the first max is a grid point or lies
    // inside the bracket, so the bracket invariant holds either way.
    const SigmaProbe* top = &res.probe_log.front();
    for (const auto& p : res.probe_log) {
        if (p.auc > top->auc) top = &p;
    }
    res.sigma_star = top->sigma;
    return res;
}

SigmaSearchResult sigma_search(const LmModel& model,
                               std::span<const AuditSample> cal_members,
                               std::span<const AuditSample> cal_nonmembers,
                               double lo, double hi, int neighbor_count,
                               double tol, std::uint64_t seed,
                               std::span<const std::uint64_t> reserved_eval_ids) {
    if (cal_members.empty() || cal_nonmembers.empty()) {
        throw DataError(Errc::bad_strategy,
                        "sigma search needs non-empty calibration sets");
    }
    std::unordered_set<std::uint64_t> cal_ids;
    for (const auto& s : cal_members) cal_ids.insert(s.id);
    for (const auto& s : cal_nonmembers) {
        if (!cal_ids.insert(s.id).second) {
            throw DataError(Errc::calibration_overlap,
                            "duplicate sample id across calibration pools: " +
                                std::to_string(s.id));
        }
    }
    for (std::uint64_t id : reserved_eval_ids) {
        if (cal_ids.count(id)) {
            throw DataError(Errc::calibration_overlap,
                            "calibration sample " + std::to_string(id) +
                                " also appears in the evaluation set");
        }
    }

    auto objective = [&](double sigma) {
        StrategySpec spec;
        spec.kind = StrategyKind::noisy;
        spec.sigma = sigma;
        spec.neighbor_count = neighbor_count;
        spec.seed = seed;  // same seed for every probe: J is a function
        auto records = audit(model, spec, cal_members, cal_nonmembers);
        return auc(roc(records));
    };
    return find_sigma_peak(objective, lo, hi, tol);
}

std::vector<ScoreRecord> audit(const LmModel& model, const StrategySpec& strategy,
                               std::span<const AuditSample> members,
                               std::span<const AuditSample> nonmembers,
                               std::span<const LmModel> shadows) {
    strategy.validate();
    if (strategy.kind == StrategyKind::shadow && shadows.empty()) {
        throw DataError(Errc::missing_resource,
                        "shadow strategy requested without shadow models");
    }

    struct Item {
        const AuditSample* sample;
        bool is_member;
    };
    std::vector<Item> items;
    items.reserve(members.size() + nonmembers.size());
    for (const auto& s : members) items.push_back({&s, true});
    for (const auto& s : nonmembers) items.push_back({&s, false});

    std::vector<ScoreRecord> records(items.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(items.size()); ++i) {
        const auto& item = items[static_cast<std::size_t>(i)];
        ScoreRecord r;
        switch (strategy.kind) {
            case StrategyKind::loss:
                r = score_loss(model, item.sample->seq);
                break;
            case StrategyKind::shadow:
                r = score_shadow(model, shadows, item.sample->seq);
                break;
            case StrategyKind::noisy: {
                Rng stream = derive_stream(strategy.seed, item.sample->id);
                r = score_noisy(model, item.sample->seq, strategy.sigma,
                                strategy.neighbor_count, stream);
                break;
            }
        }
        r.sample_id = item.sample->id;
        r.is_member = item.is_member;
        r.strategy = strategy;
        records[static_cast<std::size_t>(i)] = std::move(r);
    }
    return records;
}

namespace {

std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string opt_num(double v) {
    return std::isnan(v) ? std::string() : fmt_g17(v);
}

}  // namespace

std::string score_records_csv(std::span<const ScoreRecord> records) {
    std::string s =
        "sample_id,is_member,raw_ppx,calibrated_score,neighbor_ppx_mean,"
        "neighbor_ppx_std,strategy,sigma,K,seed\n";
    for (const auto& r : records) {
        const bool noisy = r.strategy.kind == StrategyKind::noisy;
        s += std::to_string(r.sample_id) + "," + (r.is_member ? "1" : "0") +
             "," + fmt_g17(r.raw_ppx) + "," + fmt_g17(r.calibrated_score) +
             "," + opt_num(r.neighbor_ppx_mean) + "," +
             opt_num(r.neighbor_ppx_std) + "," +
             strategy_name(r.strategy.kind) + "," +
             (noisy ? fmt_g17(r.strategy.sigma) : std::string()) + "," +
             (noisy ? std::to_string(r.strategy.neighbor_count) : std::string()) +
             "," + std::to_string(r.strategy.seed) + "\n";
    }
    return s;
}

void save_score_records_csv(std::span<const ScoreRecord> records,
                            const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::string csv = score_records_csv(records);
    if (!out.write(csv.data(), static_cast<std::streamsize>(csv.size()))) {
        throw DataError(Errc::io_failure, "cannot write " + path.string());
    }
}

std::string score_records_json(std::span<const ScoreRecord> records) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : records) {
        nlohmann::ordered_json o;
        o["sample_id"] = r.sample_id;
        o["is_member"] = r.is_member;
        o["raw_ppx"] = r.raw_ppx;
        o["calibrated_score"] = r.calibrated_score;
        if (!std::isnan(r.neighbor_ppx_mean)) {
            o["neighbor_ppx_mean"] = r.neighbor_ppx_mean;
            o["neighbor_ppx_std"] = r.neighbor_ppx_std;
        }
        o["strategy"] = strategy_name(r.strategy.kind);
        if (r.strategy.kind == StrategyKind::noisy) {
            o["sigma"] = r.strategy.sigma;
            o["K"] = r.strategy.neighbor_count;
        }
        o["seed"] = r.strategy.seed;
        arr.push_back(std::move(o));
    }
    return arr.dump(2);
}

}  // namespace mia
