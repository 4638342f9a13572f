#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mia/lm.hpp"
#include "mia/rng.hpp"

namespace mia {

enum class StrategyKind { loss, shadow, noisy };

const char* strategy_name(StrategyKind kind);
StrategyKind strategy_from_name(const std::string& name);

struct StrategySpec {
    StrategyKind kind = StrategyKind::loss;
    double sigma = 0.0;       // noisy only
    int neighbor_count = 10;  // noisy only (K)
    int shadow_count = 10;    // shadow only
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-sample audit result. Lower calibrated_score means more member-like.
struct ScoreRecord {
    std::uint64_t sample_id = 0;
    bool is_member = false;
    double raw_ppx = 0.0;
    double calibrated_score = 0.0;
    StrategySpec strategy;
    // Set for shadow (over shadow models) and noisy (over neighbors);
    // NaN for the loss strategy.
    double neighbor_ppx_mean = std::numeric_limits<double>::quiet_NaN();
    double neighbor_ppx_std = std::numeric_limits<double>::quiet_NaN();
};

struct AuditSample {
    std::uint64_t id = 0;
    TokenSequence seq;
};

struct SigmaProbe {
    double sigma = 0.0;
    double auc = 0.0;
};

struct SigmaSearchResult {
    double sigma_star = 0.0;
    std::vector<SigmaProbe> probe_log;  // in evaluation order
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
};

// --- scoring -------------------------------------------------------------

// calibrated_score == rawperplexity (Eq. 2 thresholding input).
ScoreRecord score_loss(const LmModel& model, const TokenSequence& x);

// calibrated_score = ppx(f, x) - mean_i ppx(shadow_i, x).
ScoreRecord score_shadow(const LmModel& model,
                         std::span<const LmModel> shadows,
                         const TokenSequence& x);

// embed(model, x) + rho with rho i.i.d. N(0, sigma^2) per entry; a fresh
// draw per call from the supplied stream.
EmbeddingSeq make_noisy_neighbor(const LmModel& model, const TokenSequence& x,
                                 double sigma, Rng& rng);

// calibrated_score = ppx(f, x) - mean_k ppx over K noisy neighbors, each
// scored against the original tokens.
ScoreRecord score_noisy(const LmModel& model, const TokenSequence& x,
                        double sigma, int neighbor_count, Rng& rng);

// --- sigma search ----------------------------------------------------------

// Peak finder for a unimodal objective: an 8-point geometric grid over
// [lo, hi] brackets the maximum, then golden-section (in log space) narrows
// the bracket below `tol` (linear width). Every evaluation lands in the
// probe log.
SigmaSearchResult find_sigma_peak(const std::function<double(double)>& objective,
                                  double lo, double hi, double tol,
                                  int max_evals = 40);

// Objective J(sigma) = AUC of score_noisy over the calibration sets, with a
// fixed per-sample seed so J is deterministic. `reserved_eval_ids`, when
// given, is checked for leakage into the calibration pool.
SigmaSearchResult sigma_search(const LmModel& model,
                               std::span<const AuditSample> cal_members,
                               std::span<const AuditSample> cal_nonmembers,
                               double lo, double hi, int neighbor_count,
                               double tol, std::uint64_t seed,
                               std::span<const std::uint64_t> reserved_eval_ids = {});

// --- audit -----------------------------------------------------------------

// One record per sample, ground truth attached. Per-sample RNG streams are
// derived as seed XOR sample_id, so results are independent of input order
// and of how the loop is parallelized.
std::vector<ScoreRecord> audit(const LmModel& model, const StrategySpec& strategy,
                               std::span<const AuditSample> members,
                               std::span<const AuditSample> nonmembers,
                               std::span<const LmModel> shadows = {});

// --- serialization -----------------------------------------------------------

std::string score_records_csv(std::span<const ScoreRecord> records);
void save_score_records_csv(std::span<const ScoreRecord> records,
                            const std::filesystem::path& path);
std::string score_records_json(std::span<const ScoreRecord> records);

}  // namespace mia
