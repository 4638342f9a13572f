#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mia/attack.hpp"

namespace mia {

inline constexpr double kDefaultConfidence = 0.95;

struct RocPoint {
    double gamma = 0.0;  // threshold: predict member when score < gamma
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double tpr = 0.0, fpr = 0.0;
};

// Threshold sweep over the achievable operating points, sorted by ascending
// FPR, always containing (0,0) and (1,1).
struct RocCurve {
    std::vector<RocPoint> points;
    std::size_t n_members = 0;
    std::size_t n_nonmembers = 0;
};

struct BinomialInterval {
    std::size_t k = 0, n = 0;
    double confidence = kDefaultConfidence;
    double lo = 0.0, hi = 1.0;
};

struct TprAtFpr {
    double fpr_target = 0.0;
    double fpr_achieved = 0.0;
    double tpr = 0.0;
    BinomialInterval tpr_interval;
};

struct EpsPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double eps_lower = 0.0;  // ln(tpr / fpr), the Eq. 4 point estimate
    // Interval-adjusted variants, reported side by side: the conservative
    // one divides the TPR lower bound by the FPR upper bound.
    double eps_conservative = 0.0;
    double eps_optimistic = 0.0;
};

struct EpsCurve {
    std::vector<EpsPoint> points;     // sorted by fpr; fpr > 0 and tpr > 0
    std::size_t skipped_points = 0;   // curve points with fpr == 0 or tpr == 0
};

// Sweeps gamma over midpoints between consecutive distinct scores plus
// sentinel extremes; tied scores flip together. Lower score => member.
RocCurve roc(std::span<const ScoreRecord> records);

// Trapezoidal area; equals the Mann-Whitney pairwise statistic (ties 1/2).
double auc(const RocCurve& curve);

// The curve point with the largest achieved FPR <= target (no
// interpolation), with an exact binomial interval on its TPR.
TprAtFpr tpr_at_fpr(const RocCurve& curve, double fpr_target,
                    double confidence = kDefaultConfidence);

// Exact Clopper-Pearson interval via Beta quantiles, which are computed by
// bisection on the regularized incomplete beta function to 1e-10.
BinomialInterval clopper_pearson(std::size_t k, std::size_t n,
                                 double confidence = kDefaultConfidence);

// Empirical epsilon-DP lower bound e^eps >= TPR/FPR per curve point.
EpsCurve empirical_epsilon(const RocCurve& curve);

// Regularized incomplete beta I_x(a, b); exposed because the Welch t-test in
// the test suite and the quantile bisection both need it.
double ibeta_reg(double a, double b, double x);
// Inverse of I_x(a, b) in x by bisection.
double ibeta_inv(double a, double b, double p);

std::string roc_csv(const RocCurve& curve);
void save_roc_csv(const RocCurve& curve, const std::filesystem::path& path);
std::string eps_csv(const EpsCurve& curve);
void save_eps_csv(const EpsCurve& curve, const std::filesystem::path& path);

}  // namespace mia
