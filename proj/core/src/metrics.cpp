#include "mia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "mia/error.hpp"

namespace mia {

namespace {

std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw DataError(Errc::io_failure, "cannot write " + path.string());
    }
}

// Continued fraction for the incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double ibeta_reg(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || x < 0.0 || x > 1.0) {
        throw DataError(Errc::bad_interval_params,
                        "ibeta_reg arguments out of domain");
    }
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                   a * std::log(x) + b * std::log1p(-x);
    double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return bt * betacf(a, b, x) / a;
    }
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double ibeta_inv(double a, double b, double p) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    // 1e-10 target per the interval contract; ~35 halvings.
    while (hi - lo > 1e-10) {
        double mid = 0.5 * (lo + hi);
        if (ibeta_reg(a, b, mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

RocCurve roc(std::span<const ScoreRecord> records) {
    std::vector<double> member_scores, nonmember_scores;
    for (const auto& r : records) {
        (r.is_member ? member_scores : nonmember_scores)
            .push_back(r.calibrated_score);
    }
    if (member_scores.empty() || nonmember_scores.empty()) {
        throw DataError(Errc::single_class_input,
                        "ROC needs at least one member and one non-member");
    }
    std::sort(member_scores.begin(), member_scores.end());
    std::sort(nonmember_scores.begin(), nonmember_scores.end());

    std::vector<double> all;
    all.reserve(records.size());
    all.insert(all.end(), member_scores.begin(), member_scores.end());
    all.insert(all.end(), nonmember_scores.begin(), nonmember_scores.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    // Thresholds: -inf, midpoints between consecutive distinct scores, +inf.
    // Equal scores sit on the same side of every threshold, so ties flip
    // together by construction.
    std::vector<double> gammas;
    gammas.reserve(all.size() + 1);
    gammas.push_back(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        gammas.push_back(0.5 * (all[i] + all[i + 1]));
    }
    gammas.push_back(std::numeric_limits<double>::infinity());

    RocCurve curve;
    curve.n_members = member_scores.size();
    curve.n_nonmembers = nonmember_scores.size();
    curve.points.reserve(gammas.size());
    for (double g : gammas) {
        auto tp = static_cast<std::size_t>(
            std::lower_bound(member_scores.begin(), member_scores.end(), g) -
            member_scores.begin());
        auto fp = static_cast<std::size_t>(
            std::lower_bound(nonmember_scores.begin(), nonmember_scores.end(), g) -
            nonmember_scores.begin());
        if (!curve.points.empty() && curve.points.back().tp == tp &&
            curve.points.back().fp == fp) {
            continue;  // midpoint collapsed onto a neighbor at double precision
        }
        RocPoint pt;
        pt.gamma = g;
        pt.tp = tp;
        pt.fp = fp;
        pt.fn = curve.n_members - tp;
        pt.tn = curve.n_nonmembers - fp;
        pt.tpr = static_cast<double>(tp) / static_cast<double>(curve.n_members);
        pt.fpr = static_cast<double>(fp) / static_cast<double>(curve.n_nonmembers);
        curve.points.push_back(pt);
    }
    return curve;
}

double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
        const auto& a = curve.points[i];
        const auto& b = curve.points[i + 1];
        area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    return area;
}

TprAtFpr tpr_at_fpr(const RocCurve& curve, double fpr_target,
                    double confidence) {
    if (fpr_target < 0.0 || fpr_target > 1.0) {
        throw DataError(Errc::bad_interval_params,
                        "fpr_target outside [0, 1]");
    }
    // Points are sorted by ascending FPR; among equal FPRs the later point
    // has the larger TPR, so the last qualifying point is the operating
    // point an auditor would quote.
    const RocPoint* best = &curve.points.front();
    for (const auto& pt : curve.points) {
        if (pt.fpr <= fpr_target) best = &pt;
    }
    TprAtFpr out;
    out.fpr_target = fpr_target;
    out.fpr_achieved = best->fpr;
    out.tpr = best->tpr;
    out.tpr_interval = clopper_pearson(best->tp, curve.n_members, confidence);
    return out;
}

BinomialInterval clopper_pearson(std::size_t k, std::size_t n,
                                 double confidence) {
    if (n < 1 || k > n || !(confidence > 0.0 && confidence < 1.0)) {
        throw DataError(Errc::bad_interval_params,
                        "clopper_pearson needs 0 <= k <= n, n >= 1, "
                        "confidence in (0, 1)");
    }
    const double alpha = 1.0 - confidence;
    BinomialInterval out;
    out.k = k;
    out.n = n;
    out.confidence = confidence;
    out.lo = (k == 0) ? 0.0
                      : ibeta_inv(static_cast<double>(k),
                                  static_cast<double>(n - k + 1), alpha / 2.0);
    out.hi = (k == n) ? 1.0
                      : ibeta_inv(static_cast<double>(k + 1),
                                  static_cast<double>(n - k), 1.0 - alpha / 2.0);
    return out;
}

EpsCurve empirical_epsilon(const RocCurve& curve) {
    EpsCurve out;
    for (const auto& pt : curve.points) {
        if (pt.fpr <= 0.0 || pt.tpr <= 0.0) {
            ++out.skipped_points;
            continue;
        }
        EpsPoint e;
        e.fpr = pt.fpr;
        e.tpr = pt.tpr;
        e.eps_lower = std::log(pt.tpr / pt.fpr);
        BinomialInterval tpr_iv = clopper_pearson(pt.tp, curve.n_members);
        BinomialInterval fpr_iv = clopper_pearson(pt.fp, curve.n_nonmembers);
        e.eps_conservative = std::log(tpr_iv.lo / fpr_iv.hi);
        e.eps_optimistic = std::log(tpr_iv.hi / fpr_iv.lo);
        out.points.push_back(e);
    }
    return out;
}

std::string roc_csv(const RocCurve& curve) {
    std::string s = "gamma,tp,fp,fn,tn,tpr,fpr\n";
    for (const auto& p : curve.points) {
        s += fmt_g17(p.gamma) + "," + std::to_string(p.tp) + "," +
             std::to_string(p.fp) + "," + std::to_string(p.fn) + "," +
             std::to_string(p.tn) + "," + fmt_g17(p.tpr) + "," +
             fmt_g17(p.fpr) + "\n";
    }
    return s;
}

void save_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
    write_text_file(path, roc_csv(curve));
}

std::string eps_csv(const EpsCurve& curve) {
    std::string s = "fpr,tpr,eps_lower,eps_conservative,eps_optimistic\n";
    for (const auto& p : curve.points) {
        s += fmt_g17(p.fpr) + "," + fmt_g17(p.tpr) + "," +
             fmt_g17(p.eps_lower) + "," + fmt_g17(p.eps_conservative) + "," +
             fmt_g17(p.eps_optimistic) + "\n";
    }
    return s;
}

void save_eps_csv(const EpsCurve& curve, const std::filesystem::path& path) {
    write_text_file(path, eps_csv(curve));
}

}  // namespace mia
