#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "jexit/conjugation.hpp"
#include "jexit/model.hpp"
#include "jexit/rng.hpp"

namespace jexit {

// Measured residuals per trial, from inverting the exit expansions:
//   rho_hat = exit_time - (1/lambda) log eps^-1 + ((d-1)/lambda) loglog eps^-1
//             (minus C^sign for outer-domain runs)
//   eta_hat = Y^(2) log^2 eps^-1 / (sign R lambda (d-1)) - log eps^-1
//             - (d-1) loglog eps^-1            (d >= 2, inner runs only)
struct ResidualSample {
    double rho_hat = 0.0;
    std::optional<double> eta_hat;
    int sign = 1;
    double epsilon = 0.0;
};

inline std::vector<ResidualSample> extract_residuals(const std::vector<TrialRecord>& records,
                                                     const ProblemSpec& spec,
                                                     const PoincareData* outer = nullptr) {
    const int d = spec.dim;
    const double lam = spec.lambda;
    const double R = spec.box_radius;
    std::vector<ResidualSample> out;
    out.reserve(records.size());
    for (const TrialRecord& rec : records) {
        const double L = std::log(1.0 / rec.epsilon);
        const double ll = std::log(L);
        ResidualSample r;
        r.sign = rec.exit_sign;
        r.epsilon = rec.epsilon;
        r.rho_hat = rec.exit_time - L / lam + (d - 1) * ll / lam;
        if (outer != nullptr) r.rho_hat -= outer->C(rec.exit_sign);
        if (d >= 2 && outer == nullptr) {
            r.eta_hat = rec.exit_point[1] * L * L / (rec.exit_sign * R * lam * (d - 1)) - L -
                        (d - 1) * ll;
        }
        out.push_back(r);
    }
    return out;
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

// Asymptotic Kolmogorov tail Q(t) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 t^2).
inline double kolmogorov_tail(double t) {
    if (t <= 0.0) return 1.0;
    double sum = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = 2.0 * ((j % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * t * t);
        sum += term;
        if (std::abs(term) < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

namespace detail {

inline double ks_statistic_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    double stat = 0.0;
    std::size_t ia = 0, ib = 0;
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    while (ia < a.size() && ib < b.size()) {
        const double x = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] <= x) ++ia;
        while (ib < b.size() && b[ib] <= x) ++ib;
        stat = std::max(stat, std::abs(ia / na - ib / nb));
    }
    return stat;
}

}  // namespace detail

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value at effective
// size n_a n_b / (n_a + n_b).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw InvalidInputError("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    KsResult r;
    r.statistic = detail::ks_statistic_sorted(a, b);
    const double ne = static_cast<double>(a.size()) * static_cast<double>(b.size()) /
                      static_cast<double>(a.size() + b.size());
    r.p_value = kolmogorov_tail(std::sqrt(ne) * r.statistic);
    return r;
}

// Wilson score interval for a binomial proportion.
inline std::pair<double, double> wilson_interval(long k, long n, double z) {
    if (n < 1 || k < 0 || k > n) throw InvalidInputError("wilson_interval: need 0 <= k <= n, n >= 1");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = p + z2 / (2.0 * nn);
    const double halfwidth = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    return {std::max(0.0, (center - halfwidth) / denom),
            std::min(1.0, (center + halfwidth) / denom)};
}

enum class TrendVerdict { pass, fail };

struct TrendPoint {
    double value = 0.0;
    double se = 0.0;  // bootstrap standard error of value
};

// Convergence-in-probability surrogate: the discrepancy must be nonincreasing
// along the (shrinking-epsilon) grid, allowing one inversion smaller than its
// bootstrap standard error.
inline TrendVerdict trend_check(const std::vector<TrendPoint>& points) {
    if (points.size() < 3) throw InvalidInputError("trend_check: need at least 3 grid points");
    int inversions = 0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        const double rise = points[i + 1].value - points[i].value;
        if (rise > 0.0) {
            ++inversions;
            if (inversions > 1 || rise >= points[i + 1].se) return TrendVerdict::fail;
        }
    }
    return TrendVerdict::pass;
}

// Bootstrap SE of the two-sample KS statistic, resampling the first sample
// and keeping the reference sample fixed.
inline double bootstrap_ks_se(const std::vector<double>& sample,
                              const std::vector<double>& reference, int n_boot,
                              std::uint64_t seed) {
    if (sample.empty() || reference.empty())
        throw InvalidInputError("bootstrap_ks_se: empty sample");
    std::vector<double> ref_sorted = reference;
    std::sort(ref_sorted.begin(), ref_sorted.end());
    RngStream rng(seed, 0);
    const std::size_t n = sample.size();
    std::vector<double> resampled(n);
    double sum = 0.0, sum2 = 0.0;
    for (int b = 0; b < n_boot; ++b) {
        for (std::size_t i = 0; i < n; ++i)
            resampled[i] = sample[rng.next_u64() % n];
        std::sort(resampled.begin(), resampled.end());
        const double stat = detail::ks_statistic_sorted(resampled, ref_sorted);
        sum += stat;
        sum2 += stat * stat;
    }
    const double mean = sum / n_boot;
    return std::sqrt(std::max(0.0, sum2 / n_boot - mean * mean));
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw InvalidInputError("median_of: empty sample");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        const double lo = *std::max_element(v.begin(), v.begin() + mid);
        m = 0.5 * (m + lo);
    }
    return m;
}

// Fraction of bootstrap resamples in which median(hi) > median(lo).
inline double bootstrap_median_exceed_prob(const std::vector<double>& hi,
                                           const std::vector<double>& lo, int n_boot,
                                           std::uint64_t seed) {
    RngStream rng(seed, 1);
    std::vector<double> rh(hi.size()), rl(lo.size());
    long exceed = 0;
    for (int b = 0; b < n_boot; ++b) {
        for (std::size_t i = 0; i < hi.size(); ++i) rh[i] = hi[rng.next_u64() % hi.size()];
        for (std::size_t i = 0; i < lo.size(); ++i) rl[i] = lo[rng.next_u64() % lo.size()];
        if (median_of(rh) > median_of(rl)) ++exceed;
    }
    return static_cast<double>(exceed) / static_cast<double>(n_boot);
}

// Summary of one empirical-vs-theory comparison cell.
struct EmpiricalSummary {
    long n_sample = 0;
    long n_reference = 0;
    double ks_stat = 0.0;
    double ks_p = 1.0;
    double mean_sample = 0.0;
    double var_sample = 0.0;
    double mean_reference = 0.0;
    double var_reference = 0.0;
};

inline EmpiricalSummary summarize_comparison(const std::vector<double>& sample,
                                             const std::vector<double>& reference) {
    auto moments = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s2 = 0.0;
        for (double x : v) s2 += (x - m) * (x - m);
        s2 /= std::max<std::size_t>(1, v.size() - 1);
        return std::pair<double, double>{m, s2};
    };
    EmpiricalSummary out;
    out.n_sample = static_cast<long>(sample.size());
    out.n_reference = static_cast<long>(reference.size());
    const KsResult ks = ks_two_sample(sample, reference);
    out.ks_stat = ks.statistic;
    out.ks_p = ks.p_value;
    std::tie(out.mean_sample, out.var_sample) = moments(sample);
    std::tie(out.mean_reference, out.var_reference) = moments(reference);
    return out;
}

}  // namespace jexit
