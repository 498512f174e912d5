#pragma once

#include <cmath>
#include <optional>

#include "jexit/conjugation.hpp"
#include "jexit/linalg.hpp"
#include "jexit/model.hpp"
#include "jexit/rng.hpp"

namespace jexit {

namespace detail {

inline void require_small_epsilon(double eps) {
    if (!(eps > 0.0) || !(std::log(1.0 / eps) > 1.0))
        throw InvalidInputError("epsilon must lie in (0, 1/e) so loglog is defined");
}

// R (d-1)! lambda^{d-1}, the normalization of chi^{(d)} in rho and eta.
inline double chi_scale(double lambda, double R, int d) {
    return R * factorial_fp(d - 1) * std::pow(lambda, d - 1);
}

}  // namespace detail

// Sampler for chi = xi0 + N, where N is the infinite-horizon Gaussian
// integral with covariance limit_noise_covariance(block, a0).
struct LimitLawSampler {
    JordanBlock block;
    InitLaw init_law;
    double R;
    Mat noise_factor;  // Cholesky-type factor of the N covariance

    static LimitLawSampler from_spec(const ProblemSpec& spec) {
        const JordanBlock block = spec.block();
        const CovarianceMatrix cov = limit_noise_covariance(block, spec.diffusion.a0(spec.dim));
        return LimitLawSampler{block, spec.init_law, spec.box_radius,
                               cholesky_or_psd_factor(cov)};
    }

    Vec sample_chi(RngStream& rng) const {
        const int d = block.dim;
        const Vec xi = sample_init(init_law, d, rng);
        Vec z(d);
        for (int i = 0; i < d; ++i) z[i] = rng.gaussian();
        return xi + noise_factor * z;
    }
};

// eta = -lambda chi^{(d-1)}/chi^{(d)} + log(|chi^{(d)}| / (R (d-1)! lambda^{d-1}))
// with the first term defined as zero for d = 1.
inline double eta_of_chi(const Vec& chi, double lambda, double R, int d) {
    const double last = chi[d - 1];
    if (last == 0.0) throw NumericDomainError("eta_of_chi: chi^(d) = 0");
    const double ratio_term = (d >= 2) ? -lambda * chi[d - 2] / last : 0.0;
    return ratio_term + std::log(std::abs(last) / detail::chi_scale(lambda, R, d));
}

// rho = -(1/lambda) log(|chi^{(d)}| / (R (d-1)! lambda^{d-1}))
inline double rho_of_chi(const Vec& chi, double lambda, double R, int d) {
    const double last = chi[d - 1];
    if (last == 0.0) throw NumericDomainError("rho_of_chi: chi^(d) = 0");
    return -std::log(std::abs(last) / detail::chi_scale(lambda, R, d)) / lambda;
}

// Deterministic part of the box exit time,
// (1/lambda) log eps^-1 - ((d-1)/lambda) loglog eps^-1.
inline double det_time_part(double eps, double lambda, int d) {
    detail::require_small_epsilon(eps);
    const double L = std::log(1.0 / eps);
    return (L - (d - 1) * std::log(L)) / lambda;
}

// tau_B prediction with the vanishing remainder dropped.
inline double predict_tau_B(double eps, double lambda, int d, double rho_sample) {
    return det_time_part(eps, lambda, d) + rho_sample;
}

// Exit location from the box {||y||_inf <= R}, every coordinate:
//   Y^(i) = (lambda^{i-1} R sign / log^{i-1} eps^-1) (d-1)!/(d-i)!
//           * [1 + (i-1)/log eps^-1 * ((d-1) loglog eps^-1 + eta)]
inline Vec predict_exit_Y(double eps, double lambda, int d, double R, int sign,
                          double eta_sample) {
    detail::require_small_epsilon(eps);
    if (sign != 1 && sign != -1) throw InvalidInputError("predict_exit_Y: sign must be +-1");
    const double L = std::log(1.0 / eps);
    const double ll = std::log(L);
    Vec out(d);
    out[0] = sign * R;
    for (int i = 2; i <= d; ++i) {
        const double prefactor = std::pow(lambda / L, i - 1) * R * sign * factorial_fp(d - 1) /
                                 factorial_fp(d - i);
        out[i - 1] = prefactor * (1.0 + (i - 1) / L * ((d - 1) * ll + eta_sample));
    }
    return out;
}

// Exit time from the inner box B_eps = {||y||_inf <= eps^alpha}:
//   tilde-tau = (1-alpha)/lambda log eps^-1 - (d-1)/lambda loglog eps^-1
//               - G/lambda + Ktilde/lambda
// with G = log(|chi^(d)| (1-alpha)^{d-1} / ((d-1)! lambda^{d-1})) and
// Ktilde = (d-1)^2/(1-alpha) loglog/log + (d-1) eta_alpha / ((1-alpha) log).
inline double predict_tilde_tau(double eps, double alpha, double lambda, int d, const Vec& chi) {
    detail::require_small_epsilon(eps);
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInputError("predict_tilde_tau: alpha in (0,1)");
    const double last = chi[d - 1];
    if (last == 0.0) throw NumericDomainError("predict_tilde_tau: chi^(d) = 0");

    const double L = std::log(1.0 / eps);
    const double ll = std::log(L);
    const double G = std::log(std::abs(last) * std::pow(1.0 - alpha, d - 1) /
                              (factorial_fp(d - 1) * std::pow(lambda, d - 1)));
    const double ratio_term = (d >= 2) ? -lambda * chi[d - 2] / last : 0.0;
    const double eta_alpha = ratio_term + G;
    const double k_tilde = (d - 1) * (d - 1) / (1.0 - alpha) * ll / L +
                           (d - 1) * eta_alpha / ((1.0 - alpha) * L);
    return ((1.0 - alpha) * L - (d - 1) * ll - G + k_tilde) / lambda;
}

// Exit location from B_eps in terms of tilde-tau:
//   Y^(i) = eps^alpha sign(chi^(d)) / tilde-tau^{i-1} * (d-1)!/(d-i)!
//           * [1 - (i-1)/tilde-tau * chi^{(d-1)}/chi^{(d)}]
inline Vec predict_small_box_exit(double tilde_tau, double eps, double alpha, int d,
                                  const Vec& chi) {
    if (!(tilde_tau > 0.0)) throw InvalidInputError("predict_small_box_exit: tilde_tau > 0");
    const double last = chi[d - 1];
    if (last == 0.0) throw NumericDomainError("predict_small_box_exit: chi^(d) = 0");
    const double sign = last > 0.0 ? 1.0 : -1.0;
    const double scale = std::pow(eps, alpha);
    const double ratio = (d >= 2) ? chi[d - 2] / last : 0.0;
    Vec out(d);
    for (int i = 1; i <= d; ++i) {
        const double prefactor = scale * sign / std::pow(tilde_tau, i - 1) *
                                 factorial_fp(d - 1) / factorial_fp(d - i);
        out[i - 1] = prefactor * (1.0 - (i - 1) / tilde_tau * ratio);
    }
    return out;
}

struct OuterPrediction {
    double time;
    Vec point;
};

// Full-domain prediction: time = det part + rho + C^sign, location
// q_sign + (1/L + (d-1) ll/L^2 + eta/L^2) h1^sign.
inline OuterPrediction predict_outer(const ProblemSpec& spec, double eps, int sign,
                                     double rho_sample, double eta_sample,
                                     const PoincareData& poincare) {
    if (!spec.outer_domain.present)
        throw StateError("predict_outer: spec has no outer domain");
    if (poincare.q_plus.size() != spec.dim)
        throw StateError("predict_outer: poincare data missing or wrong dimension");
    detail::require_small_epsilon(eps);
    const double L = std::log(1.0 / eps);
    const double ll = std::log(L);
    const int d = spec.dim;
    const double coeff = 1.0 / L + (d - 1) * ll / (L * L) + eta_sample / (L * L);
    OuterPrediction out;
    out.time = det_time_part(eps, spec.lambda, d) + rho_sample + poincare.C(sign);
    out.point = poincare.q(sign) + coeff * poincare.h1(sign);
    return out;
}

// Evaluated deterministic expansion data for one epsilon.
struct PredictionSet {
    double epsilon = 0.0;
    double det_time_part = 0.0;
    // coord_coeffs[i] is the deterministic prefactor of coordinate i+1,
    // lambda^i R / log^i eps^-1 * (d-1)!/(d-1-i)!.
    std::vector<double> coord_coeffs;
    std::optional<PoincareData> outer;  // q+-, C+-, h1+- when an outer box is present
};

inline PredictionSet make_prediction_set(const ProblemSpec& spec, double eps,
                                         const PoincareData* poincare = nullptr) {
    detail::require_small_epsilon(eps);
    PredictionSet out;
    out.epsilon = eps;
    out.det_time_part = det_time_part(eps, spec.lambda, spec.dim);
    const double L = std::log(1.0 / eps);
    const int d = spec.dim;
    out.coord_coeffs.resize(d);
    for (int i = 1; i <= d; ++i)
        out.coord_coeffs[i - 1] = std::pow(spec.lambda / L, i - 1) * spec.box_radius *
                                  factorial_fp(d - 1) / factorial_fp(d - i);
    if (poincare != nullptr) out.outer = *poincare;
    return out;
}

}  // namespace jexit
