#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "jexit/analysis.hpp"
#include "jexit/theory.hpp"

using namespace jexit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ProblemSpec linear_spec(int d, double lam = 1.0, double R = 1.0) {
    ProblemSpec s;
    s.dim = d;
    s.lambda = lam;
    s.box_radius = R;
    s.epsilon_grid = {1e-4, 1e-6, 1e-8};
    return validated(s);
}

Vec chi2(double a, double b) { return (Vec(2) << a, b).finished(); }

}  // namespace

TEST_CASE("eta_of_chi") {
    SECTION("log 1 = 0 at the normalization point") {
        // chi^(d-1) = 0, chi^(d) = R (d-1)! lambda^{d-1}
        const double lam = 1.5, R = 0.5;
        const int d = 3;
        Vec chi = Vec::Zero(3);
        chi[2] = R * 2.0 * lam * lam;
        CHECK_THAT(eta_of_chi(chi, lam, R, d), WithinAbs(0.0, 1e-14));
    }
    SECTION("hand value d=2") {
        const double e = std::exp(1.0);
        CHECK_THAT(eta_of_chi(chi2(1.0, e), 1.0, 1.0, 2), WithinAbs(1.0 - 1.0 / e, 1e-12));
    }
    SECTION("d=1 drops the ratio term") {
        Vec chi(1);
        chi << std::exp(1.0);
        CHECK_THAT(eta_of_chi(chi, 1.0, 1.0, 1), WithinAbs(1.0, 1e-12));
    }
    SECTION("degenerate chi^(d)") {
        CHECK_THROWS_AS(eta_of_chi(chi2(1.0, 0.0), 1.0, 1.0, 2), NumericDomainError);
    }
}

TEST_CASE("rho_of_chi") {
    SECTION("zero at the normalization point, either sign") {
        const double lam = 2.0, R = 0.25;
        const int d = 4;
        const double scale = R * 6.0 * lam * lam * lam;
        Vec chi = Vec::Zero(4);
        chi[3] = scale;
        CHECK_THAT(rho_of_chi(chi, lam, R, d), WithinAbs(0.0, 1e-14));
        chi[3] = -scale;
        CHECK_THAT(rho_of_chi(chi, lam, R, d), WithinAbs(0.0, 1e-14));
    }
    SECTION("hand value d=2") {
        CHECK_THAT(rho_of_chi(chi2(0.3, std::exp(2.0)), 1.0, 1.0, 2), WithinAbs(-2.0, 1e-12));
    }
    SECTION("scaling shifts rho by -log(c)/lambda") {
        const double lam = 0.7, R = 1.3;
        Vec chi = Vec::Zero(3);
        chi[1] = 0.4;
        chi[2] = 0.9;
        const double base = rho_of_chi(chi, lam, R, 3);
        for (double c : {0.5, 2.0, 10.0}) {
            Vec scaled = chi;
            scaled[2] *= c;
            CHECK_THAT(rho_of_chi(scaled, lam, R, 3), WithinAbs(base - std::log(c) / lam, 1e-12));
        }
    }
}

TEST_CASE("eta scaling property under chi^(d) scaling") {
    const double lam = 1.2, R = 0.8;
    const int d = 3;
    Vec chi = Vec::Zero(d);
    chi[d - 2] = -0.6;
    chi[d - 1] = 1.7;
    const double eta0 = eta_of_chi(chi, lam, R, d);
    for (double c : {0.5, 2.0, 10.0}) {
        Vec scaled = chi;
        scaled[d - 1] *= c;
        const double expected = eta0 + std::log(c) -
                                lam * chi[d - 2] * (1.0 / (c * chi[d - 1]) - 1.0 / chi[d - 1]);
        CHECK_THAT(eta_of_chi(scaled, lam, R, d), WithinAbs(expected, 1e-12));
    }
}

TEST_CASE("predict_tau_B") {
    const double eps = std::exp(-100.0);
    SECTION("hand value d=2") {
        CHECK_THAT(predict_tau_B(eps, 1.0, 2, 0.0), WithinAbs(95.39482981401191, 1e-10));
    }
    SECTION("d=1 has no loglog term") {
        CHECK_THAT(predict_tau_B(eps, 1.0, 1, 0.0), WithinAbs(100.0, 1e-12));
    }
    SECTION("1/lambda scaling") {
        CHECK_THAT(predict_tau_B(eps, 2.0, 2, 0.0),
                   WithinRel(predict_tau_B(eps, 1.0, 2, 0.0) / 2.0, 1e-14));
    }
    SECTION("epsilon >= 1/e rejected") {
        CHECK_THROWS_AS(predict_tau_B(0.5, 1.0, 2, 0.0), InvalidInputError);
    }
}

TEST_CASE("predict_exit_Y") {
    const double eps = std::exp(-100.0);
    SECTION("first coordinate is sign * R always") {
        for (int d : {1, 2, 4}) {
            for (int sign : {1, -1}) {
                const Vec y = predict_exit_Y(1e-5, 1.3, d, 0.4, sign, 0.7);
                CHECK(y[0] == sign * 0.4);
            }
        }
    }
    SECTION("hand value d=2 coordinate 2") {
        const Vec y = predict_exit_Y(eps, 1.0, 2, 1.0, +1, 0.0);
        CHECK_THAT(y[1], WithinAbs(0.0104605170185988, 1e-12));
    }
    SECTION("d=1 is a bare endpoint") {
        const Vec y = predict_exit_Y(eps, 1.0, 1, 2.0, -1, 0.3);
        REQUIRE(y.size() == 1);
        CHECK(y[0] == -2.0);
    }
    SECTION("agrees with the lambda(d-1)R e2-coefficient form") {
        // the i=2 coordinate equals lambda(d-1)R (1/L + (d-1)ll/L^2 + eta/L^2)
        for (double loge : {50.0, 100.0, 200.0}) {
            const double e = std::exp(-loge);
            const double L = loge, ll = std::log(L), eta = 0.37;
            for (int d : {2, 3, 5}) {
                const double lam = 1.4, R = 0.6;
                const Vec y = predict_exit_Y(e, lam, d, R, +1, eta);
                const double coeff =
                    lam * (d - 1) * R * (1.0 / L + (d - 1) * ll / (L * L) + eta / (L * L));
                CHECK(std::abs(y[1] - coeff) * L * L < 1e-10);
            }
        }
    }
}

TEST_CASE("predict_tilde_tau") {
    SECTION("d=1 closed form") {
        const double eps = 1e-6, alpha = 0.3, lam = 1.7;
        Vec chi(1);
        chi << 2.5;
        const double L = std::log(1.0 / eps);
        CHECK_THAT(predict_tilde_tau(eps, alpha, lam, 1, chi),
                   WithinAbs(((1.0 - alpha) * L - std::log(2.5)) / lam, 1e-12));
    }
    SECTION("high-precision reference value") {
        // alpha=1/2, d=2, lambda=1, eps=e^{-100}, chi=(0,1)
        CHECK_THAT(predict_tilde_tau(std::exp(-100.0), 0.5, 1.0, 2, chi2(0.0, 1.0)),
                   WithinAbs(46.16621745468042, 1e-10));
    }
    SECTION("increasing |chi^(d)| decreases the prediction") {
        const double base = predict_tilde_tau(1e-8, 0.5, 1.0, 2, chi2(0.0, 1.0));
        const double larger = predict_tilde_tau(1e-8, 0.5, 1.0, 2, chi2(0.0, 3.0));
        CHECK(larger < base);
    }
}

TEST_CASE("predict_small_box_exit") {
    SECTION("first coordinate sits on the face") {
        const double eps = 1e-8, alpha = 0.5;
        const Vec y = predict_small_box_exit(40.0, eps, alpha, 3,
                                             (Vec(3) << 0.0, 0.2, -0.7).finished());
        CHECK_THAT(y[0], WithinRel(-std::pow(eps, alpha), 1e-14));
    }
    SECTION("hand value d=2") {
        const double eps = std::exp(-100.0), alpha = 0.5;
        const Vec y = predict_small_box_exit(50.0, eps, alpha, 2, chi2(0.0, 1.0));
        CHECK_THAT(y[1], WithinRel(std::pow(eps, alpha) / 50.0, 1e-12));
    }
    SECTION("negating chi flips every coordinate") {
        // odd symmetry: -chi flips sign(chi^(d)) and keeps the ratio term
        const Vec chi_pos = (Vec(3) << 0.0, 0.4, 0.9).finished();
        const Vec chi_neg = -chi_pos;
        const Vec yp = predict_small_box_exit(30.0, 1e-6, 0.4, 3, chi_pos);
        const Vec yn = predict_small_box_exit(30.0, 1e-6, 0.4, 3, chi_neg);
        CHECK((yp + yn).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("sample_chi moments") {
    RngStream rng(314, 0);
    SECTION("d=1 centered gaussian with variance 1/2") {
        const ProblemSpec s = linear_spec(1);
        const LimitLawSampler sampler = LimitLawSampler::from_spec(s);
        const long n = 1'000'000;
        double sum = 0.0, sq = 0.0;
        for (long i = 0; i < n; ++i) {
            const Vec chi = sampler.sample_chi(rng);
            sum += chi[0];
            sq += chi[0] * chi[0];
        }
        CHECK(std::abs(sum / n) < 0.005);
        CHECK(std::abs(sq / n - 0.5) < 0.005);
    }
    SECTION("d=2 second component variance 1/2") {
        const ProblemSpec s = linear_spec(2);
        const LimitLawSampler sampler = LimitLawSampler::from_spec(s);
        const long n = 1'000'000;
        double sq = 0.0;
        for (long i = 0; i < n; ++i) {
            const Vec chi = sampler.sample_chi(rng);
            sq += chi[1] * chi[1];
        }
        CHECK(std::abs(sq / n - 0.5) < 0.01);
    }
    SECTION("point-mass initial condition shifts the mean") {
        ProblemSpec s = linear_spec(2);
        s.init_law = InitLaw::point_mass((Vec(2) << 0.0, 5.0).finished());
        const LimitLawSampler sampler = LimitLawSampler::from_spec(s);
        const long n = 1'000'000;
        double sum = 0.0;
        for (long i = 0; i < n; ++i) sum += sampler.sample_chi(rng)[1];
        CHECK(std::abs(sum / n - 5.0) < 0.01);
    }
}

TEST_CASE("predict_outer against the closed-form linear flow") {
    ProblemSpec s = linear_spec(2);
    s.outer_domain = OuterDomainSpec::box(std::exp(1.0));
    s = validated(s);
    const FlowIntegrator fi(s);
    const PoincareData poincare = poincare_data(fi, s.box_radius, s.outer_domain.half_width);

    SECTION("C = log(L/R)/lambda and q on the axis") {
        CHECK_THAT(poincare.C_plus, WithinAbs(1.0, 1e-9));
        CHECK_THAT(poincare.C_minus, WithinAbs(1.0, 1e-9));
        CHECK_THAT(poincare.q_plus[0], WithinAbs(std::exp(1.0), 1e-8));
        CHECK_THAT(poincare.q_plus[1], WithinAbs(0.0, 1e-8));
        CHECK_THAT(poincare.q_minus[0], WithinAbs(-std::exp(1.0), 1e-8));
    }
    SECTION("time prediction adds C to the box prediction") {
        const double eps = 1e-8;
        const OuterPrediction p = predict_outer(s, eps, +1, 0.25, 0.0, poincare);
        CHECK_THAT(p.time, WithinAbs(predict_tau_B(eps, 1.0, 2, 0.25) + 1.0, 1e-9));
    }
    SECTION("missing outer domain is a state error") {
        const ProblemSpec inner = linear_spec(2);
        CHECK_THROWS_AS(predict_outer(inner, 1e-8, +1, 0.0, 0.0, poincare), StateError);
    }
}

TEST_CASE("predict_outer d=1 lands exactly on the endpoint") {
    ProblemSpec s = linear_spec(1);
    s.outer_domain = OuterDomainSpec::box(2.0);
    s = validated(s);
    const FlowIntegrator fi(s);
    const PoincareData poincare = poincare_data(fi, s.box_radius, s.outer_domain.half_width);
    CHECK(poincare.h1_plus.cwiseAbs().maxCoeff() == 0.0);
    const OuterPrediction p = predict_outer(s, 1e-8, -1, 0.1, 0.4, poincare);
    CHECK_THAT(p.point[0], WithinAbs(-2.0, 1e-10));
}

TEST_CASE("prediction set carries the deterministic coefficients") {
    const ProblemSpec s = linear_spec(3, 2.0, 0.5);
    const double eps = 1e-6;
    const PredictionSet p = make_prediction_set(s, eps);
    const double L = std::log(1.0 / eps);
    CHECK_THAT(p.det_time_part, WithinRel((L - 2.0 * std::log(L)) / 2.0, 1e-13));
    REQUIRE(p.coord_coeffs.size() == 3);
    CHECK_THAT(p.coord_coeffs[0], WithinRel(0.5, 1e-13));
    CHECK_THAT(p.coord_coeffs[1], WithinRel(2.0 / L * 0.5 * 2.0, 1e-13));
}
