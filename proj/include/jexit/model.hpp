#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jexit/linalg.hpp"
#include "jexit/rng.hpp"

namespace jexit {

// Drift menu. "cubic" is b(x) = Ax - |x|^2 x; "quad2" is b(x) = Ax + (x_1)^2 e_2.
enum class NonlinearityKind { none, cubic, quad2 };

inline const char* to_string(NonlinearityKind k) {
    switch (k) {
        case NonlinearityKind::none: return "none";
        case NonlinearityKind::cubic: return "cubic";
        case NonlinearityKind::quad2: return "quad2";
    }
    return "?";
}

enum class DiffusionKind { identity, constant, radial };

struct DiffusionSpec {
    DiffusionKind kind = DiffusionKind::identity;
    Mat matrix;  // used when kind == constant

    bool is_constant() const { return kind != DiffusionKind::radial; }

    Mat sigma_at(const Vec& x) const {
        const int d = static_cast<int>(x.size());
        switch (kind) {
            case DiffusionKind::identity: return Mat::Identity(d, d);
            case DiffusionKind::constant: return matrix;
            case DiffusionKind::radial: return (1.0 + x.squaredNorm()) * Mat::Identity(d, d);
        }
        return Mat::Identity(d, d);
    }

    // a0 = sigma(0) sigma(0)^T
    Mat a0(int d) const {
        if (kind == DiffusionKind::constant) return matrix * matrix.transpose();
        return Mat::Identity(d, d);  // identity and radial both have sigma(0) = I
    }
};

enum class InitKind { point, gaussian };

// Law of xi; the process starts at eps * xi.
struct InitLaw {
    InitKind kind = InitKind::point;
    Vec mean;  // the point itself for point masses
    Mat cov;

    static InitLaw point_mass(Vec p) { return {InitKind::point, std::move(p), Mat()}; }
    static InitLaw gaussian(Vec m, Mat c) { return {InitKind::gaussian, std::move(m), std::move(c)}; }
};

struct OuterDomainSpec {
    bool present = false;
    double half_width = 0.0;  // box {||x||_inf < L}

    static OuterDomainSpec none() { return {}; }
    static OuterDomainSpec box(double half_width) { return {true, half_width}; }
};

struct ProblemSpec {
    int dim = 1;
    double lambda = 1.0;
    DiffusionSpec diffusion;
    NonlinearityKind nonlinearity = NonlinearityKind::none;
    double box_radius = 1.0;
    OuterDomainSpec outer_domain;
    InitLaw init_law;
    std::vector<double> epsilon_grid;
    double alpha = 0.5;  // inner box B_eps = {||y||_inf <= eps^alpha}, diagnostics only

    JordanBlock block() const { return JordanBlock(dim, lambda); }
    bool is_linear() const { return nonlinearity == NonlinearityKind::none; }
};

inline Vec drift(const ProblemSpec& spec, const Vec& x) {
    if (!all_finite(x)) throw InvalidInputError("drift: non-finite input");
    const int d = spec.dim;
    Vec out(d);
    for (int i = 0; i < d; ++i)
        out[i] = spec.lambda * x[i] + (i + 1 < d ? x[i + 1] : 0.0);
    switch (spec.nonlinearity) {
        case NonlinearityKind::none:
            break;
        case NonlinearityKind::cubic:
            out -= x.squaredNorm() * x;
            break;
        case NonlinearityKind::quad2:
            out[1] += x[0] * x[0];
            break;
    }
    return out;
}

struct ValidationResult {
    ProblemSpec spec;  // normalized (identity diffusion expanded, init law sized)
    std::vector<std::string> errors;

    bool ok() const { return errors.empty(); }
};

inline ValidationResult validate(const ProblemSpec& input) {
    ValidationResult result{input, {}};
    ProblemSpec& s = result.spec;
    auto fail = [&](const std::string& field, const std::string& msg) {
        result.errors.push_back(field + ": " + msg);
    };

    if (s.dim < 1 || s.dim > kMaxDim)
        fail("dim", "must be in [1, " + std::to_string(kMaxDim) + "]");
    if (!(s.lambda > 0.0) || !std::isfinite(s.lambda)) fail("lambda", "must be positive");
    if (!(s.box_radius > 0.0) || !std::isfinite(s.box_radius)) fail("box_radius", "must be positive");
    if (!(s.alpha > 0.0 && s.alpha < 1.0)) fail("alpha", "must lie in (0,1)");
    if (s.nonlinearity == NonlinearityKind::quad2 && s.dim < 2)
        fail("nonlinearity", "quad2 needs dim >= 2");

    if (s.outer_domain.present && !(s.outer_domain.half_width > s.box_radius))
        fail("outer_domain.half_width", "outer domain smaller than inner box");

    if (s.epsilon_grid.empty()) fail("epsilon_grid", "must be nonempty");
    for (std::size_t i = 0; i < s.epsilon_grid.size(); ++i) {
        const double e = s.epsilon_grid[i];
        if (!(e > 0.0 && e < 1.0)) {
            fail("epsilon_grid[" + std::to_string(i) + "]", "entries must lie in (0,1)");
            break;
        }
        if (i > 0 && !(e < s.epsilon_grid[i - 1])) {
            fail("epsilon_grid", "grid not decreasing");
            break;
        }
    }

    if (s.dim >= 1 && s.dim <= kMaxDim) {
        // normalize diffusion
        if (s.diffusion.kind == DiffusionKind::identity) {
            s.diffusion.kind = DiffusionKind::constant;
            s.diffusion.matrix = Mat::Identity(s.dim, s.dim);
        }
        if (s.diffusion.kind == DiffusionKind::constant) {
            if (s.diffusion.matrix.rows() != s.dim || s.diffusion.matrix.cols() != s.dim)
                fail("diffusion.matrix", "must be dim x dim");
            else {
                const Mat a0 = s.diffusion.a0(s.dim);
                Eigen::SelfAdjointEigenSolver<Mat> es(a0, Eigen::EigenvaluesOnly);
                if (es.eigenvalues().minCoeff() < -1e-10)
                    fail("diffusion", "a0 = sigma(0) sigma(0)^T is not PSD");
            }
        }

        if (s.init_law.mean.size() == 0) s.init_law.mean = Vec::Zero(s.dim);
        if (s.init_law.mean.size() != s.dim) fail("init_law.mean", "must have length dim");
        if (s.init_law.kind == InitKind::gaussian) {
            if (s.init_law.cov.rows() != s.dim || s.init_law.cov.cols() != s.dim)
                fail("init_law.cov", "must be dim x dim");
            else {
                Eigen::SelfAdjointEigenSolver<Mat> es(s.init_law.cov, Eigen::EigenvaluesOnly);
                if (es.eigenvalues().minCoeff() < -1e-10) fail("init_law.cov", "not PSD");
            }
        }
    }

    return result;
}

// Throwing convenience wrapper around validate().
inline ProblemSpec validated(const ProblemSpec& spec) {
    ValidationResult r = validate(spec);
    if (!r.ok()) {
        std::string msg = "invalid ProblemSpec:";
        for (const auto& e : r.errors) msg += "\n  " + e;
        throw InvalidInputError(msg);
    }
    return std::move(r.spec);
}

// Draw xi from the initial law.
template <typename Rng>
Vec sample_init(const InitLaw& law, int dim, Rng& rng) {
    if (law.kind == InitKind::point) return law.mean;
    const Mat factor = cholesky_or_psd_factor(law.cov);
    Vec z(dim);
    for (int i = 0; i < dim; ++i) z[i] = rng.gaussian();
    return law.mean + factor * z;
}

// One simulated path's exit data.
struct TrialRecord {
    long trial_id = 0;
    double epsilon = 0.0;
    double exit_time = 0.0;
    Vec exit_point;
    int exit_face = 1;   // 1-based coordinate index
    int exit_sign = 1;   // sign of exit_point[exit_face]
    std::optional<double> inner_exit_time;  // tilde-tau diagnostic, if enabled
    double max_transverse_dist = 0.0;       // sup_t dist(path, span(e1))
    long steps = 0;
    std::uint64_t seed = 0;
};

}  // namespace jexit
