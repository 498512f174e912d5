#pragma once

#include <cmath>
#include <string>

#include "jexit/linalg.hpp"
#include "jexit/model.hpp"

namespace jexit {

// Classical fourth-order one-step integrator for the deterministic flow
// x' = b(x). Negative times integrate the reversed field.
struct FlowIntegrator {
    ProblemSpec spec;
    double step_size = 1e-3;
    double bound = 1e6;  // ||x||_inf beyond this is treated as escape

    explicit FlowIntegrator(ProblemSpec s, double h = 1e-3) : spec(std::move(s)), step_size(h) {}

    Vec rk4_step(const Vec& x, double h, int direction) const {
        auto field = [&](const Vec& p) -> Vec {
            return direction > 0 ? drift(spec, p) : Vec(-drift(spec, p));
        };
        const Vec k1 = field(x);
        const Vec k2 = field(x + 0.5 * h * k1);
        const Vec k3 = field(x + 0.5 * h * k2);
        const Vec k4 = field(x + h * k3);
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    // S^t x0 (backward for t < 0).
    Vec flow(const Vec& x0, double t) const {
        if (t == 0.0) return x0;
        const int direction = t > 0 ? 1 : -1;
        const double total = std::abs(t);
        const long n = std::max(1L, static_cast<long>(std::ceil(total / step_size)));
        const double h = total / static_cast<double>(n);
        Vec x = x0;
        for (long i = 0; i < n; ++i) {
            x = rk4_step(x, h, direction);
            if (x.cwiseAbs().maxCoeff() > bound || !all_finite(x))
                throw EscapeError("flow: trajectory escaped bounding region",
                                  direction * (i + 1) * h);
        }
        return x;
    }
};

namespace detail {

// Nonlinear part of the drift, psi(x)|x|^2 = b(x) - Ax.
inline Vec nonlinear_part(const ProblemSpec& spec, const Vec& x) {
    switch (spec.nonlinearity) {
        case NonlinearityKind::none: return Vec::Zero(spec.dim);
        case NonlinearityKind::cubic: return Vec(-x.squaredNorm() * x);
        case NonlinearityKind::quad2: {
            Vec out = Vec::Zero(spec.dim);
            out[1] = x[0] * x[0];
            return out;
        }
    }
    return Vec::Zero(spec.dim);
}

}  // namespace detail

// The linearizing map f(x) = x - int_0^inf e^{As} [b - A](S^{-s}x) ds,
// truncated once the certified tail drops below tail_tol. The backward flow
// contracts like e^{-lambda s} with a polynomial factor, so the integrand
// eventually decays like e^{-2 lambda s}; chunks are extended until both the
// last chunk and the projected geometric tail are below tolerance.
inline Vec linearize_f(const FlowIntegrator& fi, const Vec& x, double tail_tol = 1e-10,
                       double max_horizon = 0.0) {
    const ProblemSpec& spec = fi.spec;
    if (spec.is_linear()) return x;
    if (x.size() != spec.dim) throw InvalidInputError("linearize_f: dimension mismatch");

    const JordanBlock block = spec.block();
    if (max_horizon <= 0.0) max_horizon = (60.0 + 10.0 * spec.dim) / spec.lambda;

    const double chunk_len = 1.0;
    long intervals = std::max(2L, static_cast<long>(std::ceil(chunk_len / fi.step_size)));
    if (intervals % 2 == 1) ++intervals;
    const double h = chunk_len / static_cast<double>(intervals);

    Vec integral = Vec::Zero(spec.dim);
    Vec y = x;              // backward flow state S^{-s} x
    double s = 0.0;
    Vec node = exp_action(block, s, detail::nonlinear_part(spec, y));

    while (s < max_horizon) {
        // composite Simpson over one chunk
        Vec acc = node;  // endpoint weight 1
        for (long i = 1; i <= intervals; ++i) {
            y = fi.rk4_step(y, h, -1);
            const double si = s + i * h;
            node = exp_action(block, si, detail::nonlinear_part(spec, y));
            acc += ((i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0)) * node;
        }
        const Vec chunk = (h / 3.0) * acc;
        integral += chunk;
        s += chunk_len;

        const double decay = std::exp(-spec.lambda * chunk_len);
        const double projected_tail = chunk.cwiseAbs().maxCoeff() * decay / (1.0 - decay);
        if (chunk.cwiseAbs().maxCoeff() < tail_tol / 2.0 && projected_tail < tail_tol / 2.0)
            return x - integral;
    }
    throw ConvergenceError("linearize_f: tail bound not achieved within max horizon");
}

// Inverse of f by damped fixed-point iteration x <- x - (f(x) - y), justified
// by Df(0) = I; converges geometrically inside the linearizable neighborhood.
inline Vec inverse_g(const FlowIntegrator& fi, const Vec& y, double tol = 1e-10) {
    if (fi.spec.is_linear()) return y;
    Vec x = y;
    Vec residual = linearize_f(fi, x, tol / 10.0) - y;
    double err = residual.cwiseAbs().maxCoeff();
    for (int iter = 0; iter < 100; ++iter) {
        if (err <= tol) return x;
        double damping = 1.0;
        for (int tries = 0; tries < 20; ++tries) {
            const Vec candidate = x - damping * residual;
            const Vec cand_residual = linearize_f(fi, candidate, tol / 10.0) - y;
            const double cand_err = cand_residual.cwiseAbs().maxCoeff();
            if (cand_err < err) {
                x = candidate;
                residual = cand_residual;
                err = cand_err;
                break;
            }
            damping /= 2.0;
        }
    }
    if (err <= tol) return x;
    throw ConvergenceError("inverse_g: no convergence in 100 iterations");
}

// Deterministic outer-exit data: q+- = exit points of the flow started from
// g(+-R e1), C+- = travel times, h1+- = Dpi(g(+-R e1)) u1+-.
struct PoincareData {
    Vec q_plus, q_minus;
    double C_plus = 0.0, C_minus = 0.0;
    Vec h1_plus, h1_minus;

    const Vec& q(int sign) const { return sign >= 0 ? q_plus : q_minus; }
    double C(int sign) const { return sign >= 0 ? C_plus : C_minus; }
    const Vec& h1(int sign) const { return sign >= 0 ? h1_plus : h1_minus; }
};

namespace detail {

struct FaceCrossing {
    double time;
    Vec point;
};

// Integrate until |x_1| = L, then bisect the crossing step down to
// the representable-time floor.
inline FaceCrossing flow_to_face(const FlowIntegrator& fi, const Vec& x0, double half_width) {
    const double h = fi.step_size;
    Vec x = x0;
    double t = 0.0;
    if (std::abs(x[0]) >= half_width) throw GeometryError("flow_to_face: start already outside");
    const double t_cap = 1e4;
    while (t < t_cap) {
        const Vec next = fi.rk4_step(x, h, +1);
        if (std::abs(next[0]) >= half_width) {
            double lo = 0.0, hi = h;
            Vec at_hi = next;
            for (int iter = 0; iter < 80 && (hi - lo) > 1e-16 * std::max(1.0, t); ++iter) {
                const double mid = 0.5 * (lo + hi);
                const Vec probe = fi.rk4_step(x, mid, +1);
                if (std::abs(probe[0]) >= half_width) {
                    hi = mid;
                    at_hi = probe;
                } else {
                    lo = mid;
                }
            }
            const Vec velocity = drift(fi.spec, at_hi);
            if (std::abs(velocity[0]) < 1e-6 * std::max(1.0, velocity.norm()))
                throw GeometryError("flow_to_face: crossing not transversal");
            return {t + hi, at_hi};
        }
        x = next;
        t += h;
        if (x.cwiseAbs().maxCoeff() > fi.bound)
            throw EscapeError("flow_to_face: escaped bounding region", t);
    }
    throw GeometryError("flow_to_face: no boundary crossing before time cap");
}

// Fourth-order central difference of map() along direction u, step fd_step.
template <typename MapFn>
Vec directional_derivative(MapFn&& map, const Vec& x, const Vec& u, double fd_step) {
    const double norm = u.norm();
    const Vec unit = u / norm;
    const Vec p1 = map(x + fd_step * unit);
    const Vec m1 = map(x - fd_step * unit);
    const Vec p2 = map(x + 2.0 * fd_step * unit);
    const Vec m2 = map(x - 2.0 * fd_step * unit);
    return norm * (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * fd_step);
}

}  // namespace detail

// Full Poincare data for a box outer domain {||x||_inf < L}.
inline PoincareData poincare_data(const FlowIntegrator& fi, double R, double half_width) {
    const ProblemSpec& spec = fi.spec;
    const int d = spec.dim;
    if (!(half_width > R)) throw InvalidInputError("poincare_data: need L > R");

    PoincareData out;
    const double fd_step = 1e-5 * R;

    for (int sign : {+1, -1}) {
        Vec re1 = Vec::Zero(d);
        re1[0] = sign * R;
        const Vec start = inverse_g(fi, re1, 1e-12);
        const auto crossing = detail::flow_to_face(fi, start, half_width);
        Vec q = crossing.point;
        q[0] = sign * half_width;  // snap onto the face

        Vec h1 = Vec::Zero(d);
        if (d >= 2) {
            Vec e2 = Vec::Zero(d);
            e2[1] = 1.0;
            const Vec dg_e2 = detail::directional_derivative(
                [&](const Vec& y) { return inverse_g(fi, y, 1e-12); }, re1, e2, fd_step);
            const Vec u1 = sign * R * spec.lambda * (d - 1) * dg_e2;
            h1 = detail::directional_derivative(
                [&](const Vec& x) { return detail::flow_to_face(fi, x, half_width).point; },
                start, u1, fd_step);
        }

        if (sign > 0) {
            out.q_plus = q;
            out.C_plus = crossing.time;
            out.h1_plus = h1;
        } else {
            out.q_minus = q;
            out.C_minus = crossing.time;
            out.h1_minus = h1;
        }
    }
    return out;
}

}  // namespace jexit
