#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "jexit/linalg.hpp"
#include "jexit/model.hpp"
#include "jexit/rng.hpp"

namespace jexit {

// Step-size policy. The exact linear sampler always advances in base_dt
// transitions whose noise is addressed by time slot; far_check_dt and
// near_check_dt only set how often crossings are tested. Two runs that share
// base_dt therefore follow the identical path skeleton regardless of check
// cadence, which is what makes step-halving comparisons measure
// discretization effects instead of Monte Carlo noise.
struct StepPolicy {
    double base_dt = 5e-5;
    double far_check_dt = 1e-2;
    double near_check_dt = 1e-4;
    double em_dt = 1e-4;
    double near_fraction = 0.9;
    long max_steps = 100'000'000;

    StepPolicy halved() const {
        StepPolicy p = *this;
        p.far_check_dt /= 2.0;
        p.near_check_dt /= 2.0;
        p.em_dt /= 2.0;
        return p;
    }

    long far_slots() const { return slots_of(far_check_dt); }
    long near_slots() const { return slots_of(near_check_dt); }

  private:
    long slots_of(double dt) const {
        const double ratio = dt / base_dt;
        const long n = std::lround(ratio);
        if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9)
            throw InvalidInputError("StepPolicy: check cadences must be multiples of base_dt");
        return n;
    }
};

struct StepperState {
    double time = 0.0;
    Vec y;
    double max_transverse = 0.0;
    long steps = 0;
};

inline double transverse_dist(const Vec& y) {
    double s = 0.0;
    for (int i = 1; i < y.size(); ++i) s += y[i] * y[i];
    return std::sqrt(s);
}

// Exact one-step transition of dY = AY dt + eps sigma dW with constant sigma:
// Y(t+delta) = e^{A delta} (Y(t) + eps G), G ~ N(0, finite_noise_covariance).
template <typename Rng>
StepperState exact_linear_step(const JordanBlock& block, const Mat& a0, double eps,
                               const StepperState& state, double delta, Rng& rng) {
    if (!(delta >= 0.0)) throw InvalidInputError("exact_linear_step: delta must be >= 0");
    if (delta == 0.0) return state;
    const int d = block.dim;
    const Mat factor = cholesky_or_psd_factor(finite_noise_covariance(block, a0, delta));
    Vec z(d);
    for (int i = 0; i < d; ++i) z[i] = rng.gaussian();
    StepperState next = state;
    next.y = exp_action(block, delta, state.y + eps * (factor * z));
    next.time += delta;
    next.steps += 1;
    next.max_transverse = std::max(state.max_transverse, transverse_dist(next.y));
    return next;
}

// Guarded overload: exact stepping is only valid for linear drift with
// constant diffusion.
template <typename Rng>
StepperState exact_linear_step(const ProblemSpec& spec, double eps, const StepperState& state,
                               double delta, Rng& rng) {
    if (!spec.is_linear() || !spec.diffusion.is_constant())
        throw InvalidInputError("exact_linear_step: spec has nonlinear drift or state-dependent diffusion");
    return exact_linear_step(spec.block(), spec.diffusion.a0(spec.dim), eps, state, delta, rng);
}

// Euler-Maruyama update x' = x + b(x) delta + eps sigma(x) sqrt(delta) z.
inline StepperState em_step(const ProblemSpec& spec, double eps, const StepperState& state,
                            double delta, const Vec& normal_draws) {
    if (!(delta > 0.0)) throw InvalidInputError("em_step: delta must be positive");
    if (normal_draws.size() != spec.dim) throw InvalidInputError("em_step: draw size mismatch");
    StepperState next = state;
    next.y = state.y + drift(spec, state.y) * delta +
             eps * std::sqrt(delta) * (spec.diffusion.sigma_at(state.y) * normal_draws);
    if (!all_finite(next.y)) throw BlowUpError("em_step: state blew up");
    next.time += delta;
    next.steps += 1;
    next.max_transverse = std::max(state.max_transverse, transverse_dist(next.y));
    return next;
}

struct Crossing {
    double theta = 0.0;  // interpolation parameter in (0, 1]
    double time = 0.0;
    Vec point;
    int face = 1;  // 1-based coordinate index
    int sign = 1;
};

// First boundary crossing of {||y||_inf = radius} along the segment from
// prev to next. Ties between faces go to the smaller theta, then the lower
// face index. The returned point is snapped exactly onto the face.
inline std::optional<Crossing> detect_crossing(const StepperState& prev,
                                               const StepperState& next, double radius) {
    const int d = static_cast<int>(prev.y.size());
    double best_theta = 2.0;
    int best_face = -1;
    int best_sign = 0;
    for (int i = 0; i < d; ++i) {
        if (std::abs(next.y[i]) < radius) continue;
        const double delta_i = next.y[i] - prev.y[i];
        if (delta_i == 0.0) continue;
        const double s = delta_i > 0.0 ? 1.0 : -1.0;  // face hit while moving
        const double theta = (s * radius - prev.y[i]) / delta_i;
        if (theta <= 0.0 || theta > 1.0) continue;
        if (theta < best_theta - 1e-15 ||
            (std::abs(theta - best_theta) <= 1e-15 && i < best_face)) {
            best_theta = theta;
            best_face = i;
            best_sign = static_cast<int>(s);
        }
    }
    if (best_face < 0) return std::nullopt;
    Crossing c;
    c.theta = best_theta;
    c.time = prev.time + best_theta * (next.time - prev.time);
    c.point = prev.y + best_theta * (next.y - prev.y);
    c.point[best_face] = best_sign * radius;
    c.face = best_face + 1;
    c.sign = best_sign;
    return c;
}

struct TrialOptions {
    StepPolicy policy{};
    bool inner_diagnostics = false;       // record tilde-tau from B_eps
    std::optional<Vec> start_override;    // replaces eps * xi (deterministic variants)
};

namespace detail {

// Per-slot exact transition engine with precomputed factor and e^{A base_dt}
// coefficients.
class ExactSlotStepper {
  public:
    ExactSlotStepper(const JordanBlock& block, const Mat& a0, double base_dt)
        : block_(block),
          base_dt_(base_dt),
          growth_(std::exp(block.lambda * base_dt)),
          factor_(cholesky_or_psd_factor(finite_noise_covariance(block, a0, base_dt))) {
        const int d = block.dim;
        exp_coeff_.resize(d);
        exp_coeff_[0] = 1.0;
        for (int j = 1; j < d; ++j) exp_coeff_[j] = exp_coeff_[j - 1] * base_dt / j;
    }

    // One exact base transition, noise addressed by absolute slot index.
    template <typename Rng>
    void advance(Vec& y, std::uint64_t slot, double eps, Rng& rng) const {
        const int d = block_.dim;
        double z[kMaxDim];
        rng.slot_gaussians(slot, z, d);
        if (eps != 0.0) {
            for (int i = 0; i < d; ++i) {
                double g = 0.0;
                for (int j = 0; j <= i; ++j) g += factor_(i, j) * z[j];
                y[i] += eps * g;
            }
        }
        for (int i = 0; i < d; ++i) {
            double sum = y[i];
            for (int j = 1; j < d - i; ++j) sum += exp_coeff_[j] * y[i + j];
            y[i] = growth_ * sum;
        }
    }

    double base_dt() const { return base_dt_; }

  private:
    JordanBlock block_;
    double base_dt_;
    double growth_;
    Mat factor_;
    std::vector<double> exp_coeff_;
};

}  // namespace detail

// One trial: start at eps * xi, run to the outermost configured boundary,
// recording the inner-box diagnostic and the transverse excursion along the
// way. A pure function of (spec, eps, trial_id, rng stream, options).
template <typename Rng>
TrialRecord run_trial_with(const ProblemSpec& spec, double eps, long trial_id, Rng& rng,
                           std::uint64_t record_seed, const TrialOptions& opt = {}) {
    const int d = spec.dim;
    const StepPolicy& pol = opt.policy;

    Vec x0;
    if (opt.start_override.has_value()) {
        x0 = *opt.start_override;
        if (x0.size() != d) throw InvalidInputError("run_trial: start override size mismatch");
    } else {
        x0 = eps * sample_init(spec.init_law, d, rng);
    }

    // boundaries, innermost first
    struct Target {
        double radius;
        bool is_inner;   // diagnostic only, trial continues
    };
    std::vector<Target> targets;
    const bool inner_enabled = opt.inner_diagnostics && eps > 0.0;
    const double inner_radius = inner_enabled ? std::pow(eps, spec.alpha) : 0.0;
    if (inner_enabled) targets.push_back({inner_radius, true});
    targets.push_back({spec.box_radius, false});
    if (spec.outer_domain.present) targets.push_back({spec.outer_domain.half_width, false});

    TrialRecord rec;
    rec.trial_id = trial_id;
    rec.epsilon = eps;
    rec.seed = record_seed;

    StepperState state;
    state.y = x0;
    state.max_transverse = transverse_dist(x0);

    std::size_t target_idx = 0;
    // targets already at or behind the start position
    while (target_idx < targets.size() &&
           x0.cwiseAbs().maxCoeff() >= targets[target_idx].radius) {
        if (targets[target_idx].is_inner) rec.inner_exit_time = 0.0;  // started outside B_eps
        if (target_idx + 1 == targets.size()) {
            // started on or outside the outermost boundary: immediate exit
            int face = 0;
            x0.cwiseAbs().maxCoeff(&face);
            rec.exit_time = 0.0;
            rec.exit_point = x0;
            rec.exit_face = face + 1;
            rec.exit_sign = x0[face] >= 0.0 ? 1 : -1;
            rec.max_transverse_dist = state.max_transverse;
            rec.steps = 0;
            return rec;
        }
        ++target_idx;
    }

    const bool exact_path = spec.is_linear() && spec.diffusion.is_constant();
    auto handle_interval = [&](const StepperState& prev, StepperState& next) -> bool {
        // returns true when the final boundary has been crossed
        while (target_idx < targets.size()) {
            const Target& tgt = targets[target_idx];
            const auto crossing = detect_crossing(prev, next, tgt.radius);
            if (!crossing.has_value()) break;
            next.max_transverse = std::max(next.max_transverse, transverse_dist(crossing->point));
            if (tgt.is_inner) {
                rec.inner_exit_time = crossing->time;
                ++target_idx;
                continue;
            }
            if (target_idx + 1 < targets.size()) {
                ++target_idx;  // crossed the mid box, keep going to the outer one
                continue;
            }
            rec.exit_time = crossing->time;
            rec.exit_point = crossing->point;
            rec.exit_face = crossing->face;
            rec.exit_sign = crossing->sign;
            rec.max_transverse_dist = next.max_transverse;
            rec.steps = next.steps;
            return true;
        }
        return false;
    };

    if (exact_path) {
        const detail::ExactSlotStepper stepper(spec.block(), spec.diffusion.a0(d), pol.base_dt);
        const long far_slots = pol.far_slots();
        const long near_slots = pol.near_slots();
        std::uint64_t slot = 0;
        while (true) {
            const double next_radius = targets[target_idx].radius;
            const bool near = state.y.cwiseAbs().maxCoeff() > pol.near_fraction * next_radius;
            const long cadence = near ? near_slots : far_slots;

            StepperState next = state;
            for (long k = 0; k < cadence; ++k) stepper.advance(next.y, slot + k, eps, rng);
            slot += cadence;
            next.time = static_cast<double>(slot) * pol.base_dt;
            next.steps += cadence;
            if (!all_finite(next.y)) throw BlowUpError("run_trial: exact path blew up");
            next.max_transverse = std::max(next.max_transverse, transverse_dist(next.y));

            if (handle_interval(state, next)) return rec;
            state = std::move(next);
            if (state.steps > pol.max_steps)
                throw BudgetError("run_trial: step budget exceeded");
        }
    } else {
        Vec draws(d);
        while (true) {
            rng.slot_gaussians(static_cast<std::uint64_t>(state.steps), draws.data(), d);
            StepperState next = em_step(spec, eps, state, pol.em_dt, draws);
            if (handle_interval(state, next)) return rec;
            state = std::move(next);
            if (state.steps > pol.max_steps)
                throw BudgetError("run_trial: step budget exceeded");
        }
    }
}

inline TrialRecord run_trial(const ProblemSpec& spec, double eps, long trial_id,
                             std::uint64_t master_seed, const TrialOptions& opt = {}) {
    RngStream rng(master_seed, static_cast<std::uint64_t>(trial_id));
    return run_trial_with(spec, eps, trial_id, rng, rng.stream_seed(), opt);
}

struct TrialFailure {
    long trial_id;
    std::string message;
};

struct BatchResult {
    std::vector<TrialRecord> records;  // ordered by trial_id, failures omitted
    std::vector<TrialFailure> failures;
    long started_outside_inner = 0;
};

// Embarrassingly parallel batch; per-trial streams are derived from
// (master_seed, trial_id), so the result is identical for any worker count.
inline BatchResult run_batch(const ProblemSpec& spec, double eps, long n_trials,
                             std::uint64_t master_seed, int workers,
                             const TrialOptions& opt = {}) {
    if (n_trials < 1) throw InvalidInputError("run_batch: n_trials must be >= 1");
    workers = std::max(1, workers);

    std::vector<std::optional<TrialRecord>> slots(static_cast<std::size_t>(n_trials));
    std::vector<TrialFailure> failures;
    std::mutex failure_mutex;
    std::atomic<long> next_trial{0};

    auto worker_fn = [&]() {
        while (true) {
            const long id = next_trial.fetch_add(1);
            if (id >= n_trials) return;
            try {
                slots[static_cast<std::size_t>(id)] = run_trial(spec, eps, id, master_seed, opt);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failures.push_back({id, e.what()});
            }
        }
    };

    if (workers == 1) {
        worker_fn();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
        for (auto& t : pool) t.join();
    }

    BatchResult out;
    out.records.reserve(slots.size());
    for (auto& s : slots)
        if (s.has_value()) {
            if (s->inner_exit_time.has_value() && *s->inner_exit_time == 0.0)
                ++out.started_outside_inner;
            out.records.push_back(std::move(*s));
        }
    out.failures = std::move(failures);
    std::sort(out.failures.begin(), out.failures.end(),
              [](const TrialFailure& a, const TrialFailure& b) { return a.trial_id < b.trial_id; });
    return out;
}

}  // namespace jexit
