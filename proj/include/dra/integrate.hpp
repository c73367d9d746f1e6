#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "dra/errors.hpp"
#include "dra/kron.hpp"

namespace dra {

enum class StepMethod { FixedRk4, AdaptiveRkf45 };

template <class Scalar>
struct IntegratorOptions {
  StepMethod method = StepMethod::AdaptiveRkf45;
  Scalar h = Scalar(0.01);  // fixed step, or initial step in adaptive mode
  Scalar rel_tol = Scalar(1e-8);
  Scalar abs_tol = Scalar(1e-10);
  Scalar max_step = Scalar(0.1);
  Scalar t_end = Scalar(100);
  int record_every = 1;  // thins storage; never affects stepping

  void validate() const {
    if (!(h > Scalar(0))) throw ValidationError("IntegratorOptions: h must be positive");
    if (!(rel_tol > Scalar(0)) || !(abs_tol > Scalar(0))) {
      throw ValidationError("IntegratorOptions: tolerances must be positive");
    }
    if (!(max_step > Scalar(0))) {
      throw ValidationError("IntegratorOptions: max_step must be positive");
    }
    if (!(t_end > Scalar(0))) throw ValidationError("IntegratorOptions: t_end must be positive");
    if (record_every < 1) throw ValidationError("IntegratorOptions: record_every must be >= 1");
  }
};

/// Right-hand side plus an optional fast-timescale declaration. When
/// stiffness_scale is set (the sub-optimal dynamics set it to eps), step
/// sizes are capped at 0.5 * scale so explicit stepping stays stable
/// through the boundary layer.
template <class Scalar>
struct OdeSystem {
  std::function<VecX<Scalar>(Scalar, const VecX<Scalar>&)> rhs;
  std::optional<Scalar> stiffness_scale{};
};

template <class Scalar>
using MonitorSet =
    std::vector<std::pair<std::string, std::function<Scalar(Scalar, const VecX<Scalar>&)>>>;

/// Recorded samples of one integration run. Monitor series are evaluated at
/// exactly the stored states, so re-evaluating a monitor on states[k]
/// reproduces monitors[...][k] bit-for-bit.
template <class Scalar>
struct Trajectory {
  std::vector<Scalar> times;
  std::vector<VecX<Scalar>> states;
  std::vector<std::pair<std::string, std::vector<Scalar>>> monitors;
  bool converged = false;
  std::string stop_reason;

  size_t size() const { return times.size(); }
};

template <class Scalar>
struct ConvergenceCriterion {
  Scalar state_tol;  // stop once ||rhs(state)|| drops below this
  Scalar t_max;

  void validate() const {
    if (!(state_tol > Scalar(0))) {
      throw ValidationError("ConvergenceCriterion: state_tol must be positive");
    }
  }
};

namespace detail {

template <class Scalar>
void check_finite(const VecX<Scalar>& y, Scalar t) {
  if (!y.allFinite() || y.template lpNorm<Eigen::Infinity>() > Scalar(1e100)) {
    throw NumericalError("numerical blowup at t = " + std::to_string(static_cast<double>(t)),
                         static_cast<double>(t));
  }
}

}  // namespace detail

/// One classical 4th-order Runge-Kutta step.
template <class Scalar, class Rhs>
VecX<Scalar> rk4_step(Rhs&& rhs, const VecX<Scalar>& y, Scalar t, Scalar h) {
  if (!(h > Scalar(0))) throw ValidationError("rk4_step: step must be positive");
  const VecX<Scalar> k1 = rhs(t, y);
  const VecX<Scalar> k2 = rhs(t + h / 2, (y + (h / 2) * k1).eval());
  const VecX<Scalar> k3 = rhs(t + h / 2, (y + (h / 2) * k2).eval());
  const VecX<Scalar> k4 = rhs(t + h, (y + h * k3).eval());
  VecX<Scalar> out = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  detail::check_finite(out, t + h);
  return out;
}

namespace detail {

// Fehlberg 4(5) tableau. The 5th-order solution is propagated; the embedded
// difference drives the error estimate.
template <class Scalar, class Rhs>
std::pair<VecX<Scalar>, Scalar> rkf45_step(Rhs&& rhs, const VecX<Scalar>& y, Scalar t, Scalar h,
                                           Scalar rel_tol, Scalar abs_tol) {
  const VecX<Scalar> k1 = rhs(t, y);
  const VecX<Scalar> k2 = rhs(t + h / 4, (y + h * (k1 / 4)).eval());
  const VecX<Scalar> k3 =
      rhs(t + 3 * h / 8, (y + h * (Scalar(3. / 32) * k1 + Scalar(9. / 32) * k2)).eval());
  const VecX<Scalar> k4 =
      rhs(t + 12 * h / 13, (y + h * (Scalar(1932. / 2197) * k1 - Scalar(7200. / 2197) * k2 +
                                     Scalar(7296. / 2197) * k3))
                               .eval());
  const VecX<Scalar> k5 =
      rhs(t + h, (y + h * (Scalar(439. / 216) * k1 - Scalar(8) * k2 + Scalar(3680. / 513) * k3 -
                           Scalar(845. / 4104) * k4))
                     .eval());
  const VecX<Scalar> k6 = rhs(
      t + h / 2, (y + h * (Scalar(-8. / 27) * k1 + Scalar(2) * k2 - Scalar(3544. / 2565) * k3 +
                           Scalar(1859. / 4104) * k4 - Scalar(11. / 40) * k5))
                     .eval());

  VecX<Scalar> y5 = y + h * (Scalar(16. / 135) * k1 + Scalar(6656. / 12825) * k3 +
                             Scalar(28561. / 56430) * k4 - Scalar(9. / 50) * k5 +
                             Scalar(2. / 55) * k6);
  const VecX<Scalar> y4 = y + h * (Scalar(25. / 216) * k1 + Scalar(1408. / 2565) * k3 +
                                   Scalar(2197. / 4104) * k4 - Scalar(1. / 5) * k5);

  Scalar err_sq = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Scalar scale =
        abs_tol + rel_tol * std::max(std::abs(y[i]), std::abs(y5[i]));
    const Scalar e = (y5[i] - y4[i]) / scale;
    err_sq += e * e;
  }
  const Scalar err = std::sqrt(err_sq / static_cast<Scalar>(y.size()));
  return {std::move(y5), err};
}

template <class Scalar>
Scalar effective_cap(const OdeSystem<Scalar>& sys, const IntegratorOptions<Scalar>& opts) {
  Scalar cap = opts.max_step;
  if (sys.stiffness_scale) cap = std::min(cap, Scalar(0.5) * *sys.stiffness_scale);
  return cap;
}

template <class Scalar>
void record_sample(Trajectory<Scalar>& traj, const MonitorSet<Scalar>& monitors, Scalar t,
                   const VecX<Scalar>& y) {
  traj.times.push_back(t);
  traj.states.push_back(y);
  for (size_t m = 0; m < monitors.size(); ++m) {
    traj.monitors[m].second.push_back(monitors[m].second(t, y));
  }
}

// Core loop shared by the public entry points. `targets`, when non-empty,
// lists times that must be hit exactly and recorded (record_every is ignored
// then). `stop` may end the run early after any accepted step.
template <class Scalar>
Trajectory<Scalar> run(const OdeSystem<Scalar>& sys, const VecX<Scalar>& y0,
                       const IntegratorOptions<Scalar>& opts, const MonitorSet<Scalar>& monitors,
                       const std::vector<Scalar>& targets,
                       const std::function<bool(Scalar, const VecX<Scalar>&)>& stop,
                       Scalar t_end) {
  Trajectory<Scalar> traj;
  traj.monitors.reserve(monitors.size());
  for (const auto& m : monitors) traj.monitors.emplace_back(m.first, std::vector<Scalar>{});

  VecX<Scalar> y = y0;
  Scalar t = 0;
  detail::check_finite(y, t);
  const bool to_targets = !targets.empty();
  size_t next_target = 0;
  if (to_targets && targets.front() == Scalar(0)) {
    record_sample(traj, monitors, t, y);
    next_target = 1;
  } else if (!to_targets) {
    record_sample(traj, monitors, t, y);
  }
  if (stop && stop(t, y)) {
    if (to_targets && traj.times.empty()) record_sample(traj, monitors, t, y);
    traj.converged = true;
    traj.stop_reason = "state_tol";
    return traj;
  }

  const Scalar cap = effective_cap(sys, opts);
  Scalar h = std::min(opts.h, cap);
  Scalar prev_err = Scalar(1);
  long steps_since_record = 0;
  bool done = false;

  while (!done) {
    Scalar limit = t_end;
    if (to_targets) {
      if (next_target >= targets.size()) break;
      limit = targets[next_target];
    }
    if (t >= limit) {
      if (to_targets) {
        record_sample(traj, monitors, t, y);
        ++next_target;
        continue;
      }
      break;
    }

    bool hit_limit = (limit - t) <= h;
    Scalar h_try = hit_limit ? (limit - t) : h;

    if (hit_limit && h_try < Scalar(1e-13) * std::max(Scalar(1), std::abs(limit))) {
      // Remaining gap is below time resolution; land without stepping.
      t = limit;
    } else if (opts.method == StepMethod::FixedRk4) {
      y = rk4_step(sys.rhs, y, t, h_try);
      t = hit_limit ? limit : t + h_try;
    } else {
      // Adaptive: retry with shrinking h until the local error passes.
      bool rejected = false;
      for (;;) {
        if (h_try < Scalar(1e-14)) {
          throw NumericalError(
              "adaptive step underflow at t = " + std::to_string(static_cast<double>(t)) +
                  "; the problem is too stiff for the current step cap - reduce the "
                  "eps-coupled max step",
              static_cast<double>(t));
        }
        auto [y_new, err] = rkf45_step(sys.rhs, y, t, h_try, opts.rel_tol, opts.abs_tol);
        detail::check_finite(y_new, t + h_try);
        if (err <= Scalar(1)) {
          y = std::move(y_new);
          t = hit_limit ? limit : t + h_try;
          // PI step-size controller (orders 0.7/5 and 0.4/5). A step clamped
          // only by a time limit does not feed back into the controller.
          if (rejected || !hit_limit) {
            Scalar factor = Scalar(0.9) * std::pow(std::max(err, Scalar(1e-16)), Scalar(-0.14)) *
                            std::pow(std::max(prev_err, Scalar(1e-16)), Scalar(0.08));
            factor = std::clamp(factor, Scalar(0.2), Scalar(5));
            h = std::min(h_try * factor, cap);
            prev_err = std::max(err, Scalar(1e-16));
          }
          break;
        }
        rejected = true;
        const Scalar shrink =
            std::clamp(Scalar(0.9) * std::pow(err, Scalar(-0.2)), Scalar(0.1), Scalar(0.9));
        h_try *= shrink;
        hit_limit = (limit - t) <= h_try;
      }
    }

    ++steps_since_record;
    const bool at_end = !to_targets && t >= t_end;
    const bool at_target = to_targets && t >= limit;
    if (at_target) {
      record_sample(traj, monitors, t, y);
      ++next_target;
      if (next_target >= targets.size()) done = true;
      steps_since_record = 0;
    } else if (!to_targets && (steps_since_record >= opts.record_every || at_end)) {
      record_sample(traj, monitors, t, y);
      steps_since_record = 0;
    }
    if (at_end) done = true;

    if (stop && stop(t, y)) {
      if (traj.times.empty() || traj.times.back() != t) record_sample(traj, monitors, t, y);
      traj.converged = true;
      traj.stop_reason = "state_tol";
      return traj;
    }
  }

  if (stop) {
    traj.converged = false;
    traj.stop_reason = "t_max";
  }
  return traj;
}

}  // namespace detail

/// Integrates from t = 0 to opts.t_end, recording every record_every-th
/// accepted step (plus the initial and final states).
template <class Scalar>
Trajectory<Scalar> integrate(const OdeSystem<Scalar>& sys,
                             const std::type_identity_t<VecX<Scalar>>& y0,
                             const IntegratorOptions<Scalar>& opts,
                             const MonitorSet<Scalar>& monitors = {}) {
  opts.validate();
  return detail::run(sys, y0, opts, monitors, {},
                     std::function<bool(Scalar, const VecX<Scalar>&)>{}, opts.t_end);
}

/// Integrates so that the state is recorded at exactly the given strictly
/// increasing times (stepping lands on each one; no interpolation).
template <class Scalar>
Trajectory<Scalar> integrate_to_times(const OdeSystem<Scalar>& sys,
                                      const std::type_identity_t<VecX<Scalar>>& y0,
                                      const std::vector<Scalar>& times,
                                      const IntegratorOptions<Scalar>& opts,
                                      const MonitorSet<Scalar>& monitors = {}) {
  opts.validate();
  if (times.empty()) throw ValidationError("integrate_to_times: empty time list");
  for (size_t k = 0; k < times.size(); ++k) {
    if (times[k] < Scalar(0) || (k > 0 && times[k] <= times[k - 1])) {
      throw ValidationError("integrate_to_times: times must be nonnegative, strictly increasing");
    }
  }
  return detail::run(sys, y0, opts, monitors, times,
                     std::function<bool(Scalar, const VecX<Scalar>&)>{}, times.back());
}

/// Integrates until ||rhs(state)|| < crit.state_tol or t >= crit.t_max,
/// whichever comes first; stop_reason records which condition fired.
template <class Scalar>
Trajectory<Scalar> integrate_until_converged(const OdeSystem<Scalar>& sys,
                                             const std::type_identity_t<VecX<Scalar>>& y0,
                                             const ConvergenceCriterion<Scalar>& crit,
                                             IntegratorOptions<Scalar> opts,
                                             const MonitorSet<Scalar>& monitors = {}) {
  crit.validate();
  opts.t_end = crit.t_max;
  opts.validate();
  auto stop = [&sys, tol = crit.state_tol](Scalar t, const VecX<Scalar>& y) {
    return sys.rhs(t, y).norm() < tol;
  };
  return detail::run(sys, y0, opts, monitors, {}, stop, crit.t_max);
}

}  // namespace dra
