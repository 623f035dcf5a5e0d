#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "denseseg/core/tape.hpp"
#include "denseseg/core/tensor.hpp"

namespace dseg {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes whose +-eps evaluations straddle a kink
  bool pass = false;
};

struct GradCheckOptions {
  double eps = 1e-3;
  double tol = 1e-3;
  // Per-input cap on probed elements; larger inputs are probed at an even stride.
  std::size_t max_probes_per_input = 0;
};

/// Compares tape gradients of the scalar `f` against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps), element by element, for every tensor in
/// `inputs`. rel_err = |a - n| / max(|a|, |n|, 1e-8).
///
/// Probes where f(x+eps) and f(x-eps) take different ReLU/max branches are
/// skipped and counted.
///
/// `f` must rebuild its graph from the current contents of `inputs` on every
/// call and be deterministic (reseed any dropout generator inside it).
template <typename T>
GradCheckReport grad_check(const std::function<BasicTensor<T>()>& f,
                           std::vector<BasicTensor<T>> inputs, GradCheckOptions opts = {}) {
  auto& tape = Tape<T>::current();
  tape.clear();
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  auto loss = f();
  if (loss.numel() != 1) throw ShapeError("grad_check: function is not scalar-valued");
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  for (auto& in : inputs) {
    if (in.has_grad()) {
      analytic.emplace_back(in.grad().begin(), in.grad().end());
    } else {
      analytic.emplace_back(in.numel(), T(0));
    }
  }

  auto eval = [&]() {
    NoGradGuard<T> guard;
    auto& log = detail::kink_log();
    log = detail::KinkLog{true};
    const double v = static_cast<double>(f().item());
    const auto hash = log.hash;
    log.active = false;
    return std::pair{v, hash};
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    const std::size_t n = in.numel();
    std::size_t step = 1;
    if (opts.max_probes_per_input > 0 && n > opts.max_probes_per_input) {
      step = (n + opts.max_probes_per_input - 1) / opts.max_probes_per_input;
    }
    for (std::size_t i = 0; i < n; i += step) {
      const T orig = in[i];
      in[i] = static_cast<T>(orig + opts.eps);
      const auto [plus, plus_branches] = eval();
      in[i] = static_cast<T>(orig - opts.eps);
      const auto [minus, minus_branches] = eval();
      in[i] = orig;
      if (plus_branches != minus_branches) {
        ++report.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double a = static_cast<double>(analytic[k][i]);
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.max_rel_err = std::max(report.max_rel_err, rel);
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      ++report.checked;
    }
  }
  tape.clear();
  for (auto& in : inputs) in.zero_grad();
  report.pass = report.checked > 0 && report.max_rel_err <= opts.tol;
  return report;
}

}  // namespace dseg
