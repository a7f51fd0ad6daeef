// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "lanm/autodiff.hpp"

namespace lanm::ad {

/// Builds a scalar loss on `tape` from already-registered parameter nodes.
using LossBuilder = std::function<NodeId(Tape& tape, std::span<const NodeId> params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  std::size_t entries_checked = 0;
  bool pass = false;
};

/// Relative error with an absolute floor: differences below `abs_floor` count as exact.
inline double relative_error(double analytic, double numeric, double abs_floor = 1e-8) {
  const double diff = std::fabs(analytic - numeric);
  if (diff <= abs_floor) return 0.0;
  return diff / std::max({std::fabs(analytic), std::fabs(numeric), abs_floor});
}

namespace detail {
inline double evaluate(const LossBuilder& build, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(tape.parameter(p));
  const double v = tape.value(build(tape, ids))[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}
}  // namespace detail

/// Compares tape gradients against central differences, entry by entry.
/// The step is `eps * max(1, |value|)`.
inline GradCheckReport grad_check(const LossBuilder& build, std::vector<Tensor> params, double tolerance,
                                  double eps = 1e-5) {
  Tape tape;
  std::vector<NodeId> ids;
  for (const auto& p : params) ids.push_back(tape.parameter(p));
  const NodeId root = build(tape, ids);
  if (!std::isfinite(tape.value(root)[0])) throw NumericError("grad_check: non-finite loss");
  const Gradients grads = tape.backward(root);

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor analytic = grads.of(ids[p]);
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double orig = params[p][k];
      const double h = eps * std::max(1.0, std::fabs(orig));
      params[p][k] = orig + h;
      const double up = detail::evaluate(build, params);
      params[p][k] = orig - h;
      const double down = detail::evaluate(build, params);
      params[p][k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[k], numeric);
      ++report.entries_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p;
        report.worst_entry = k;
      }
    }
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace lanm::ad
