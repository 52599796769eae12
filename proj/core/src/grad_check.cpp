/*
 * Copyright 2026 The neat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "neat/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace neat::diff {

GradCheckReport grad_check(const std::function<Tensor()>& fn, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  AnomalyGuard anomaly;

  std::vector<std::vector<double>> analytic(params.size());
  try {
    for (const auto& p : params) {
      if (!p.tensor.requires_grad()) throw std::invalid_argument("grad_check: '" + p.name + "' does not require grad");
      Tensor handle = p.tensor;
      handle.zero_grad();
    }
    Tensor y = fn();
    y.backward();
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& t = params[i].tensor;
      if (t.has_grad()) {
        analytic[i].assign(t.grad().begin(), t.grad().end());
      } else {
        analytic[i].assign(static_cast<size_t>(t.numel()), 0.0);
      }
    }
  } catch (const NonFiniteError& e) {
    report.failure = e.what();
    return report;
  }

  // Coordinates are drawn uniformly over the concatenation of all params.
  std::vector<int64_t> offsets(params.size() + 1, 0);
  for (size_t i = 0; i < params.size(); ++i) offsets[i + 1] = offsets[i] + params[i].tensor.numel();
  const int64_t total = offsets.back();
  std::vector<int64_t> coords(static_cast<size_t>(total));
  std::iota(coords.begin(), coords.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(static_cast<size_t>(std::min<int64_t>(total, options.max_coords)));
  std::sort(coords.begin(), coords.end());

  NoGradGuard no_grad;
  try {
    for (int64_t flat : coords) {
      const auto which = static_cast<size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
      const auto idx = static_cast<size_t>(flat - offsets[which]);
      Tensor handle = params[which].tensor;
      auto data = handle.mutable_data();
      const double saved = data[idx];
      data[idx] = saved + options.step;
      const double up = fn().item();
      data[idx] = saved - options.step;
      const double down = fn().item();
      data[idx] = saved;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[which][idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (!std::isfinite(rel) || rel > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        report.worst_param = params[which].name;
        report.worst_index = static_cast<int64_t>(idx);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  } catch (const NonFiniteError& e) {
    report.failure = e.what();
    return report;
  }

  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace neat::diff
