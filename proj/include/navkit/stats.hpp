/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace navkit {

/// Linear-interpolation quantile (type 7) on a sorted array, q in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty array");
  const double pos = q * double(sorted.size() - 1);
  const size_t lo = size_t(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

struct MedianIqr {
  double median = 0.0;
  double iqr = 0.0;
};

inline MedianIqr median_iqr(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median_iqr of empty array");
  std::sort(values.begin(), values.end());
  return {quantile_sorted(values, 0.5),
          quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25)};
}

inline double mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of empty array");
  double s = 0.0;
  for (double v : values) s += v;
  return s / double(values.size());
}

inline double stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / double(values.size() - 1));
}

}  // namespace navkit
