/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <vector>

namespace navkit {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Downhill simplex minimizer. Derivative-free; suited to low-dimensional
/// objectives with inner iterative solves where gradients are unavailable.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                                    int max_evaluations = 500, double simplex_tol = 1e-5) {
  const int n = int(x0.size());
  struct Vertex {
    Eigen::VectorXd x;
    double value;
  };
  NelderMeadResult result;

  std::vector<Vertex> simplex;
  simplex.reserve(n + 1);
  auto eval = [&](const Eigen::VectorXd& x) {
    result.evaluations++;
    return f(x);
  };
  simplex.push_back({x0, eval(x0)});
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = x0;
    x(i) += step(i);
    simplex.push_back({x, eval(x)});
  }

  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;
  while (result.evaluations < max_evaluations) {
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& a, const Vertex& b) { return a.value < b.value; });

    // size convergence: max vertex distance from best, per-axis scaled
    double extent = 0.0;
    for (int i = 1; i <= n; ++i) {
      for (int d = 0; d < n; ++d) {
        extent = std::max(extent,
                          std::abs(simplex[i].x(d) - simplex[0].x(d)) / std::abs(step(d)));
      }
    }
    if (extent < simplex_tol) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += simplex[i].x;
    centroid /= double(n);

    Vertex& worst = simplex[n];
    const Eigen::VectorXd reflected = centroid + kReflect * (centroid - worst.x);
    const double fr = eval(reflected);

    if (fr < simplex[0].value) {
      const Eigen::VectorXd expanded = centroid + kExpand * (reflected - centroid);
      const double fe = eval(expanded);
      worst = fe < fr ? Vertex{expanded, fe} : Vertex{reflected, fr};
    } else if (fr < simplex[n - 1].value) {
      worst = {reflected, fr};
    } else {
      const Eigen::VectorXd contracted =
          centroid + kContract * ((fr < worst.value ? reflected : worst.x) - centroid);
      const double fc = eval(contracted);
      if (fc < std::min(fr, worst.value)) {
        worst = {contracted, fc};
      } else {
        for (int i = 1; i <= n; ++i) {
          simplex[i].x = simplex[0].x + kShrink * (simplex[i].x - simplex[0].x);
          simplex[i].value = eval(simplex[i].x);
        }
      }
    }
  }

  std::sort(simplex.begin(), simplex.end(),
            [](const Vertex& a, const Vertex& b) { return a.value < b.value; });
  result.x = simplex[0].x;
  result.value = simplex[0].value;
  return result;
}

}  // namespace navkit
