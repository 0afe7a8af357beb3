// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// Density-peak clustering evaluated directly from the definitions, O(N^2)
// per quantity, without a density ordering.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Clustering {
  double cutoff = 0.0;
  std::vector<double> rho;
  std::vector<double> delta;
  std::vector<long> nearest_denser;  // -1 for the density maximum
  std::vector<std::size_t> centers;
  std::vector<std::size_t> assignment;
  std::vector<bool> halo;
};

inline Clustering density_peaks(const std::vector<std::vector<double>>& points, double fraction, double sigma) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> unit;
  for (const auto& p : points) {
    double len = 0.0;
    for (double v : p) len += v * v;
    len = std::sqrt(len);
    std::vector<double> u = p;
    if (len != 0.0) {
      for (double& v : u) v /= len;
    }
    unit.push_back(u);
  }
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& a = unit[i < j ? i : j];
      const auto& b = unit[i < j ? j : i];
      double aa = 0.0;
      double bb = 0.0;
      double ab = 0.0;
      for (double v : a) aa += v * v;
      for (double v : b) bb += v * v;
      for (std::size_t k = 0; k < a.size(); ++k) ab += a[k] * b[k];
      double c = (aa == 0.0 || bb == 0.0) ? 0.0 : ab / std::sqrt(aa * bb);
      c = std::min(1.0, std::max(-1.0, c));
      d[i][j] = std::max(0.0, 1.0 - c);
    }
  }

  Clustering r;
  // Cutoff: the want-th smallest pair distance.
  std::vector<double> pair_d;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pair_d.push_back(d[i][j]);
  }
  if (!pair_d.empty()) {
    const double avg = std::max(1.0, fraction * static_cast<double>(n));
    auto want = static_cast<std::size_t>(std::ceil(avg * static_cast<double>(n) / 2.0));
    want = std::max<std::size_t>(1, std::min(want, pair_d.size()));
    std::vector<double> sorted = pair_d;
    std::sort(sorted.begin(), sorted.end());
    const double best = sorted[want - 1];
    r.cutoff = best;
    if (r.cutoff <= 0.0) {
      double smallest = INFINITY;
      for (double v : pair_d) {
        if (v > 0.0) smallest = std::min(smallest, v);
      }
      r.cutoff = std::isinf(smallest) ? 0.0 : smallest;
    }
  }

  r.rho.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      r.rho[i] += r.cutoff == 0.0 ? 1.0 : std::exp(-(d[i][j] / r.cutoff) * (d[i][j] / r.cutoff));
    }
  }
  auto denser = [&](std::size_t j, std::size_t i) { return r.rho[j] > r.rho[i] || (r.rho[j] == r.rho[i] && j < i); };

  r.delta.assign(n, 0.0);
  r.nearest_denser.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!denser(j, i)) continue;
      if (!any || d[i][j] < r.delta[i]) {
        r.delta[i] = d[i][j];
        r.nearest_denser[i] = static_cast<long>(j);
      }
      any = true;
    }
    if (!any) {
      for (std::size_t j = 0; j < n; ++j) r.delta[i] = std::max(r.delta[i], d[i][j]);
    }
  }

  std::vector<double> g(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = r.rho[i] * r.delta[i];
    mean += g[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : g) var += (v - mean) * (v - mean);
  const double threshold = mean + sigma * std::sqrt(var / static_cast<double>(n));

  std::vector<bool> is_center(n);
  for (std::size_t i = 0; i < n; ++i) is_center[i] = r.nearest_denser[i] < 0 || g[i] > threshold;
  // Cluster id = number of centers denser than this one.
  std::vector<std::size_t> id(n, 0);
  for (std::size_t c = 0; c < n; ++c) {
    if (!is_center[c]) continue;
    for (std::size_t o = 0; o < n; ++o) {
      if (is_center[o] && denser(o, c)) ++id[c];
    }
  }
  r.centers.assign(std::count(is_center.begin(), is_center.end(), true), 0);
  for (std::size_t c = 0; c < n; ++c) {
    if (is_center[c]) r.centers[id[c]] = c;
  }
  r.assignment.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t walk = i;
    while (!is_center[walk]) walk = static_cast<std::size_t>(r.nearest_denser[walk]);
    r.assignment[i] = id[walk];
  }

  r.halo.assign(n, false);
  if (r.centers.size() > 1) {
    std::vector<double> border(r.centers.size(), 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b || r.assignment[a] == r.assignment[b] || d[a][b] > r.cutoff) continue;
        border[r.assignment[a]] = std::max(border[r.assignment[a]], 0.5 * (r.rho[a] + r.rho[b]));
      }
    }
    for (std::size_t i = 0; i < n; ++i) r.halo[i] = r.rho[i] < border[r.assignment[i]];
  }
  return r;
}

}  // namespace oracle
