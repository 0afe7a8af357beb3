// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// Offline class-wise adjustment.
//
// The proposal embeddings attributed to each concept are clustered with
// density peaks (cosine distance, Gaussian kernel). With K_q clusters and
// N~_q non-halo points the de-bias term is
//
//   beta_q = sqrt(K_q) * (N~_q / K_q)
//
// and scores are adjusted as  adjusted_q = raw_q - gamma * beta_q.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovmine/dataset.hpp"
#include "ovmine/error.hpp"
#include "ovmine/linalg.hpp"
#include "ovmine/tensor_io.hpp"

namespace ovmine {

inline constexpr double kDefaultGamma = 0.4;

struct ClusterParams {
  double neighbor_fraction = 0.02;  // target mean neighbour count, as a fraction of N
  double center_sigma = 3.0;        // centers: rho*delta > mean + s * std

  void validate() const {
    if (!(neighbor_fraction > 0.0 && neighbor_fraction < 1.0)) {
      throw ParamError("neighbor_fraction must lie in (0, 1)");
    }
    if (!(center_sigma >= 0.0) || !std::isfinite(center_sigma)) {
      throw ParamError("center_sigma must be non-negative");
    }
  }
};

inline constexpr std::size_t kNoNeighbor = std::numeric_limits<std::size_t>::max();

struct ClusterResult {
  ConceptId concept_id = 0;
  std::size_t cluster_count = 0;   // K
  std::size_t point_count = 0;     // N
  std::size_t retained_count = 0;  // N~, points not in a halo
  double cutoff = 0.0;             // d_c
  Vector rho;
  Vector delta;
  std::vector<std::size_t> nearest_denser;  // kNoNeighbor for the density maximum
  std::vector<std::size_t> centers;         // center point of each cluster
  std::vector<std::size_t> assignment;
  std::vector<bool> halo;
};

// Pairwise 1 - cos on unit-normalized inputs, clamped at 0.
inline Matrix cosine_distances(std::span<const Vector> points) {
  std::vector<Vector> unit;
  unit.reserve(points.size());
  for (const auto& p : points) unit.push_back(normalized(p));
  const std::size_t n = unit.size();
  Matrix d(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max(0.0, 1.0 - cosine(unit[i], unit[j]));
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

// Cutoff distance such that points have on average max(1, f * N) neighbours
// closer than it. Falls back to the smallest positive distance when the
// quantile is zero, and returns 0 only if every distance is zero.
inline double cutoff_distance(const Matrix& d, double neighbor_fraction) {
  const std::size_t n = d.rows();
  std::vector<double> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.push_back(d(i, j));
  }
  if (pairs.empty()) return 0.0;
  std::sort(pairs.begin(), pairs.end());
  const double mean_neighbors = std::max(1.0, neighbor_fraction * static_cast<double>(n));
  auto wanted = static_cast<std::size_t>(std::ceil(mean_neighbors * static_cast<double>(n) / 2.0));
  wanted = std::clamp<std::size_t>(wanted, 1, pairs.size());
  double dc = pairs[wanted - 1];
  if (dc <= 0.0) {
    auto positive = std::upper_bound(pairs.begin(), pairs.end(), 0.0);
    dc = positive == pairs.end() ? 0.0 : *positive;
  }
  return dc;
}

// Density-peak clustering of one concept's embeddings.
//
// Ties in density are broken by index: j is denser than i iff
// rho_j > rho_i, or rho_j == rho_i and j < i. The global density maximum is
// always a center so that every point receives a cluster.
inline ClusterResult density_peak_cluster(std::span<const Vector> points, const ClusterParams& params,
                                          ConceptId concept_id = 0) {
  params.validate();
  const std::size_t n = points.size();
  if (n == 0) throw DataError("density_peak_cluster needs at least one point");
  for (const auto& p : points) check_same_dim(p.size(), points.front().size(), "cluster point");

  ClusterResult r;
  r.concept_id = concept_id;
  r.point_count = n;
  const Matrix d = cosine_distances(points);
  r.cutoff = cutoff_distance(d, params.neighbor_fraction);

  auto kernel = [&](double dist) {
    if (r.cutoff == 0.0) return 1.0;  // all points coincide
    const double x = dist / r.cutoff;
    return std::exp(-x * x);
  };
  r.rho.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) acc += kernel(d(i, j));
    }
    r.rho[i] = acc;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r.rho[a] > r.rho[b] || (r.rho[a] == r.rho[b] && a < b);
  });

  r.delta.assign(n, 0.0);
  r.nearest_denser.assign(n, kNoNeighbor);
  {
    const std::size_t top = order[0];
    double far = 0.0;
    for (std::size_t j = 0; j < n; ++j) far = std::max(far, d(top, j));
    r.delta[top] = far;
  }
  for (std::size_t p = 1; p < n; ++p) {
    const std::size_t i = order[p];
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = kNoNeighbor;
    for (std::size_t q = 0; q < p; ++q) {
      const std::size_t j = order[q];
      const double dist = d(i, j);
      if (dist < best || (dist == best && j < best_j)) {
        best = dist;
        best_j = j;
      }
    }
    r.delta[i] = best;
    r.nearest_denser[i] = best_j;
  }

  Vector gamma(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    gamma[i] = r.rho[i] * r.delta[i];
    mean += gamma[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double g : gamma) var += (g - mean) * (g - mean);
  const double threshold = mean + params.center_sigma * std::sqrt(var / static_cast<double>(n));

  r.assignment.assign(n, kNoNeighbor);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t i = order[p];
    if (p == 0 || gamma[i] > threshold) {
      r.assignment[i] = r.centers.size();
      r.centers.push_back(i);
    } else {
      r.assignment[i] = r.assignment[r.nearest_denser[i]];
    }
  }
  r.cluster_count = r.centers.size();

  // Halo: points whose density is below their cluster's border density, the
  // highest mean density of a cross-cluster pair closer than d_c.
  r.halo.assign(n, false);
  if (r.cluster_count > 1) {
    Vector border(r.cluster_count, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (r.assignment[i] != r.assignment[j] && d(i, j) <= r.cutoff) {
          const double avg = 0.5 * (r.rho[i] + r.rho[j]);
          border[r.assignment[i]] = std::max(border[r.assignment[i]], avg);
          border[r.assignment[j]] = std::max(border[r.assignment[j]], avg);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) r.halo[i] = r.rho[i] < border[r.assignment[i]];
  }
  r.retained_count = static_cast<std::size_t>(std::count(r.halo.begin(), r.halo.end(), false));
  return r;
}

struct BiasEntry {
  ConceptId concept_id = 0;
  double beta = 0.0;
  std::size_t clusters = 0;  // K
  std::size_t retained = 0;  // N~

  bool operator==(const BiasEntry&) const = default;
};

struct BiasVector {
  double gamma = kDefaultGamma;
  std::vector<BiasEntry> entries;  // ascending concept_id

  const BiasEntry* find(ConceptId id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), id,
                               [](const BiasEntry& e, ConceptId v) { return e.concept_id < v; });
    if (it == entries.end() || it->concept_id != id) return nullptr;
    return &*it;
  }

  // Missing concepts carry no adjustment.
  double beta(ConceptId id) const {
    const BiasEntry* e = find(id);
    return e == nullptr ? 0.0 : e->beta;
  }

  bool operator==(const BiasVector&) const = default;
};

inline double bias_term(std::size_t clusters, std::size_t retained) {
  if (clusters == 0) return 0.0;
  const double k = static_cast<double>(clusters);
  const double density = static_cast<double>(retained) / k;
  return std::sqrt(k) * density;
}

// One entry per vocabulary concept; concepts without a clustering result get
// beta = 0.
inline BiasVector compute_bias(std::span<const ClusterResult> results, std::span<const ConceptId> vocabulary,
                               double gamma = kDefaultGamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParamError("gamma must be non-negative");
  std::map<ConceptId, const ClusterResult*> by_id;
  for (const auto& r : results) by_id[r.concept_id] = &r;
  std::vector<ConceptId> ids(vocabulary.begin(), vocabulary.end());
  for (const auto& r : results) ids.push_back(r.concept_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  BiasVector out;
  out.gamma = gamma;
  for (ConceptId id : ids) {
    BiasEntry e{id, 0.0, 0, 0};
    if (auto it = by_id.find(id); it != by_id.end() && it->second->point_count > 0) {
      e.clusters = it->second->cluster_count;
      e.retained = it->second->retained_count;
      e.beta = bias_term(e.clusters, e.retained);
    }
    out.entries.push_back(e);
  }
  return out;
}

inline Vector adjust_scores(std::span<const double> raw, std::span<const double> beta, double gamma) {
  check_same_dim(raw.size(), beta.size(), "adjust_scores");
  Vector out(raw.size());
  for (std::size_t q = 0; q < raw.size(); ++q) {
    if (!std::isfinite(raw[q])) throw DataError("non-finite raw score");
    out[q] = raw[q] - gamma * beta[q];
  }
  return out;
}

// Score vector over `columns` concepts adjusted by `bias`; gamma_override
// replaces the bias file's gamma when given.
inline Vector adjust_scores(std::span<const double> raw, std::span<const ConceptId> columns,
                            const BiasVector& bias, std::optional<double> gamma_override = std::nullopt) {
  Vector beta(columns.size());
  for (std::size_t q = 0; q < columns.size(); ++q) beta[q] = bias.beta(columns[q]);
  return adjust_scores(raw, beta, gamma_override.value_or(bias.gamma));
}

// Adjusts a proposals x concepts score tensor whose columns follow the bias
// vector's concept order.
inline Tensor adjust_score_matrix(const Tensor& scores, const BiasVector& bias,
                                  std::optional<double> gamma_override = std::nullopt) {
  validate_tensor(scores);
  if (scores.shape.size() != 2) throw DataError("score matrix must be rank 2");
  if (scores.shape[1] != bias.entries.size()) {
    throw DataError("score matrix has " + std::to_string(scores.shape[1]) + " columns but the bias vector covers " +
                    std::to_string(bias.entries.size()) + " concepts");
  }
  const double gamma = gamma_override.value_or(bias.gamma);
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParamError("gamma must be non-negative");
  Vector beta(bias.entries.size());
  for (std::size_t q = 0; q < beta.size(); ++q) beta[q] = bias.entries[q].beta;
  Tensor out = scores;
  const std::size_t cols = beta.size();
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const Vector raw = scores.row_vector(r);
    const Vector adjusted = adjust_scores(raw, beta, gamma);
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = static_cast<float>(adjusted[c]);
  }
  return out;
}

inline nlohmann::ordered_json bias_to_json(const BiasVector& bias) {
  nlohmann::ordered_json j;
  j["gamma"] = bias.gamma;
  j["beta"] = nlohmann::ordered_json::array();
  for (const auto& e : bias.entries) {
    nlohmann::ordered_json item;
    item["concept_id"] = e.concept_id;
    item["beta"] = e.beta;
    item["k"] = e.clusters;
    item["n_tilde"] = e.retained;
    j["beta"].push_back(item);
  }
  return j;
}

inline BiasVector bias_from_json(const nlohmann::json& j) {
  BiasVector b;
  try {
    b.gamma = j.at("gamma").get<double>();
    for (const auto& item : j.at("beta")) {
      BiasEntry e;
      e.concept_id = item.at("concept_id").get<ConceptId>();
      e.beta = item.at("beta").get<double>();
      e.clusters = item.at("k").get<std::size_t>();
      e.retained = item.at("n_tilde").get<std::size_t>();
      if (!(e.beta >= 0.0) || !std::isfinite(e.beta)) throw DataError("beta must be finite and non-negative");
      if (!b.entries.empty() && b.entries.back().concept_id >= e.concept_id) {
        throw DataError("bias entries must be sorted by concept_id without duplicates");
      }
      b.entries.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bias file: ") + e.what());
  }
  if (!(b.gamma >= 0.0) || !std::isfinite(b.gamma)) throw DataError("gamma must be finite and non-negative");
  return b;
}

inline void save_bias(const BiasVector& bias, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << bias_to_json(bias).dump(2) << '\n';
}

inline BiasVector load_bias(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return bias_from_json(j);
}

}  // namespace ovmine
