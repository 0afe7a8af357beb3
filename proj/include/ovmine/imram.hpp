// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// Iterative cross-modal set matching with two recurrent attention memories
// and the bidirectional hinge loss over a batch of (proposal set, concept
// set) pairs.
//
// One memory step for query set X against context set Y:
//   a_y   = softmax_y(lambda * cos(x, y))
//   x_hat = sum_y a_y * y
//   x'    = normalize(x + x_hat)
//
// Step k runs RAM_e(E^{k-1}, T^0) and RAM_t(T^{k-1}, E^0) and scores
//   S^k = mean_j cos(e_j, e_hat_j^k) + mean_q cos(t_hat_q^k, t_q);
// the set similarity is S = sum_k S^k.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ovmine/error.hpp"
#include "ovmine/linalg.hpp"

namespace ovmine {

struct MatchParams {
  std::size_t steps = 3;
  double margin = 0.2;
  double temperature = 10.0;

  void validate() const {
    if (steps < 1) throw ParamError("steps must be at least 1");
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw ParamError("margin must be non-negative");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ParamError("temperature must be positive");
  }
};

struct RamStep {
  std::vector<Vector> reconstructions;
  std::vector<Vector> memory;
};

inline RamStep ram_step(std::span<const Vector> queries, std::span<const Vector> context, double temperature) {
  if (queries.empty() || context.empty()) throw DataError("empty modality");
  RamStep out;
  out.reconstructions.reserve(queries.size());
  out.memory.reserve(queries.size());
  Vector logits(context.size());
  for (const auto& x : queries) {
    for (std::size_t j = 0; j < context.size(); ++j) logits[j] = temperature * cosine(x, context[j]);
    const Vector a = softmax(logits);
    Vector x_hat(x.size(), 0.0);
    for (std::size_t j = 0; j < context.size(); ++j) {
      check_same_dim(context[j].size(), x.size(), "ram_step");
      for (std::size_t c = 0; c < x.size(); ++c) x_hat[c] += a[j] * context[j][c];
    }
    Vector updated(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) updated[c] = x[c] + x_hat[c];
    // x + x_hat vanishes only for an antipodal reconstruction; keep x then.
    out.memory.push_back(squared_norm(updated) > 0.0 ? normalized(updated) : normalized(x));
    out.reconstructions.push_back(std::move(x_hat));
  }
  return out;
}

// Per-step trace of both memories.
struct MatchState {
  std::vector<std::vector<Vector>> memory_proposals;  // E^k, k = 1..K
  std::vector<std::vector<Vector>> memory_concepts;   // T^k
  std::vector<std::vector<Vector>> proposal_reconstructions;
  std::vector<std::vector<Vector>> concept_reconstructions;
  std::vector<double> step_similarity;  // S^k

  double similarity() const {
    double s = 0.0;
    for (double v : step_similarity) s += v;
    return s;
  }
};

inline double mean_cosine(std::span<const Vector> a, std::span<const Vector> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += cosine(a[i], b[i]);
  return acc / static_cast<double>(a.size());
}

inline MatchState run_match(std::span<const Vector> proposals, std::span<const Vector> concepts,
                            const MatchParams& params) {
  params.validate();
  if (proposals.empty() || concepts.empty()) throw DataError("empty modality");
  MatchState state;
  std::vector<Vector> e_memory;
  std::vector<Vector> t_memory;
  for (const auto& e : proposals) e_memory.push_back(normalized(e));
  for (const auto& t : concepts) t_memory.push_back(normalized(t));
  for (std::size_t k = 0; k < params.steps; ++k) {
    RamStep e_step = ram_step(e_memory, concepts, params.temperature);
    RamStep t_step = ram_step(t_memory, proposals, params.temperature);
    state.step_similarity.push_back(mean_cosine(proposals, e_step.reconstructions) +
                                    mean_cosine(t_step.reconstructions, concepts));
    e_memory = e_step.memory;
    t_memory = t_step.memory;
    state.memory_proposals.push_back(std::move(e_step.memory));
    state.memory_concepts.push_back(std::move(t_step.memory));
    state.proposal_reconstructions.push_back(std::move(e_step.reconstructions));
    state.concept_reconstructions.push_back(std::move(t_step.reconstructions));
  }
  return state;
}

inline double set_similarity(std::span<const Vector> proposals, std::span<const Vector> concepts,
                             const MatchParams& params) {
  return run_match(proposals, concepts, params).similarity();
}

struct SetPair {
  std::vector<Vector> proposals;
  std::vector<Vector> concepts;
};

// B x B matrix, entry (i, j) = S(E_i, T_j), row-major.
inline std::vector<double> similarity_matrix(std::span<const SetPair> batch, const MatchParams& params) {
  const std::size_t b = batch.size();
  std::vector<double> s(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      s[i * b + j] = set_similarity(batch[i].proposals, batch[j].concepts, params);
    }
  }
  return s;
}

// Hinge loss with the hardest in-batch negative in each direction. A batch
// of one has no negatives and scores 0.
inline double ram_loss_from_matrix(std::span<const double> s, std::size_t b, double margin) {
  if (s.size() != b * b) throw DataError("similarity matrix is not B x B");
  if (b < 2) return 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double hardest_concepts = -INFINITY;   // max_{j != i} S(E_i, T_j)
    double hardest_proposals = -INFINITY;  // max_{j != i} S(E_j, T_i)
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      hardest_concepts = std::max(hardest_concepts, s[i * b + j]);
      hardest_proposals = std::max(hardest_proposals, s[j * b + i]);
    }
    const double positive = s[i * b + i];
    loss += std::max(0.0, margin - positive + hardest_concepts);
    loss += std::max(0.0, margin - positive + hardest_proposals);
  }
  return loss;
}

inline double ram_loss(std::span<const SetPair> batch, const MatchParams& params) {
  params.validate();
  if (batch.empty()) throw DataError("empty batch");
  for (const auto& pair : batch) {
    if (pair.proposals.empty() || pair.concepts.empty()) throw DataError("empty modality");
  }
  if (batch.size() == 1) return 0.0;
  return ram_loss_from_matrix(similarity_matrix(batch, params), batch.size(), params.margin);
}

}  // namespace ovmine
