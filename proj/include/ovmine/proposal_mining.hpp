// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// Online proposal mining. Per image:
//
//   1. (optional) augment caption concept embeddings with the image tokens
//   2. SC[n, m] = cos(concept n, proposal m) * objectness m
//   3. drop proposals whose similarity entropy, entropy(softmax(SC[:, m])),
//      is strictly larger than that of the whole image taken as a proposal
//   4. match each concept with its top-k surviving proposals by SC
//   5. drop a concept when its best SC is strictly below its SC with the
//      whole image
//   6. merge overlapping proposals of the same concept (IoU >= theta) into
//      their enclosing box until no such pair remains

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovmine/concept_augment.hpp"
#include "ovmine/dataset.hpp"
#include "ovmine/error.hpp"
#include "ovmine/geometry.hpp"
#include "ovmine/linalg.hpp"

namespace ovmine {

struct MiningParams {
  double theta_iou = 0.6;
  std::size_t top_k = 3;
  bool use_augmentation = false;

  void validate() const {
    if (!(theta_iou > 0.0 && theta_iou <= 1.0)) throw ParamError("theta_iou must lie in (0, 1]");
    if (top_k < 1) throw ParamError("top_k must be at least 1");
  }
};

// Semantic similarity of a concept and a proposal: cosine times objectness.
inline double sc_score(std::span<const double> concept_embedding,
                       std::span<const double> proposal_embedding, double objectness) {
  return cosine(concept_embedding, proposal_embedding) * objectness;
}

// Entropy in nats of softmax(column); lies in [0, ln n].
inline double similarity_entropy(std::span<const double> column) {
  if (column.empty()) throw DataError("similarity entropy of an empty column");
  const Vector p = softmax(column);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

// Concepts x proposals score table.
class ScMatrix {
 public:
  ScMatrix() = default;
  ScMatrix(std::size_t concepts, std::size_t proposals)
      : concepts_(concepts), proposals_(proposals), values_(concepts * proposals, 0.0) {}

  std::size_t concepts() const { return concepts_; }
  std::size_t proposals() const { return proposals_; }
  double& at(std::size_t n, std::size_t m) { return values_[n * proposals_ + m]; }
  double at(std::size_t n, std::size_t m) const { return values_[n * proposals_ + m]; }

  Vector column(std::size_t m) const {
    Vector col(concepts_);
    for (std::size_t n = 0; n < concepts_; ++n) col[n] = at(n, m);
    return col;
  }

 private:
  std::size_t concepts_ = 0;
  std::size_t proposals_ = 0;
  Vector values_;
};

// A proposal as seen by the mining pipeline.
struct ProposalView {
  BBox box;
  double objectness = 0.0;
  Vector embedding;
  std::size_t embedding_row = 0;
};

// Everything mining needs for one image, already resolved from the dataset.
struct MiningInput {
  std::string image_id;
  std::vector<ConceptId> concept_ids;      // ascending, unique
  std::vector<Vector> concept_embeddings;  // parallel to concept_ids
  Vector image_embedding;                  // global image token
  BBox image_box;
  std::vector<ProposalView> proposals;
};

inline ScMatrix build_sc_matrix(std::span<const Vector> concepts,
                                std::span<const ProposalView> proposals) {
  ScMatrix sc(concepts.size(), proposals.size());
  for (std::size_t n = 0; n < concepts.size(); ++n) {
    for (std::size_t m = 0; m < proposals.size(); ++m) {
      sc.at(n, m) = sc_score(concepts[n], proposals[m].embedding, proposals[m].objectness);
    }
  }
  return sc;
}

// SC of every concept against the whole image (objectness 1).
inline Vector image_sc_column(std::span<const Vector> concepts, std::span<const double> image_embedding) {
  Vector col(concepts.size());
  for (std::size_t n = 0; n < concepts.size(); ++n) col[n] = sc_score(concepts[n], image_embedding, 1.0);
  return col;
}

struct EntropyFilterResult {
  std::vector<std::size_t> survivors;  // proposal indices, ascending
  double image_entropy = 0.0;
  bool no_concepts = false;  // warning: nothing to compare against
};

inline EntropyFilterResult entropy_filter(const ScMatrix& sc, std::span<const double> image_column) {
  EntropyFilterResult out;
  if (sc.concepts() == 0) {
    out.no_concepts = true;
    return out;
  }
  check_same_dim(image_column.size(), sc.concepts(), "image SC column");
  out.image_entropy = similarity_entropy(image_column);
  for (std::size_t m = 0; m < sc.proposals(); ++m) {
    if (!(similarity_entropy(sc.column(m)) > out.image_entropy)) out.survivors.push_back(m);
  }
  return out;
}

// Proposals matched to one concept, best first.
struct CandidateGroup {
  std::size_t concept_index = 0;
  std::vector<std::size_t> proposals;

  bool operator==(const CandidateGroup&) const = default;
};

// For each concept the k surviving proposals with the largest SC; ties go to
// the lower proposal index.
inline std::vector<CandidateGroup> topk_match(const ScMatrix& sc, std::span<const std::size_t> survivors,
                                              std::size_t k) {
  if (k < 1) throw ParamError("top_k must be at least 1");
  std::vector<CandidateGroup> groups;
  groups.reserve(sc.concepts());
  for (std::size_t n = 0; n < sc.concepts(); ++n) {
    std::vector<std::size_t> order(survivors.begin(), survivors.end());
    const std::size_t take = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = sc.at(n, a);
                        const double sb = sc.at(n, b);
                        return sa > sb || (sa == sb && a < b);
                      });
    order.resize(take);
    groups.push_back(CandidateGroup{n, std::move(order)});
  }
  return groups;
}

// Keeps a concept only if its best matched SC is at least its SC with the
// whole image. Concepts without any matched proposal are dropped.
inline std::vector<CandidateGroup> image_filter(std::vector<CandidateGroup> groups, const ScMatrix& sc,
                                                std::span<const double> image_column) {
  std::vector<CandidateGroup> kept;
  for (auto& g : groups) {
    if (g.proposals.empty()) continue;
    double best = sc.at(g.concept_index, g.proposals.front());
    for (std::size_t m : g.proposals) best = std::max(best, sc.at(g.concept_index, m));
    if (best < image_column[g.concept_index]) continue;
    kept.push_back(std::move(g));
  }
  return kept;
}

struct MinedProposal {
  BBox box;
  double objectness = 0.0;
  Vector embedding;
  std::size_t proposal_index = 0;  // index within the image, of the anchor fragment
  std::size_t embedding_row = 0;   // source row of the anchor fragment
  double score = 0.0;              // SC against the owning concept
  bool merged = false;

  bool operator==(const MinedProposal&) const = default;
};

// Combines two fragments: enclosing box, objectness-weighted mean embedding
// re-normalized to unit length, maximum objectness. The merged proposal keeps
// the identity (index, row) of `keep`.
inline MinedProposal merge_pair(const MinedProposal& keep, const MinedProposal& other) {
  MinedProposal out = keep;
  out.box = enclose(keep.box, other.box);
  out.objectness = std::max(keep.objectness, other.objectness);
  check_same_dim(keep.embedding.size(), other.embedding.size(), "merge");
  double wa = keep.objectness;
  double wb = other.objectness;
  if (wa + wb == 0.0) wa = wb = 1.0;
  Vector mean(keep.embedding.size());
  for (std::size_t c = 0; c < mean.size(); ++c) {
    mean[c] = (wa * keep.embedding[c] + wb * other.embedding[c]) / (wa + wb);
  }
  out.embedding = normalized(mean);
  out.merged = true;
  return out;
}

struct MergeResult {
  std::vector<MinedProposal> proposals;
  std::size_t merges = 0;
};

// Repeatedly merges the pair with the highest IoU >= theta (ties: smallest
// (i, j) position pair) until every remaining pair has IoU < theta. The
// merged proposal takes position i and position j is removed.
inline MergeResult merge_fragments(std::vector<MinedProposal> proposals, double theta_iou) {
  MergeResult out;
  for (;;) {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    double best_iou = -1.0;
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      for (std::size_t j = i + 1; j < proposals.size(); ++j) {
        const double v = iou(proposals[i].box, proposals[j].box);
        if (v >= theta_iou && v > best_iou) {
          best_iou = v;
          best = {i, j};
        }
      }
    }
    if (!best) break;
    const auto [i, j] = *best;
    proposals[i] = merge_pair(proposals[i], proposals[j]);
    proposals.erase(proposals.begin() + static_cast<std::ptrdiff_t>(j));
    ++out.merges;
  }
  out.proposals = std::move(proposals);
  return out;
}

struct MinedConcept {
  ConceptId concept_id = 0;
  Vector embedding;  // the (possibly augmented) concept embedding used for mining
  std::vector<MinedProposal> proposals;

  bool operator==(const MinedConcept&) const = default;
};

// Per-image mining output: concepts ascending by id, each with J_q >= 1
// proposals sorted by score descending then proposal index.
struct MinedSet {
  std::string image_id;
  std::vector<MinedConcept> concepts;

  std::size_t proposal_count() const {
    std::size_t n = 0;
    for (const auto& c : concepts) n += c.proposals.size();
    return n;
  }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> j;
    for (const auto& c : concepts) j.push_back(c.proposals.size());
    return j;
  }

  std::vector<Vector> concept_embeddings() const {
    std::vector<Vector> out;
    for (const auto& c : concepts) out.push_back(c.embedding);
    return out;
  }

  std::vector<Vector> proposal_embeddings() const {
    std::vector<Vector> out;
    for (const auto& c : concepts) {
      for (const auto& p : c.proposals) out.push_back(p.embedding);
    }
    return out;
  }

  bool empty() const { return concepts.empty(); }
  bool operator==(const MinedSet&) const = default;
};

inline void sort_mined_proposals(std::vector<MinedProposal>& proposals) {
  std::sort(proposals.begin(), proposals.end(), [](const MinedProposal& a, const MinedProposal& b) {
    return a.score > b.score || (a.score == b.score && a.proposal_index < b.proposal_index);
  });
}

inline MinedSet mine(const MiningInput& input, const MiningParams& params) {
  params.validate();
  MinedSet out{input.image_id, {}};
  if (input.concept_ids.empty() || input.proposals.empty()) return out;
  check_same_dim(input.concept_ids.size(), input.concept_embeddings.size(), "mining input");

  const ScMatrix sc = build_sc_matrix(input.concept_embeddings, input.proposals);
  const Vector image_column = image_sc_column(input.concept_embeddings, input.image_embedding);
  const EntropyFilterResult filtered = entropy_filter(sc, image_column);
  auto groups = topk_match(sc, filtered.survivors, params.top_k);
  groups = image_filter(std::move(groups), sc, image_column);

  for (const auto& g : groups) {
    const Vector& concept_embedding = input.concept_embeddings[g.concept_index];
    std::vector<MinedProposal> matched;
    for (std::size_t m : g.proposals) {
      const ProposalView& p = input.proposals[m];
      matched.push_back(MinedProposal{p.box, p.objectness, p.embedding, m, p.embedding_row,
                                      sc.at(g.concept_index, m), false});
    }
    MergeResult merged = merge_fragments(std::move(matched), params.theta_iou);
    for (auto& p : merged.proposals) {
      if (p.merged) p.score = sc_score(concept_embedding, p.embedding, p.objectness);
    }
    sort_mined_proposals(merged.proposals);
    out.concepts.push_back(
        MinedConcept{input.concept_ids[g.concept_index], concept_embedding, std::move(merged.proposals)});
  }
  return out;
}

// Resolves an image record against its dataset, applying concept
// augmentation when enabled. Caption concepts are deduplicated and sorted.
inline MiningInput make_mining_input(const ImageRecord& record, const Dataset& dataset,
                                     const AttentionWeights* weights, const MiningParams& params) {
  MiningInput in;
  in.image_id = record.image_id;
  in.concept_ids = record.caption_concepts;
  std::sort(in.concept_ids.begin(), in.concept_ids.end());
  in.concept_ids.erase(std::unique(in.concept_ids.begin(), in.concept_ids.end()), in.concept_ids.end());
  for (ConceptId id : in.concept_ids) in.concept_embeddings.push_back(dataset.concept_embedding(id));
  const std::vector<Vector> tokens = dataset.image_tokens(record);
  if (tokens.empty()) throw DataError("image " + record.image_id + " has no image tokens");
  if (params.use_augmentation) {
    if (weights == nullptr) throw ParamError("concept augmentation enabled without attention weights");
    in.concept_embeddings = augment_concepts(in.concept_embeddings, tokens, *weights);
  }
  in.image_embedding = tokens.front();
  in.image_box = record.full_box();
  for (const auto& p : record.proposals) {
    in.proposals.push_back(ProposalView{p.box, p.objectness, dataset.proposal_embedding(p), p.embedding_row});
  }
  return in;
}

inline MinedSet mine_image(const ImageRecord& record, const Dataset& dataset,
                           const AttentionWeights* weights, const MiningParams& params) {
  params.validate();
  return mine(make_mining_input(record, dataset, weights, params), params);
}

}  // namespace ovmine
