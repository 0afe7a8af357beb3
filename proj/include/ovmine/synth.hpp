// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic world with exact ground truth.
//
// Concepts are random unit vectors with a minimum pairwise angle; the first
// `base_concepts` are base, the rest novel (caption-only). Each image holds
// `objects_per_image` distinct concepts, drawn with base concepts
// `frequency_ratio` times more likely than novel ones. Every object yields
// `proposals_per_object` true-object proposals (the exact box, then jittered
// copies), each embedding = normalize(concept + N(0, noise^2 I)); with
// probability `fragment_rate` it also yields two fragments, sub-boxes trimmed
// on one horizontal and one vertical side, carrying the object's first noisy
// embedding. Distractors get random boxes and random unit embeddings.
//
// The global image token is normalize(sum of object concepts + background),
// with |background| ~ background_noise; one extra token per object carries
// the object's noisy embedding.
//
// All randomness comes from Rng substreams: one for the concepts and one per
// image (seed XOR (image index + 1)), so generation is order-independent.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovmine/config.hpp"
#include "ovmine/dataset.hpp"
#include "ovmine/error.hpp"
#include "ovmine/geometry.hpp"
#include "ovmine/linalg.hpp"
#include "ovmine/parallel.hpp"
#include "ovmine/rng.hpp"
#include "ovmine/tensor_io.hpp"

namespace ovmine {

struct WorldConfig {
  std::uint64_t seed = 42;
  std::size_t dim = 64;
  std::size_t base_concepts = 15;
  std::size_t novel_concepts = 5;
  std::size_t images = 200;
  std::size_t objects_per_image = 3;
  std::size_t proposals_per_object = 3;
  std::size_t distractors_per_image = 5;
  double fragment_rate = 0.3;
  double embedding_noise = 0.1;
  double frequency_ratio = 4.0;
  double min_angle_deg = 60.0;
  double background_noise = 1.0;
  double image_width = 640.0;
  double image_height = 480.0;

  std::size_t concept_count() const { return base_concepts + novel_concepts; }

  void validate() const {
    if (dim == 0) throw ParamError("dim must be positive");
    if (novel_concepts == 0 || base_concepts == 0) throw ParamError("base and novel concept counts must be positive");
    if (images == 0) throw ParamError("images must be positive");
    if (objects_per_image == 0 || objects_per_image > concept_count()) {
      throw ParamError("objects_per_image must lie in [1, concept count]");
    }
    if (proposals_per_object == 0) throw ParamError("proposals_per_object must be positive");
    if (!(fragment_rate >= 0.0 && fragment_rate <= 1.0)) throw ParamError("fragment_rate must lie in [0, 1]");
    if (!(embedding_noise >= 0.0) || !std::isfinite(embedding_noise)) throw ParamError("embedding_noise must be >= 0");
    if (!(frequency_ratio >= 1.0) || !std::isfinite(frequency_ratio)) throw ParamError("frequency_ratio must be >= 1");
    if (!(min_angle_deg >= 0.0 && min_angle_deg < 180.0)) throw ParamError("min_angle must lie in [0, 180)");
    if (!(background_noise >= 0.0) || !std::isfinite(background_noise)) throw ParamError("background_noise must be >= 0");
    if (!(image_width > 0.0 && image_height > 0.0)) throw ParamError("image size must be positive");
  }

  KeyValues to_key_values() const {
    return {{"seed", std::to_string(seed)},
            {"dim", std::to_string(dim)},
            {"base_concepts", std::to_string(base_concepts)},
            {"novel_concepts", std::to_string(novel_concepts)},
            {"images", std::to_string(images)},
            {"objects_per_image", std::to_string(objects_per_image)},
            {"proposals_per_object", std::to_string(proposals_per_object)},
            {"distractors", std::to_string(distractors_per_image)},
            {"fragment_rate", format_double(fragment_rate)},
            {"noise", format_double(embedding_noise)},
            {"frequency_ratio", format_double(frequency_ratio)},
            {"min_angle", format_double(min_angle_deg)},
            {"background_noise", format_double(background_noise)},
            {"image_width", format_double(image_width)},
            {"image_height", format_double(image_height)}};
  }
};

enum class ProposalOrigin { kTrueObject, kFragment, kDistractor };

inline std::string to_string(ProposalOrigin o) {
  switch (o) {
    case ProposalOrigin::kTrueObject: return "true-object";
    case ProposalOrigin::kFragment: return "fragment";
    case ProposalOrigin::kDistractor: return "distractor";
  }
  return "distractor";
}

inline ProposalOrigin parse_proposal_origin(const std::string& s) {
  if (s == "true-object") return ProposalOrigin::kTrueObject;
  if (s == "fragment") return ProposalOrigin::kFragment;
  if (s == "distractor") return ProposalOrigin::kDistractor;
  throw DataError("unknown proposal origin `" + s + "`");
}

struct TruthObject {
  ConceptId concept_id = 0;
  BBox box;

  bool operator==(const TruthObject&) const = default;
};

struct TruthProposal {
  std::size_t embedding_row = 0;
  ProposalOrigin origin = ProposalOrigin::kDistractor;
  std::optional<std::size_t> object;  // index into ImageTruth::objects

  bool operator==(const TruthProposal&) const = default;
};

struct ImageTruth {
  std::string image_id;
  std::vector<TruthObject> objects;
  std::vector<TruthProposal> proposals;  // parallel to the image's proposals

  bool operator==(const ImageTruth&) const = default;
};

struct GroundTruth {
  std::vector<ImageTruth> images;  // ascending image_id

  const ImageTruth* find(const std::string& image_id) const {
    auto it = std::lower_bound(images.begin(), images.end(), image_id,
                               [](const ImageTruth& t, const std::string& id) { return t.image_id < id; });
    if (it == images.end() || it->image_id != image_id) return nullptr;
    return &*it;
  }

  std::map<ConceptId, std::size_t> object_counts() const {
    std::map<ConceptId, std::size_t> counts;
    for (const auto& img : images) {
      for (const auto& o : img.objects) ++counts[o.concept_id];
    }
    return counts;
  }

  bool operator==(const GroundTruth&) const = default;
};

struct World {
  Dataset dataset;
  GroundTruth truth;
};

namespace detail {

inline constexpr std::uint64_t kConceptStream = 0xC0DE'C0DE'0000'0000ULL;

inline Vector gaussian_vector(Rng& rng, std::size_t dim, double sigma) {
  Vector v(dim);
  for (double& x : v) x = sigma * rng.gaussian();
  return v;
}

inline Vector random_unit(Rng& rng, std::size_t dim) {
  for (;;) {
    Vector v = gaussian_vector(rng, dim, 1.0);
    if (squared_norm(v) > 0.0) return normalized(v);
  }
}

inline Vector noisy_copy(Rng& rng, const Vector& c, double sigma) {
  Vector v = c;
  if (sigma > 0.0) {
    for (double& x : v) x += sigma * rng.gaussian();
  }
  return normalized(v);
}

inline std::vector<Vector> generate_concepts(const WorldConfig& cfg) {
  Rng rng = Rng::substream(cfg.seed, kConceptStream);
  const double max_cos = std::cos(cfg.min_angle_deg * std::numbers::pi / 180.0);
  constexpr std::size_t kAttempts = 100000;
  std::vector<Vector> concepts;
  for (std::size_t q = 0; q < cfg.concept_count(); ++q) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      Vector v = random_unit(rng, cfg.dim);
      bool ok = true;
      for (const auto& c : concepts) {
        if (cosine(v, c) > max_cos) {
          ok = false;
          break;
        }
      }
      if (ok) {
        concepts.push_back(std::move(v));
        placed = true;
      }
    }
    if (!placed) {
      throw ParamError("infeasible angle constraint: cannot place " + std::to_string(cfg.concept_count()) +
                       " concepts " + format_double(cfg.min_angle_deg) + " degrees apart in dimension " +
                       std::to_string(cfg.dim));
    }
  }
  return concepts;
}

inline BBox clamp_box(double x1, double y1, double x2, double y2, const WorldConfig& cfg) {
  return BBox::make(std::max(0.0, x1), std::max(0.0, y1), std::min(cfg.image_width, x2),
                    std::min(cfg.image_height, y2));
}

inline BBox random_box(Rng& rng, const WorldConfig& cfg, double min_frac, double max_frac) {
  const double w = rng.uniform(min_frac, max_frac) * cfg.image_width;
  const double h = rng.uniform(min_frac, max_frac) * cfg.image_height;
  const double x1 = rng.uniform(0.0, cfg.image_width - w);
  const double y1 = rng.uniform(0.0, cfg.image_height - h);
  return BBox::make(x1, y1, x1 + w, y1 + h);
}

// Each edge moves by up to 5% of the box extent.
inline BBox jitter_box(Rng& rng, const BBox& b, const WorldConfig& cfg) {
  constexpr double kJitter = 0.05;
  const double w = b.width();
  const double h = b.height();
  const double x1 = b.x1 + rng.uniform(-kJitter, kJitter) * w;
  const double y1 = b.y1 + rng.uniform(-kJitter, kJitter) * h;
  const double x2 = b.x2 + rng.uniform(-kJitter, kJitter) * w;
  const double y2 = b.y2 + rng.uniform(-kJitter, kJitter) * h;
  return clamp_box(x1, y1, x2, y2, cfg);
}

// Sub-box with one side trimmed by 10-20% of the extent; `horizontal`
// chooses between the left/right and the top/bottom sides.
inline BBox fragment_box(Rng& rng, const BBox& b, bool horizontal) {
  const double frac = rng.uniform(0.1, 0.2);
  const bool first_side = rng.bernoulli(0.5);
  BBox f = b;
  if (horizontal) {
    if (first_side) f.x1 += frac * b.width(); else f.x2 -= frac * b.width();
  } else {
    if (first_side) f.y1 += frac * b.height(); else f.y2 -= frac * b.height();
  }
  return BBox::make(f.x1, f.y1, f.x2, f.y2);
}

struct GeneratedProposal {
  BBox box;
  double objectness = 0.0;
  Vector embedding;
  ProposalOrigin origin = ProposalOrigin::kDistractor;
  std::optional<std::size_t> object;
};

struct GeneratedImage {
  std::vector<TruthObject> objects;
  std::vector<GeneratedProposal> proposals;
  std::vector<Vector> tokens;
};

inline GeneratedImage generate_image(const WorldConfig& cfg, const std::vector<Vector>& concepts,
                                     std::size_t index) {
  Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(index) + 1);
  GeneratedImage img;

  // Weighted sampling of distinct concepts without replacement.
  std::vector<double> weight(concepts.size());
  for (std::size_t q = 0; q < concepts.size(); ++q) weight[q] = q < cfg.base_concepts ? cfg.frequency_ratio : 1.0;
  std::vector<ConceptId> chosen;
  for (std::size_t k = 0; k < cfg.objects_per_image; ++k) {
    double total = 0.0;
    for (double w : weight) total += w;
    double u = rng.uniform() * total;
    std::size_t pick = concepts.size();
    for (std::size_t q = 0; q < concepts.size(); ++q) {
      if (weight[q] == 0.0) continue;
      pick = q;
      if (u < weight[q]) break;
      u -= weight[q];
    }
    chosen.push_back(pick);
    weight[pick] = 0.0;
  }

  std::vector<Vector> object_embeddings;
  for (ConceptId q : chosen) {
    const std::size_t object = img.objects.size();
    const BBox box = random_box(rng, cfg, 0.15, 0.4);
    img.objects.push_back(TruthObject{q, box});
    const Vector& c = concepts[q];
    const Vector first = noisy_copy(rng, c, cfg.embedding_noise);
    object_embeddings.push_back(first);
    for (std::size_t p = 0; p < cfg.proposals_per_object; ++p) {
      const BBox pbox = p == 0 ? box : jitter_box(rng, box, cfg);
      Vector e = p == 0 ? first : noisy_copy(rng, c, cfg.embedding_noise);
      img.proposals.push_back(
          GeneratedProposal{pbox, rng.uniform(0.85, 1.0), std::move(e), ProposalOrigin::kTrueObject, object});
    }
    if (rng.bernoulli(cfg.fragment_rate)) {
      for (bool horizontal : {true, false}) {
        const BBox fbox = fragment_box(rng, box, horizontal);
        img.proposals.push_back(
            GeneratedProposal{fbox, rng.uniform(0.6, 0.85), first, ProposalOrigin::kFragment, object});
      }
    }
  }
  for (std::size_t k = 0; k < cfg.distractors_per_image; ++k) {
    const BBox box = random_box(rng, cfg, 0.05, 0.3);
    Vector e = random_unit(rng, cfg.dim);
    img.proposals.push_back(
        GeneratedProposal{box, rng.uniform(0.3, 0.7), std::move(e), ProposalOrigin::kDistractor, std::nullopt});
  }
  for (std::size_t i = img.proposals.size(); i > 1; --i) {
    std::swap(img.proposals[i - 1], img.proposals[rng.below(i)]);
  }

  Vector global(cfg.dim, 0.0);
  for (ConceptId q : chosen) {
    for (std::size_t c = 0; c < cfg.dim; ++c) global[c] += concepts[q][c];
  }
  const double bg_sigma = cfg.background_noise / std::sqrt(static_cast<double>(cfg.dim));
  const Vector bg = gaussian_vector(rng, cfg.dim, bg_sigma);
  for (std::size_t c = 0; c < cfg.dim; ++c) global[c] += bg[c];
  img.tokens.push_back(normalized(global));
  for (auto& e : object_embeddings) img.tokens.push_back(std::move(e));
  return img;
}

inline std::string image_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%06zu", index);
  return buf;
}

}  // namespace detail

inline World generate_world(const WorldConfig& cfg, std::size_t workers = 1) {
  cfg.validate();
  const std::vector<Vector> concepts = detail::generate_concepts(cfg);
  std::vector<detail::GeneratedImage> generated(cfg.images);
  parallel_for(cfg.images, workers, [&](std::size_t i) { generated[i] = detail::generate_image(cfg, concepts, i); });

  World world;
  Dataset& ds = world.dataset;
  for (std::size_t q = 0; q < concepts.size(); ++q) {
    ds.vocabulary.push_back(ConceptRecord{q, "concept_" + std::to_string(q), q,
                                          q < cfg.base_concepts ? ConceptOrigin::kBase : ConceptOrigin::kCaption});
  }
  ds.concept_embeddings = Tensor::from_rows(concepts, cfg.dim);

  std::vector<Vector> token_rows;
  std::vector<Vector> proposal_rows;
  for (std::size_t i = 0; i < cfg.images; ++i) {
    auto& g = generated[i];
    ImageRecord rec;
    rec.image_id = detail::image_name(i);
    rec.width = cfg.image_width;
    rec.height = cfg.image_height;
    ImageTruth truth;
    truth.image_id = rec.image_id;
    truth.objects = g.objects;
    for (auto& t : g.tokens) {
      rec.image_token_rows.push_back(token_rows.size());
      token_rows.push_back(std::move(t));
    }
    for (auto& p : g.proposals) {
      const std::size_t row = proposal_rows.size();
      // Objectness is stored through JSON as a double; round to binary32 so
      // the value a reader sees matches the embedding precision.
      const double objectness = static_cast<float>(p.objectness);
      rec.proposals.push_back(ProposalRecord{rec.image_id, p.box, objectness, row});
      truth.proposals.push_back(TruthProposal{row, p.origin, p.object});
      proposal_rows.push_back(std::move(p.embedding));
    }
    for (const auto& o : g.objects) rec.caption_concepts.push_back(o.concept_id);
    std::sort(rec.caption_concepts.begin(), rec.caption_concepts.end());
    ds.images.push_back(std::move(rec));
    world.truth.images.push_back(std::move(truth));
  }
  ds.image_embeddings = Tensor::from_rows(token_rows, cfg.dim);
  ds.proposal_embeddings = Tensor::from_rows(proposal_rows, cfg.dim);
  return world;
}

// truth.jsonl: one line per image,
// {"image_id", "objects": [{"concept_id", "box"}],
//  "proposals": [{"embedding_row", "origin", "object"}]}  (object -1 = none)
inline void save_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const auto& img : truth.images) {
    nlohmann::ordered_json j;
    j["image_id"] = img.image_id;
    j["objects"] = nlohmann::ordered_json::array();
    for (const auto& o : img.objects) {
      nlohmann::ordered_json oj;
      oj["concept_id"] = o.concept_id;
      oj["box"] = nlohmann::ordered_json::array({o.box.x1, o.box.y1, o.box.x2, o.box.y2});
      j["objects"].push_back(oj);
    }
    j["proposals"] = nlohmann::ordered_json::array();
    for (const auto& p : img.proposals) {
      nlohmann::ordered_json pj;
      pj["embedding_row"] = p.embedding_row;
      pj["origin"] = to_string(p.origin);
      pj["object"] = p.object ? static_cast<std::int64_t>(*p.object) : -1;
      j["proposals"].push_back(pj);
    }
    out << j.dump() << '\n';
  }
}

inline GroundTruth load_truth(const std::filesystem::path& path) {
  GroundTruth truth;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j) {
    ImageTruth img;
    img.image_id = j.at("image_id").get<std::string>();
    for (const auto& oj : j.at("objects")) {
      img.objects.push_back(TruthObject{oj.at("concept_id").get<ConceptId>(), detail::box_from_json(oj.at("box"))});
    }
    for (const auto& pj : j.at("proposals")) {
      TruthProposal p;
      p.embedding_row = pj.at("embedding_row").get<std::size_t>();
      p.origin = parse_proposal_origin(pj.at("origin").get<std::string>());
      const auto object = pj.at("object").get<std::int64_t>();
      if (object >= 0) {
        if (static_cast<std::size_t>(object) >= img.objects.size()) throw DataError("truth object index out of range");
        p.object = static_cast<std::size_t>(object);
      }
      img.proposals.push_back(p);
    }
    truth.images.push_back(std::move(img));
  });
  std::sort(truth.images.begin(), truth.images.end(),
            [](const ImageTruth& a, const ImageTruth& b) { return a.image_id < b.image_id; });
  return truth;
}

// Detector-like scorer whose over-confidence grows with training frequency:
//   score[r, q] = logit_scale * cos(concept q, proposal r) + inflation * count_q
// where count_q is the number of ground-truth objects of concept q. Base
// concepts are the frequent ones, so their columns are inflated most.
struct ScorerConfig {
  double logit_scale = 20.0;
  double inflation_per_instance = 0.3;

  void validate() const {
    if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) throw ParamError("logit_scale must be positive");
    if (!(inflation_per_instance >= 0.0) || !std::isfinite(inflation_per_instance)) {
      throw ParamError("inflation must be non-negative");
    }
  }
};

// Rows follow the proposal embedding tensor, columns the vocabulary order.
inline Tensor biased_scores(const Dataset& ds, const GroundTruth& truth, const ScorerConfig& cfg) {
  cfg.validate();
  const auto counts = truth.object_counts();
  const std::size_t cols = ds.vocabulary.size();
  std::vector<Vector> concepts;
  Vector inflation(cols, 0.0);
  for (std::size_t q = 0; q < cols; ++q) {
    concepts.push_back(ds.concept_embeddings.row_vector(ds.vocabulary[q].embedding_row));
    if (auto it = counts.find(ds.vocabulary[q].concept_id); it != counts.end()) {
      inflation[q] = cfg.inflation_per_instance * static_cast<double>(it->second);
    }
  }
  const std::size_t rows = ds.proposal_embeddings.rows();
  std::vector<float> data(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const Vector e = ds.proposal_embeddings.row_vector(r);
    for (std::size_t q = 0; q < cols; ++q) {
      data[r * cols + q] = static_cast<float>(cfg.logit_scale * cosine(concepts[q], e) + inflation[q]);
    }
  }
  return Tensor::matrix(rows, cols, std::move(data));
}

}  // namespace ovmine
