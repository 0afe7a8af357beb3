// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// Dataset model: JSONL metadata over MDET embedding tensors, tied together
// by a `key = value` manifest.
//
// Manifest keys (paths are relative to the manifest's directory):
//   images              images.jsonl
//   proposals           proposals.jsonl
//   concepts            concepts.jsonl
//   image_embeddings    MDET, one row per image token
//   proposal_embeddings MDET, one row per proposal
//   concept_embeddings  MDET, one row per concept
//
// images.jsonl:    {"image_id", "width", "height", "image_token_rows": [..], "caption_concepts": [..]}
// proposals.jsonl: {"image_id", "box": [x1,y1,x2,y2], "objectness", "embedding_row"}
// concepts.jsonl:  {"concept_id", "text", "embedding_row", "origin": "base"|"caption"}

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovmine/config.hpp"
#include "ovmine/error.hpp"
#include "ovmine/geometry.hpp"
#include "ovmine/linalg.hpp"
#include "ovmine/tensor_io.hpp"

namespace ovmine {

using ConceptId = std::uint64_t;

enum class ConceptOrigin { kBase, kCaption };

inline std::string to_string(ConceptOrigin o) { return o == ConceptOrigin::kBase ? "base" : "caption"; }

inline ConceptOrigin parse_origin(const std::string& s) {
  if (s == "base") return ConceptOrigin::kBase;
  if (s == "caption") return ConceptOrigin::kCaption;
  throw DataError("unknown concept origin `" + s + "`");
}

struct ProposalRecord {
  std::string image_id;
  BBox box;
  double objectness = 0.0;
  std::size_t embedding_row = 0;

  bool operator==(const ProposalRecord&) const = default;
};

struct ConceptRecord {
  ConceptId concept_id = 0;
  std::string text;
  std::size_t embedding_row = 0;
  ConceptOrigin origin = ConceptOrigin::kCaption;

  bool operator==(const ConceptRecord&) const = default;
};

struct ImageRecord {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<std::size_t> image_token_rows;  // first row is the global embedding
  std::vector<ProposalRecord> proposals;
  std::vector<ConceptId> caption_concepts;

  BBox full_box() const { return BBox{0.0, 0.0, width, height}; }

  bool operator==(const ImageRecord&) const = default;
};

struct Dataset {
  std::vector<ImageRecord> images;        // sorted by image_id
  std::vector<ConceptRecord> vocabulary;  // sorted by concept_id
  Tensor image_embeddings;
  Tensor proposal_embeddings;
  Tensor concept_embeddings;

  std::size_t dim() const { return concept_embeddings.row_width(); }

  const ConceptRecord* find_concept(ConceptId id) const {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), id,
                               [](const ConceptRecord& c, ConceptId v) { return c.concept_id < v; });
    if (it == vocabulary.end() || it->concept_id != id) return nullptr;
    return &*it;
  }

  std::vector<ConceptId> concept_ids() const {
    std::vector<ConceptId> ids;
    ids.reserve(vocabulary.size());
    for (const auto& c : vocabulary) ids.push_back(c.concept_id);
    return ids;
  }

  Vector concept_embedding(ConceptId id) const {
    const ConceptRecord* c = find_concept(id);
    if (c == nullptr) throw DataError("unknown concept_id " + std::to_string(id));
    return concept_embeddings.row_vector(c->embedding_row);
  }

  Vector proposal_embedding(const ProposalRecord& p) const {
    return proposal_embeddings.row_vector(p.embedding_row);
  }

  std::vector<Vector> image_tokens(const ImageRecord& image) const {
    std::vector<Vector> out;
    for (std::size_t r : image.image_token_rows) out.push_back(image_embeddings.row_vector(r));
    return out;
  }

  bool operator==(const Dataset&) const = default;
};

namespace detail {

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      fn(j);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void check_row(std::size_t row, const Tensor& t) {
  if (row >= t.rows()) {
    throw DataError("dangling embedding_row " + std::to_string(row) + " (tensor has " +
                    std::to_string(t.rows()) + " rows)");
  }
}

inline BBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be [x1,y1,x2,y2]");
  return BBox::make(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

inline nlohmann::json box_to_json(const BBox& b) { return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

inline void check_embedding_tensor(const Tensor& t, const std::string& name) {
  if (t.shape.size() != 2) throw DataError(name + " must be a rank-2 tensor");
}

}  // namespace detail

inline const std::set<std::string>& manifest_keys() {
  static const std::set<std::string> keys = {"images",           "proposals",
                                             "concepts",         "image_embeddings",
                                             "proposal_embeddings", "concept_embeddings"};
  return keys;
}

// Loads and cross-validates a dataset. Images are ordered by image_id and
// proposals keep their JSONL line order within an image.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const KeyValues manifest = load_key_values(manifest_path);
  for (const auto& [key, value] : manifest) {
    if (!manifest_keys().contains(key)) throw DataError("manifest: unknown key `" + key + "`");
  }
  const auto dir = manifest_path.parent_path();
  auto path_of = [&](const std::string& key) {
    auto it = manifest.find(key);
    if (it == manifest.end()) throw DataError("manifest: missing key `" + key + "`");
    return dir / it->second;
  };

  Dataset ds;
  ds.image_embeddings = load_tensor(path_of("image_embeddings"));
  ds.proposal_embeddings = load_tensor(path_of("proposal_embeddings"));
  ds.concept_embeddings = load_tensor(path_of("concept_embeddings"));
  detail::check_embedding_tensor(ds.image_embeddings, "image_embeddings");
  detail::check_embedding_tensor(ds.proposal_embeddings, "proposal_embeddings");
  detail::check_embedding_tensor(ds.concept_embeddings, "concept_embeddings");
  const std::size_t dim = ds.concept_embeddings.row_width();
  if (dim == 0) throw DataError("embedding dimension must be positive");
  check_same_dim(ds.image_embeddings.row_width(), dim, "image_embeddings");
  check_same_dim(ds.proposal_embeddings.row_width(), dim, "proposal_embeddings");

  detail::for_each_jsonl(path_of("concepts"), [&](const nlohmann::json& j) {
    ConceptRecord c;
    c.concept_id = j.at("concept_id").get<ConceptId>();
    c.text = j.at("text").get<std::string>();
    c.embedding_row = j.at("embedding_row").get<std::size_t>();
    c.origin = parse_origin(j.at("origin").get<std::string>());
    detail::check_row(c.embedding_row, ds.concept_embeddings);
    ds.vocabulary.push_back(std::move(c));
  });
  std::stable_sort(ds.vocabulary.begin(), ds.vocabulary.end(),
                   [](const auto& a, const auto& b) { return a.concept_id < b.concept_id; });
  for (std::size_t i = 1; i < ds.vocabulary.size(); ++i) {
    if (ds.vocabulary[i].concept_id == ds.vocabulary[i - 1].concept_id) {
      throw DataError("duplicate concept_id " + std::to_string(ds.vocabulary[i].concept_id));
    }
  }

  std::map<std::string, ImageRecord> images;
  detail::for_each_jsonl(path_of("images"), [&](const nlohmann::json& j) {
    ImageRecord img;
    img.image_id = j.at("image_id").get<std::string>();
    img.width = j.at("width").get<double>();
    img.height = j.at("height").get<double>();
    BBox::make(0.0, 0.0, img.width, img.height);
    img.image_token_rows = j.at("image_token_rows").get<std::vector<std::size_t>>();
    if (img.image_token_rows.empty()) {
      throw DataError("image " + img.image_id + " has no image tokens");
    }
    for (std::size_t r : img.image_token_rows) detail::check_row(r, ds.image_embeddings);
    img.caption_concepts = j.at("caption_concepts").get<std::vector<ConceptId>>();
    for (ConceptId id : img.caption_concepts) {
      if (ds.find_concept(id) == nullptr) throw DataError("unknown concept_id " + std::to_string(id));
    }
    const std::string id = img.image_id;
    if (!images.emplace(id, std::move(img)).second) throw DataError("duplicate image_id " + id);
  });

  detail::for_each_jsonl(path_of("proposals"), [&](const nlohmann::json& j) {
    ProposalRecord p;
    p.image_id = j.at("image_id").get<std::string>();
    p.box = detail::box_from_json(j.at("box"));
    p.objectness = j.at("objectness").get<double>();
    if (!(p.objectness >= 0.0 && p.objectness <= 1.0)) throw DataError("objectness outside [0,1]");
    p.embedding_row = j.at("embedding_row").get<std::size_t>();
    detail::check_row(p.embedding_row, ds.proposal_embeddings);
    auto it = images.find(p.image_id);
    if (it == images.end()) throw DataError("proposal references unknown image_id " + p.image_id);
    it->second.proposals.push_back(std::move(p));
  });

  ds.images.reserve(images.size());
  for (auto& [id, img] : images) ds.images.push_back(std::move(img));
  return ds;
}

// Writes the dataset under `dir` with the default file names and returns the
// manifest path.
inline std::filesystem::path save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(ds.image_embeddings, dir / "image_embeddings.mdet");
  save_tensor(ds.proposal_embeddings, dir / "proposal_embeddings.mdet");
  save_tensor(ds.concept_embeddings, dir / "concept_embeddings.mdet");
  {
    std::ofstream out(dir / "concepts.jsonl", std::ios::trunc);
    for (const auto& c : ds.vocabulary) {
      nlohmann::ordered_json j;
      j["concept_id"] = c.concept_id;
      j["text"] = c.text;
      j["embedding_row"] = c.embedding_row;
      j["origin"] = to_string(c.origin);
      out << j.dump() << '\n';
    }
  }
  {
    std::ofstream images(dir / "images.jsonl", std::ios::trunc);
    std::ofstream proposals(dir / "proposals.jsonl", std::ios::trunc);
    for (const auto& img : ds.images) {
      nlohmann::ordered_json j;
      j["image_id"] = img.image_id;
      j["width"] = img.width;
      j["height"] = img.height;
      j["image_token_rows"] = img.image_token_rows;
      j["caption_concepts"] = img.caption_concepts;
      images << j.dump() << '\n';
      for (const auto& p : img.proposals) {
        nlohmann::ordered_json pj;
        pj["image_id"] = p.image_id;
        pj["box"] = detail::box_to_json(p.box);
        pj["objectness"] = p.objectness;
        pj["embedding_row"] = p.embedding_row;
        proposals << pj.dump() << '\n';
      }
    }
  }
  const auto manifest = dir / "manifest.txt";
  std::ofstream out(manifest, std::ios::trunc);
  out << "# ovmine dataset manifest\n";
  write_key_values(out, {{"images", "images.jsonl"},
                         {"proposals", "proposals.jsonl"},
                         {"concepts", "concepts.jsonl"},
                         {"image_embeddings", "image_embeddings.mdet"},
                         {"proposal_embeddings", "proposal_embeddings.mdet"},
                         {"concept_embeddings", "concept_embeddings.mdet"}});
  return manifest;
}

}  // namespace ovmine
