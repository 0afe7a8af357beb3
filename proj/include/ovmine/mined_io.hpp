// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// On-disk MinedSet collection:
//
//   mined.jsonl            one line per mined pair, in output order:
//                          {"image_id", "concept_id", "box", "objectness",
//                           "embedding_row", "merged"}
//   mined_proposals.mdet   one row per mined.jsonl line (merged embeddings)
//   mined_concepts.mdet    one row per (image_id, concept_id) block

#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovmine/dataset.hpp"
#include "ovmine/proposal_mining.hpp"
#include "ovmine/tensor_io.hpp"

namespace ovmine {

inline nlohmann::ordered_json mined_pair_json(const std::string& image_id, ConceptId concept_id,
                                              const MinedProposal& p) {
  nlohmann::ordered_json j;
  j["image_id"] = image_id;
  j["concept_id"] = concept_id;
  j["box"] = nlohmann::ordered_json::array({p.box.x1, p.box.y1, p.box.x2, p.box.y2});
  j["objectness"] = p.objectness;
  j["embedding_row"] = p.embedding_row;
  j["merged"] = p.merged;
  return j;
}

// JSONL lines for a sequence of MinedSets; the canonical textual form used
// for comparisons and output.
inline void write_mined_jsonl(std::ostream& out, std::span<const MinedSet> sets) {
  for (const auto& set : sets) {
    for (const auto& c : set.concepts) {
      for (const auto& p : c.proposals) out << mined_pair_json(set.image_id, c.concept_id, p).dump() << '\n';
    }
  }
}

// Writes the three files and returns the number of mined pairs.
inline std::size_t save_mined(std::span<const MinedSet> sets, const std::filesystem::path& dir,
                              std::size_t dim) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "mined.jsonl", std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + (dir / "mined.jsonl").string());
    write_mined_jsonl(out, sets);
  }
  std::vector<Vector> proposal_rows;
  std::vector<Vector> concept_rows;
  for (const auto& set : sets) {
    for (const auto& c : set.concepts) {
      concept_rows.push_back(c.embedding);
      for (const auto& p : c.proposals) proposal_rows.push_back(p.embedding);
    }
  }
  save_tensor(Tensor::from_rows(proposal_rows, dim), dir / "mined_proposals.mdet");
  save_tensor(Tensor::from_rows(concept_rows, dim), dir / "mined_concepts.mdet");
  return proposal_rows.size();
}

// Inverse of save_mined. Scores and proposal indices are not stored; they
// come back as zero.
inline std::vector<MinedSet> load_mined(const std::filesystem::path& dir) {
  const Tensor proposal_rows = load_tensor(dir / "mined_proposals.mdet");
  const Tensor concept_rows = load_tensor(dir / "mined_concepts.mdet");
  std::vector<MinedSet> sets;
  std::size_t line = 0;
  std::size_t block = 0;
  detail::for_each_jsonl(dir / "mined.jsonl", [&](const nlohmann::json& j) {
    const std::string image_id = j.at("image_id").get<std::string>();
    const ConceptId concept_id = j.at("concept_id").get<ConceptId>();
    if (sets.empty() || sets.back().image_id != image_id) sets.push_back(MinedSet{image_id, {}});
    auto& set = sets.back();
    if (set.concepts.empty() || set.concepts.back().concept_id != concept_id) {
      if (block >= concept_rows.rows()) throw DataError("mined_concepts.mdet has too few rows");
      set.concepts.push_back(MinedConcept{concept_id, concept_rows.row_vector(block++), {}});
    }
    if (line >= proposal_rows.rows()) throw DataError("mined_proposals.mdet has too few rows");
    MinedProposal p;
    p.box = detail::box_from_json(j.at("box"));
    p.objectness = j.at("objectness").get<double>();
    p.embedding_row = j.at("embedding_row").get<std::size_t>();
    p.merged = j.at("merged").get<bool>();
    p.embedding = proposal_rows.row_vector(line++);
    set.concepts.back().proposals.push_back(std::move(p));
  });
  if (line != proposal_rows.rows() || block != concept_rows.rows()) {
    throw DataError("mined tensors do not match mined.jsonl");
  }
  return sets;
}

}  // namespace ovmine
