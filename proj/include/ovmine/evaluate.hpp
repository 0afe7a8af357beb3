// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ovmine/config.hpp"
#include "ovmine/dataset.hpp"
#include "ovmine/error.hpp"
#include "ovmine/geometry.hpp"
#include "ovmine/linalg.hpp"
#include "ovmine/proposal_mining.hpp"
#include "ovmine/synth.hpp"
#include "ovmine/tensor_io.hpp"

namespace ovmine {

struct MiningCounts {
  std::size_t mined = 0;
  std::size_t correct = 0;
  std::size_t objects = 0;
  std::size_t covered = 0;

  double precision() const { return mined == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(mined); }
  double recall() const { return objects == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(objects); }
  bool empty() const { return mined == 0; }
};

struct MiningReport {
  MiningCounts total;
  std::map<ConceptId, MiningCounts> per_concept;

  double precision() const { return total.precision(); }
  double recall() const { return total.recall(); }
  // Precision is reported as 0 with this flag when nothing was mined.
  bool empty() const { return total.empty(); }
};

// A mined pair is correct when its concept has a ground-truth object in the
// same image with IoU >= threshold; an object is covered when at least one
// correct pair matches it.
inline MiningReport eval_mining(std::span<const MinedSet> mined, const GroundTruth& truth,
                                double iou_threshold = 0.5) {
  MiningReport report;
  std::set<std::pair<std::string, std::size_t>> covered;
  for (const auto& set : mined) {
    const ImageTruth* img = truth.find(set.image_id);
    if (img == nullptr) throw DataError("world mismatch: unknown image_id " + set.image_id);
    for (const auto& c : set.concepts) {
      for (const auto& p : c.proposals) {
        bool correct = false;
        for (std::size_t o = 0; o < img->objects.size(); ++o) {
          const auto& obj = img->objects[o];
          if (obj.concept_id == c.concept_id && iou(p.box, obj.box) >= iou_threshold) {
            correct = true;
            covered.emplace(img->image_id, o);
          }
        }
        ++report.total.mined;
        ++report.per_concept[c.concept_id].mined;
        if (correct) {
          ++report.total.correct;
          ++report.per_concept[c.concept_id].correct;
        }
      }
    }
  }
  for (const auto& img : truth.images) {
    for (std::size_t o = 0; o < img.objects.size(); ++o) {
      auto& per = report.per_concept[img.objects[o].concept_id];
      ++report.total.objects;
      ++per.objects;
      if (covered.contains({img.image_id, o})) {
        ++report.total.covered;
        ++per.covered;
      }
    }
  }
  return report;
}

inline void write_mining_csv(std::ostream& out, const MiningReport& report) {
  out << "scope,concept_id,mined,correct,objects,covered,precision,recall,empty\n";
  auto row = [&](const std::string& scope, const std::string& id, const MiningCounts& c) {
    out << scope << ',' << id << ',' << c.mined << ',' << c.correct << ',' << c.objects << ',' << c.covered << ','
        << format_double(c.precision()) << ',' << format_double(c.recall()) << ',' << (c.empty() ? 1 : 0) << '\n';
  };
  row("all", "", report.total);
  for (const auto& [id, c] : report.per_concept) row("concept", std::to_string(id), c);
}

inline constexpr std::size_t kHistogramBins = 20;

struct GroupStats {
  std::size_t count = 0;
  double accuracy = 0.0;         // top-1
  double mean_confidence = 0.0;  // mean top-1 softmax probability
  std::array<std::size_t, kHistogramBins> histogram{};  // top-1 confidence over [0, 1]

  bool operator==(const GroupStats&) const = default;
};

struct ScoreStats {
  GroupStats base;
  GroupStats novel;
  double gap() const { return base.mean_confidence - novel.mean_confidence; }

  bool operator==(const ScoreStats&) const = default;
};

struct BiasReport {
  ScoreStats raw;
  ScoreStats adjusted;
};

// Ground-truth concept column for every labelled proposal row (true objects
// and fragments); distractors are skipped.
struct LabelledRow {
  std::size_t row = 0;
  std::size_t column = 0;
  bool base = false;
};

inline std::vector<LabelledRow> labelled_rows(const GroundTruth& truth, std::span<const ConceptRecord> vocabulary) {
  std::map<ConceptId, std::size_t> column;
  for (std::size_t q = 0; q < vocabulary.size(); ++q) column[vocabulary[q].concept_id] = q;
  std::vector<LabelledRow> out;
  for (const auto& img : truth.images) {
    for (const auto& p : img.proposals) {
      if (!p.object) continue;
      const ConceptId id = img.objects[*p.object].concept_id;
      auto it = column.find(id);
      if (it == column.end()) throw DataError("truth references concept " + std::to_string(id) + " outside the vocabulary");
      out.push_back(LabelledRow{p.embedding_row, it->second, vocabulary[it->second].origin == ConceptOrigin::kBase});
    }
  }
  return out;
}

inline ScoreStats score_stats(const Tensor& scores, std::span<const LabelledRow> rows) {
  ScoreStats stats;
  std::size_t correct_base = 0;
  std::size_t correct_novel = 0;
  for (const auto& lr : rows) {
    if (lr.row >= scores.rows()) throw DataError("score matrix has too few rows for the truth file");
    const Vector s = scores.row_vector(lr.row);
    const std::size_t top = argmax(s);
    const double confidence = softmax(s)[top];
    GroupStats& g = lr.base ? stats.base : stats.novel;
    ++g.count;
    g.mean_confidence += confidence;
    if (top == lr.column) ++(lr.base ? correct_base : correct_novel);
    auto bin = static_cast<std::size_t>(confidence * static_cast<double>(kHistogramBins));
    ++g.histogram[std::min(bin, kHistogramBins - 1)];
  }
  auto finish = [](GroupStats& g, std::size_t correct) {
    if (g.count == 0) return;
    g.mean_confidence /= static_cast<double>(g.count);
    g.accuracy = static_cast<double>(correct) / static_cast<double>(g.count);
  };
  finish(stats.base, correct_base);
  finish(stats.novel, correct_novel);
  return stats;
}

// Per-group top-1 accuracy, mean top-1 confidence and confidence histograms
// for raw and adjusted scores. Scores are treated as logits; rows follow the
// proposal tensor and columns the vocabulary order.
inline BiasReport eval_bias(const Tensor& raw, const Tensor& adjusted, const GroundTruth& truth,
                            std::span<const ConceptRecord> vocabulary) {
  if (raw.shape.size() != 2 || raw.shape != adjusted.shape) throw DataError("raw and adjusted score shapes differ");
  if (raw.shape[1] != vocabulary.size()) throw DataError("score columns do not match the vocabulary");
  const auto rows = labelled_rows(truth, vocabulary);
  const bool has_novel = std::any_of(rows.begin(), rows.end(), [](const LabelledRow& r) { return !r.base; });
  const bool has_base = std::any_of(rows.begin(), rows.end(), [](const LabelledRow& r) { return r.base; });
  if (!has_novel) throw DataError("split covers no novel concept");
  if (!has_base) throw DataError("split covers no base concept");
  return BiasReport{score_stats(raw, rows), score_stats(adjusted, rows)};
}

inline void write_bias_csv(std::ostream& out, const BiasReport& report) {
  out << "scores,group,metric,bin,value\n";
  auto emit = [&](const char* variant, const ScoreStats& s) {
    for (const auto& [name, g] : {std::pair<const char*, const GroupStats&>{"base", s.base},
                                  std::pair<const char*, const GroupStats&>{"novel", s.novel}}) {
      out << variant << ',' << name << ",count,," << g.count << '\n';
      out << variant << ',' << name << ",top1_accuracy,," << format_double(g.accuracy) << '\n';
      out << variant << ',' << name << ",mean_confidence,," << format_double(g.mean_confidence) << '\n';
      for (std::size_t b = 0; b < kHistogramBins; ++b) {
        out << variant << ',' << name << ",histogram," << b << ',' << g.histogram[b] << '\n';
      }
    }
    out << variant << ",all,confidence_gap,," << format_double(s.gap()) << '\n';
  };
  emit("raw", report.raw);
  emit("adjusted", report.adjusted);
}

}  // namespace ovmine
