// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "ovmine/evaluate.hpp"
#include "ovmine/synth.hpp"
#include "test_support.hpp"

using ovmine::WorldConfig;

namespace {

WorldConfig small_config() {
  WorldConfig cfg;
  cfg.images = 30;
  cfg.dim = 16;
  cfg.base_concepts = 6;
  cfg.novel_concepts = 3;
  return cfg;
}

std::string dataset_bytes(const ovmine::World& w, const testing_support::TempDir& dir) {
  ovmine::save_dataset(w.dataset, dir.path());
  ovmine::save_truth(w.truth, dir / "truth.jsonl");
  std::string all;
  for (const char* f : {"images.jsonl", "proposals.jsonl", "concepts.jsonl", "image_embeddings.mdet",
                        "proposal_embeddings.mdet", "concept_embeddings.mdet", "truth.jsonl", "manifest.txt"}) {
    all += testing_support::read_bytes(dir / f);
  }
  return all;
}

}  // namespace

TEST(Synth, SameSeedIsByteIdenticalAcrossWorkers) {
  const WorldConfig cfg = small_config();
  testing_support::TempDir a;
  testing_support::TempDir b;
  EXPECT_EQ(dataset_bytes(ovmine::generate_world(cfg, 1), a), dataset_bytes(ovmine::generate_world(cfg, 4), b));
  WorldConfig other = cfg;
  other.seed = 43;
  testing_support::TempDir c;
  EXPECT_NE(dataset_bytes(ovmine::generate_world(other), c), dataset_bytes(ovmine::generate_world(cfg), a));
}

TEST(Synth, ConceptsRespectAngle) {
  WorldConfig cfg = small_config();
  cfg.min_angle_deg = 70;
  const auto w = ovmine::generate_world(cfg);
  const auto& t = w.dataset.concept_embeddings;
  const double limit = std::cos(70.0 * std::numbers::pi / 180.0);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    EXPECT_NEAR(ovmine::norm(t.row_vector(i)), 1.0, 1e-5);
    for (std::size_t j = i + 1; j < t.rows(); ++j) {
      EXPECT_LE(ovmine::cosine(t.row_vector(i), t.row_vector(j)), limit + 1e-6);
    }
  }
}

TEST(Synth, InfeasibleAngleRejected) {
  WorldConfig cfg = small_config();
  cfg.dim = 2;
  cfg.min_angle_deg = 100;
  EXPECT_THROW(ovmine::generate_world(cfg), ovmine::ParamError);
}

TEST(Synth, NoiselessTruePropositionsAlignWithConcept) {
  WorldConfig cfg = small_config();
  cfg.embedding_noise = 0.0;
  cfg.distractors_per_image = 0;
  cfg.fragment_rate = 0.0;
  const auto w = ovmine::generate_world(cfg);
  for (const auto& img : w.truth.images) {
    for (const auto& p : img.proposals) {
      ASSERT_EQ(p.origin, ovmine::ProposalOrigin::kTrueObject);
      const auto c = w.dataset.concept_embedding(img.objects[*p.object].concept_id);
      EXPECT_NEAR(ovmine::cosine(c, w.dataset.proposal_embeddings.row_vector(p.embedding_row)), 1.0, 1e-6);
    }
  }
}

TEST(Synth, NoiselessWorldMinesPerfectly) {
  WorldConfig cfg = small_config();
  cfg.embedding_noise = 0.0;
  cfg.distractors_per_image = 0;
  cfg.fragment_rate = 0.0;
  const auto w = ovmine::generate_world(cfg);
  std::vector<ovmine::MinedSet> sets;
  for (const auto& img : w.dataset.images) sets.push_back(ovmine::mine_image(img, w.dataset, nullptr, {}));
  const auto report = ovmine::eval_mining(sets, w.truth);
  EXPECT_EQ(report.precision(), 1.0);
  EXPECT_EQ(report.recall(), 1.0);
}

TEST(Synth, FragmentRateZeroHasNoFragments) {
  WorldConfig cfg = small_config();
  cfg.fragment_rate = 0.0;
  const auto w = ovmine::generate_world(cfg);
  for (const auto& img : w.truth.images) {
    for (const auto& p : img.proposals) EXPECT_NE(p.origin, ovmine::ProposalOrigin::kFragment);
  }
}

TEST(Synth, TruthInvariants) {
  WorldConfig cfg = small_config();
  cfg.fragment_rate = 1.0;
  const auto w = ovmine::generate_world(cfg);
  std::size_t fragments = 0;
  for (std::size_t i = 0; i < w.truth.images.size(); ++i) {
    const auto& img = w.truth.images[i];
    const auto& rec = w.dataset.images[i];
    ASSERT_EQ(img.image_id, rec.image_id);
    ASSERT_EQ(img.proposals.size(), rec.proposals.size());
    for (std::size_t p = 0; p < img.proposals.size(); ++p) {
      const auto& tp = img.proposals[p];
      EXPECT_EQ(tp.embedding_row, rec.proposals[p].embedding_row);
      EXPECT_EQ(tp.object.has_value(), tp.origin != ovmine::ProposalOrigin::kDistractor);
      if (tp.origin == ovmine::ProposalOrigin::kFragment) {
        ++fragments;
        EXPECT_TRUE(ovmine::contains(img.objects[*tp.object].box, rec.proposals[p].box));
      }
      EXPECT_GE(rec.proposals[p].objectness, 0.0);
      EXPECT_LE(rec.proposals[p].objectness, 1.0);
    }
  }
  EXPECT_EQ(fragments, 2 * cfg.images * cfg.objects_per_image);
}

TEST(Synth, BaseConceptsAreMoreFrequent) {
  WorldConfig cfg;
  cfg.images = 400;
  cfg.dim = 16;
  const auto w = ovmine::generate_world(cfg);
  const auto counts = w.truth.object_counts();
  double base = 0.0;
  double novel = 0.0;
  for (const auto& [id, n] : counts) (id < cfg.base_concepts ? base : novel) += static_cast<double>(n);
  base /= static_cast<double>(cfg.base_concepts);
  novel /= static_cast<double>(cfg.novel_concepts);
  EXPECT_GT(base / novel, 2.5);
  EXPECT_LT(base / novel, 6.0);
}

TEST(Synth, TruthFileRoundTrip) {
  testing_support::TempDir dir;
  const auto w = ovmine::generate_world(small_config());
  ovmine::save_truth(w.truth, dir / "truth.jsonl");
  const auto back = ovmine::load_truth(dir / "truth.jsonl");
  ASSERT_EQ(back.images.size(), w.truth.images.size());
  EXPECT_EQ(back.object_counts(), w.truth.object_counts());
  EXPECT_EQ(back.images[3].proposals.size(), w.truth.images[3].proposals.size());
}

TEST(Synth, ConfigValidation) {
  WorldConfig cfg;
  cfg.fragment_rate = 1.5;
  EXPECT_THROW(cfg.validate(), ovmine::ParamError);
  cfg = {};
  cfg.images = 0;
  EXPECT_THROW(cfg.validate(), ovmine::ParamError);
  cfg = {};
  cfg.frequency_ratio = 0.5;
  EXPECT_THROW(cfg.validate(), ovmine::ParamError);
  cfg = {};
  cfg.objects_per_image = 21;
  EXPECT_THROW(cfg.validate(), ovmine::ParamError);
}

TEST(Synth, BiasedScorerInflatesFrequentColumns) {
  const auto w = ovmine::generate_world(small_config());
  ovmine::ScorerConfig plain;
  plain.inflation_per_instance = 0.0;
  const auto raw = ovmine::biased_scores(w.dataset, w.truth, {});
  const auto flat = ovmine::biased_scores(w.dataset, w.truth, plain);
  const auto counts = w.truth.object_counts();
  for (std::size_t q = 0; q < w.dataset.vocabulary.size(); ++q) {
    const auto it = counts.find(w.dataset.vocabulary[q].concept_id);
    const double expected = it == counts.end() ? 0.0 : 0.3 * static_cast<double>(it->second);
    EXPECT_NEAR(raw.data[q] - flat.data[q], expected, 1e-4);
  }
}
