// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "ovmine/concept_augment.hpp"
#include "test_support.hpp"

using ovmine::AttentionWeights;
using ovmine::Vector;

namespace {

double max_abs_diff(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t c = 0; c < a[i].size(); ++c) m = std::max(m, std::abs(a[i][c] - b[i][c]));
  }
  return m;
}

std::vector<Vector> random_set(testing_support::Gen& g, std::size_t n, std::size_t d) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(g.vector(d));
  return out;
}

}  // namespace

TEST(ConceptAugment, ScalarHandEvaluation) {
  AttentionWeights w = AttentionWeights::zeros(1, 4);
  w.query(0, 0) = 1.0;
  w.key(0, 0) = 1.0;
  w.value(0, 0) = 1.0;
  const auto out = ovmine::augment_concepts(std::vector<Vector>{{2.0}}, std::vector<Vector>{{3.0}}, w);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0][0], 5.0);
}

TEST(ConceptAugment, TwoTokenHandEvaluation) {
  // D = 1, q = t = 1, keys 0 and 1: weights softmax(0, 1).
  AttentionWeights w = AttentionWeights::zeros(1, 2);
  w.query(0, 0) = 1.0;
  w.key(0, 0) = 1.0;
  w.value(0, 0) = 1.0;
  w.ffn_in(0, 0) = 1.0;
  w.ffn_out(0, 0) = 2.0;
  w.ffn_out_bias[0] = -0.5;
  const auto out = ovmine::augment_concepts(std::vector<Vector>{{1.0}}, std::vector<Vector>{{0.0}, {1.0}}, w);
  const double a1 = std::exp(1.0) / (1.0 + std::exp(1.0));
  const double mid = 1.0 + a1;
  EXPECT_NEAR(out[0][0], mid + 2.0 * mid - 0.5, 1e-12);
}

TEST(ConceptAugment, ZeroOutputPathIsIdentity) {
  testing_support::Gen g(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = g.index(1, 12);
    AttentionWeights w = AttentionWeights::random(d, 4 * d, trial);
    w.value = ovmine::Matrix(d, d, 0.0);
    w.ffn_out = ovmine::Matrix(d, 4 * d, 0.0);
    std::fill(w.ffn_out_bias.begin(), w.ffn_out_bias.end(), 0.0);
    const auto concepts = random_set(g, g.index(1, 5), d);
    const auto out = ovmine::augment_concepts(concepts, random_set(g, g.index(1, 5), d), w);
    EXPECT_EQ(out, concepts);
  }
}

TEST(ConceptAugment, AttentionWeightsSumToOne) {
  testing_support::Gen g(8);
  for (int i = 0; i < 200; ++i) {
    const std::size_t d = g.index(1, 10);
    const auto keys = random_set(g, g.index(1, 9), d);
    const Vector a = ovmine::attention_weights(g.vector(d), keys);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(ConceptAugmentProperty, ConceptPermutationEquivariance) {
  testing_support::Gen g(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = g.index(1, 10);
    const AttentionWeights w = AttentionWeights::random(d, 4 * d, 1000 + trial);
    auto concepts = random_set(g, g.index(1, 6), d);
    const auto tokens = random_set(g, g.index(1, 6), d);
    const auto base = ovmine::augment_concepts(concepts, tokens, w);
    std::vector<std::size_t> perm(concepts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.engine());
    std::vector<Vector> permuted;
    std::vector<Vector> expected;
    for (std::size_t p : perm) {
      permuted.push_back(concepts[p]);
      expected.push_back(base[p]);
    }
    EXPECT_LE(max_abs_diff(ovmine::augment_concepts(permuted, tokens, w), expected), 1e-6);
  }
}

TEST(ConceptAugmentProperty, TokenPermutationInvariance) {
  testing_support::Gen g(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = g.index(1, 10);
    const AttentionWeights w = AttentionWeights::random(d, 4 * d, 2000 + trial);
    const auto concepts = random_set(g, g.index(1, 6), d);
    auto tokens = random_set(g, g.index(1, 6), d);
    const auto base = ovmine::augment_concepts(concepts, tokens, w);
    std::shuffle(tokens.begin(), tokens.end(), g.engine());
    EXPECT_LE(max_abs_diff(ovmine::augment_concepts(concepts, tokens, w), base), 1e-6);
  }
}

TEST(ConceptAugment, Errors) {
  const AttentionWeights w = AttentionWeights::random(3, 12, 1);
  EXPECT_THROW(ovmine::augment_concepts(std::vector<Vector>{{1, 2, 3}}, std::vector<Vector>{}, w), ovmine::DataError);
  EXPECT_THROW(ovmine::augment_concepts(std::vector<Vector>{{1, 2}}, std::vector<Vector>{{1, 2, 3}}, w),
               ovmine::DataError);
  AttentionWeights bad = w;
  bad.query(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(ovmine::augment_concepts(std::vector<Vector>{{1, 2, 3}}, std::vector<Vector>{{1, 2, 3}}, bad),
               ovmine::DataError);
  AttentionWeights wrong = w;
  wrong.ffn_in_bias.pop_back();
  EXPECT_THROW(wrong.validate(), ovmine::DataError);
}

TEST(ConceptAugment, RandomInitIsBoundedAndSeeded) {
  const AttentionWeights a = AttentionWeights::random(16, 64, 5);
  const AttentionWeights b = AttentionWeights::random(16, 64, 5);
  EXPECT_EQ(a.query.data(), b.query.data());
  for (double v : a.ffn_in.data()) EXPECT_LE(std::abs(v), 0.25);
  EXPECT_NE(a.query.data(), AttentionWeights::random(16, 64, 6).query.data());
}

TEST(ConceptAugment, WeightBundleRoundTrip) {
  testing_support::TempDir dir;
  const AttentionWeights w = AttentionWeights::random(4, 16, 3);
  const auto manifest = ovmine::save_attention_weights(w, dir.path());
  const AttentionWeights back = ovmine::load_attention_weights(manifest);
  // Stored as binary32.
  for (std::size_t i = 0; i < w.key.data().size(); ++i) {
    EXPECT_EQ(back.key.data()[i], static_cast<double>(static_cast<float>(w.key.data()[i])));
  }
  EXPECT_EQ(back.ffn_out_bias.size(), 4u);
}
