// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "ovmine/class_adjust.hpp"
#include "test_support.hpp"

using ovmine::BiasVector;
using ovmine::ClusterParams;
using ovmine::Vector;

namespace {

std::vector<Vector> blob(testing_support::Gen& g, const Vector& center, std::size_t n, double radius) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(g.near(center, radius));
  return out;
}

}  // namespace

TEST(DensityPeak, SinglePoint) {
  const auto r = ovmine::density_peak_cluster(std::vector<Vector>{{1, 2, 3}}, {});
  EXPECT_EQ(r.cluster_count, 1u);
  EXPECT_EQ(r.retained_count, 1u);
  EXPECT_EQ(r.assignment, (std::vector<std::size_t>{0}));
  EXPECT_EQ(r.nearest_denser[0], ovmine::kNoNeighbor);
}

TEST(DensityPeak, IdenticalPointsFormOneCluster) {
  const std::vector<Vector> same(10, Vector{0.3, -0.2, 0.9});
  const auto r = ovmine::density_peak_cluster(same, {});
  EXPECT_EQ(r.cutoff, 0.0);
  EXPECT_EQ(r.cluster_count, 1u);
  EXPECT_EQ(r.retained_count, 10u);
  for (double rho : r.rho) EXPECT_EQ(rho, 9.0);
}

TEST(DensityPeak, EmptyInputRejected) {
  EXPECT_THROW(ovmine::density_peak_cluster(std::vector<Vector>{}, {}), ovmine::DataError);
  EXPECT_THROW(ovmine::density_peak_cluster(std::vector<Vector>{{1, 0}, {1}}, {}), ovmine::DataError);
}

TEST(DensityPeak, TwoSeparatedBlobs) {
  testing_support::Gen g(3);
  Vector a(16, 0.0);
  Vector b(16, 0.0);
  a[0] = 1.0;
  b[1] = 1.0;
  auto points = blob(g, a, 20, 0.05);
  const auto second = blob(g, b, 20, 0.05);
  points.insert(points.end(), second.begin(), second.end());
  ClusterParams params;
  params.neighbor_fraction = 0.1;
  params.center_sigma = 1.0;
  const auto r = ovmine::density_peak_cluster(points, params);
  ASSERT_EQ(r.cluster_count, 2u);
  for (std::size_t i = 1; i < 20; ++i) EXPECT_EQ(r.assignment[i], r.assignment[0]);
  for (std::size_t i = 21; i < 40; ++i) EXPECT_EQ(r.assignment[i], r.assignment[20]);
  EXPECT_NE(r.assignment[0], r.assignment[20]);
}

TEST(DensityPeak, CutoffRule) {
  // Four points on a line of unit vectors: pair distances known exactly.
  const std::vector<Vector> pts = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const auto d = ovmine::cosine_distances(pts);
  EXPECT_EQ(d(0, 1), 1.0);
  EXPECT_EQ(d(0, 2), 2.0);
  // max(1, 0.02 * 4) = 1 neighbour on average -> ceil(4 / 2) = 2nd smallest pair.
  EXPECT_EQ(ovmine::cutoff_distance(d, 0.02), 1.0);
}

TEST(DensityPeakProperty, DeterministicAndHaloAccounting) {
  testing_support::Gen g(19);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t d = g.index(2, 8);
    std::vector<Vector> pts;
    const std::size_t blobs = g.index(1, 4);
    for (std::size_t b = 0; b < blobs; ++b) {
      const auto part = blob(g, g.unit(d), g.index(1, 30), g.uniform(0.01, 0.4));
      pts.insert(pts.end(), part.begin(), part.end());
    }
    ClusterParams params;
    params.neighbor_fraction = g.uniform(0.01, 0.2);
    params.center_sigma = g.uniform(0.0, 3.0);
    const auto r = ovmine::density_peak_cluster(pts, params);
    const auto again = ovmine::density_peak_cluster(pts, params);
    EXPECT_EQ(r.rho, again.rho);
    EXPECT_EQ(r.assignment, again.assignment);
    EXPECT_GE(r.cluster_count, 1u);
    EXPECT_EQ(r.retained_count + static_cast<std::size_t>(std::count(r.halo.begin(), r.halo.end(), true)), pts.size());
    EXPECT_LE(r.retained_count, r.point_count);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT(r.assignment[i], r.cluster_count);
    for (std::size_t c = 0; c < r.centers.size(); ++c) EXPECT_EQ(r.assignment[r.centers[c]], c);
  }
}

TEST(Bias, Examples) {
  EXPECT_EQ(ovmine::bias_term(4, 40), 20.0);
  EXPECT_EQ(ovmine::bias_term(1, 1), 1.0);
  EXPECT_EQ(ovmine::bias_term(0, 0), 0.0);
}

TEST(BiasProperty, Monotonicity) {
  for (std::size_t k = 1; k <= 20; ++k) {
    for (std::size_t n = 0; n < 100; ++n) {
      EXPECT_GE(ovmine::bias_term(k, n), 0.0);
      EXPECT_LE(ovmine::bias_term(k, n), ovmine::bias_term(k, n + 1));
      EXPECT_GE(ovmine::bias_term(k, n), ovmine::bias_term(k + 1, n));
      EXPECT_NEAR(ovmine::bias_term(k, n), static_cast<double>(n) / std::sqrt(static_cast<double>(k)), 1e-12);
    }
  }
}

TEST(Bias, UnseenConceptsGetZero) {
  const auto r = ovmine::density_peak_cluster(std::vector<Vector>{{1, 0}, {1, 0.01}}, {}, 7);
  const std::vector<ovmine::ConceptId> vocab = {2, 7, 9};
  const BiasVector bias = ovmine::compute_bias(std::vector<ovmine::ClusterResult>{r}, vocab, 0.4);
  ASSERT_EQ(bias.entries.size(), 3u);
  EXPECT_EQ(bias.beta(2), 0.0);
  EXPECT_EQ(bias.beta(7), 2.0);
  EXPECT_EQ(bias.beta(9), 0.0);
  EXPECT_EQ(bias.beta(1234), 0.0);
  EXPECT_EQ(bias.gamma, 0.4);
  EXPECT_THROW(ovmine::compute_bias({}, vocab, -1.0), ovmine::ParamError);
}

TEST(AdjustScores, FigureValues) {
  const Vector raw = {12.0, 5.0};
  const Vector beta = {23.9, 9.01};
  const Vector out = ovmine::adjust_scores(raw, beta, 0.4);
  EXPECT_NEAR(raw[0] - out[0], 9.56, 1e-12);
  EXPECT_NEAR(raw[1] - out[1], 3.604, 1e-12);
}

TEST(AdjustScores, GammaZeroIsIdentity) {
  testing_support::Gen g(4);
  for (int i = 0; i < 200; ++i) {
    Vector raw(g.index(1, 30));
    Vector beta(raw.size());
    for (std::size_t q = 0; q < raw.size(); ++q) {
      raw[q] = g.normal() * 10;
      beta[q] = g.uniform(0, 50);
    }
    EXPECT_EQ(ovmine::adjust_scores(raw, beta, 0.0), raw);
  }
}

TEST(AdjustScores, Errors) {
  EXPECT_THROW(ovmine::adjust_scores(Vector{std::numeric_limits<double>::infinity()}, Vector{1.0}, 0.4),
               ovmine::DataError);
  EXPECT_THROW(ovmine::adjust_scores(Vector{1.0, 2.0}, Vector{1.0}, 0.4), ovmine::DataError);
}

TEST(AdjustScores, ColumnLookupAndOverride) {
  BiasVector bias;
  bias.gamma = 0.5;
  bias.entries = {{1, 2.0, 1, 2}, {4, 6.0, 1, 6}};
  const std::vector<ovmine::ConceptId> cols = {4, 1, 8};
  EXPECT_EQ(ovmine::adjust_scores(Vector{10, 10, 10}, cols, bias), (Vector{7, 9, 10}));
  EXPECT_EQ(ovmine::adjust_scores(Vector{10, 10, 10}, cols, bias, 1.0), (Vector{4, 8, 10}));
}

TEST(AdjustScoreMatrix, ShapeChecks) {
  BiasVector bias;
  bias.entries = {{0, 1.0, 1, 1}, {1, 2.0, 1, 2}};
  const ovmine::Tensor scores = ovmine::Tensor::matrix(2, 2, {1, 2, 3, 4});
  const ovmine::Tensor out = ovmine::adjust_score_matrix(scores, bias, 1.0);
  EXPECT_EQ(out.data, (std::vector<float>{0, 0, 2, 2}));
  EXPECT_EQ(ovmine::adjust_score_matrix(scores, bias, 0.0), scores);
  EXPECT_THROW(ovmine::adjust_score_matrix(ovmine::Tensor::matrix(1, 3, {1, 2, 3}), bias), ovmine::DataError);
  EXPECT_THROW(ovmine::adjust_score_matrix(scores, bias, -0.1), ovmine::ParamError);
}

TEST(BiasFile, RoundTripAndValidation) {
  testing_support::TempDir dir;
  BiasVector bias;
  bias.gamma = 0.4;
  bias.entries = {{0, 23.9, 1, 24}, {21, 9.01, 4, 18}};
  ovmine::save_bias(bias, dir / "bias.json");
  EXPECT_EQ(ovmine::load_bias(dir / "bias.json"), bias);
  const auto j = ovmine::bias_to_json(bias);
  EXPECT_EQ(j["beta"][1]["concept_id"], 21);
  EXPECT_EQ(j["beta"][1]["k"], 4);
  EXPECT_EQ(j["beta"][1]["n_tilde"], 18);

  testing_support::write_bytes(dir / "neg.json", R"({"gamma":0.4,"beta":[{"concept_id":1,"beta":-1,"k":1,"n_tilde":0}]})");
  EXPECT_THROW(ovmine::load_bias(dir / "neg.json"), ovmine::DataError);
  testing_support::write_bytes(dir / "order.json",
                               R"({"gamma":0.4,"beta":[{"concept_id":2,"beta":1,"k":1,"n_tilde":1},)"
                               R"({"concept_id":1,"beta":1,"k":1,"n_tilde":1}]})");
  EXPECT_THROW(ovmine::load_bias(dir / "order.json"), ovmine::DataError);
  testing_support::write_bytes(dir / "broken.json", "{");
  EXPECT_THROW(ovmine::load_bias(dir / "broken.json"), ovmine::DataError);
}
