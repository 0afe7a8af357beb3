// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// Cross-modality attention block that injects image information into concept
// text embeddings:
//
//   T' = T + CA(Wq T, Wk V, Wv V)
//   T_aug = T' + FFN(T'),   FFN(x) = W2 relu(W1 x + b1) + b2
//
// CA is single-head scaled dot-product attention over the image tokens V
// (softmax over tokens, scale 1/sqrt(D)). There is no layer normalization.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ovmine/config.hpp"
#include "ovmine/error.hpp"
#include "ovmine/linalg.hpp"
#include "ovmine/rng.hpp"
#include "ovmine/tensor_io.hpp"

namespace ovmine {

struct AttentionWeights {
  Matrix query;       // D x D
  Matrix key;         // D x D
  Matrix value;       // D x D
  Matrix ffn_in;      // H x D
  Vector ffn_in_bias; // H
  Matrix ffn_out;     // D x H
  Vector ffn_out_bias;// D

  std::size_t dim() const { return query.rows(); }
  std::size_t hidden() const { return ffn_in.rows(); }

  static std::size_t default_hidden(std::size_t dim) { return 4 * dim; }

  static AttentionWeights zeros(std::size_t dim, std::size_t hidden) {
    return AttentionWeights{Matrix(dim, dim),    Matrix(dim, dim), Matrix(dim, dim),
                            Matrix(hidden, dim), Vector(hidden),   Matrix(dim, hidden),
                            Vector(dim)};
  }

  // Every parameter uniform in [-1/sqrt(D), 1/sqrt(D)], drawn in declaration
  // order from a single stream.
  static AttentionWeights random(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
    AttentionWeights w = zeros(dim, hidden);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    auto fill = [&](Vector& values) {
      for (double& v : values) v = rng.uniform(-bound, bound);
    };
    fill(w.query.data());
    fill(w.key.data());
    fill(w.value.data());
    fill(w.ffn_in.data());
    fill(w.ffn_in_bias);
    fill(w.ffn_out.data());
    fill(w.ffn_out_bias);
    return w;
  }

  void validate() const {
    const std::size_t d = dim();
    const std::size_t h = hidden();
    if (d == 0 || h == 0) throw DataError("attention weights must have positive dimensions");
    auto shape_is = [](const Matrix& m, std::size_t r, std::size_t c) { return m.rows() == r && m.cols() == c; };
    if (!shape_is(query, d, d) || !shape_is(key, d, d) || !shape_is(value, d, d) ||
        !shape_is(ffn_in, h, d) || !shape_is(ffn_out, d, h) || ffn_in_bias.size() != h ||
        ffn_out_bias.size() != d) {
      throw DataError("dimension mismatch in attention weights");
    }
    for (const Vector* v : {&query.data(), &key.data(), &value.data(), &ffn_in.data(),
                            &ffn_in_bias, &ffn_out.data(), &ffn_out_bias}) {
      if (!all_finite(*v)) throw DataError("non-finite attention weights");
    }
  }
};

// Attention distribution of one projected query over projected keys.
inline Vector attention_weights(std::span<const double> query, std::span<const Vector> keys) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
  Vector logits(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) logits[j] = dot(query, keys[j]) * scale;
  return softmax(logits);
}

inline std::vector<Vector> augment_concepts(std::span<const Vector> concepts,
                                            std::span<const Vector> image_tokens,
                                            const AttentionWeights& w) {
  w.validate();
  if (image_tokens.empty()) throw DataError("augment_concepts needs at least one image token");
  const std::size_t d = w.dim();
  std::vector<Vector> keys;
  std::vector<Vector> values;
  keys.reserve(image_tokens.size());
  values.reserve(image_tokens.size());
  for (const auto& v : image_tokens) {
    check_same_dim(v.size(), d, "image token");
    keys.push_back(w.key.apply(v));
    values.push_back(w.value.apply(v));
  }

  std::vector<Vector> out;
  out.reserve(concepts.size());
  for (const auto& t : concepts) {
    check_same_dim(t.size(), d, "concept embedding");
    const Vector q = w.query.apply(t);
    const Vector a = attention_weights(q, keys);

    Vector mid = t;
    for (std::size_t j = 0; j < values.size(); ++j) {
      for (std::size_t c = 0; c < d; ++c) mid[c] += a[j] * values[j][c];
    }

    Vector hidden = w.ffn_in.apply(mid);
    for (std::size_t h = 0; h < hidden.size(); ++h) hidden[h] = std::max(0.0, hidden[h] + w.ffn_in_bias[h]);
    const Vector ffn = w.ffn_out.apply(hidden);
    for (std::size_t c = 0; c < d; ++c) mid[c] += ffn[c] + w.ffn_out_bias[c];
    out.push_back(std::move(mid));
  }
  return out;
}

// Weight bundle: a manifest naming one MDET file per parameter
// (w_q, w_k, w_v, ffn_w1, ffn_b1, ffn_w2, ffn_b2).
inline AttentionWeights load_attention_weights(const std::filesystem::path& manifest_path) {
  const KeyValues kv = load_key_values(manifest_path);
  const std::set<std::string> keys = {"w_q", "w_k", "w_v", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2"};
  for (const auto& [key, value] : kv) {
    if (!keys.contains(key)) throw DataError("weights manifest: unknown key `" + key + "`");
  }
  auto load = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("weights manifest: missing key `" + key + "`");
    return load_tensor(manifest_path.parent_path() / it->second);
  };
  auto as_matrix = [](const Tensor& t, const std::string& name) {
    if (t.shape.size() != 2) throw DataError(name + " must be rank 2");
    return Matrix(t.shape[0], t.shape[1], Vector(t.data.begin(), t.data.end()));
  };
  auto as_vector = [](const Tensor& t, const std::string& name) {
    if (t.shape.size() != 1) throw DataError(name + " must be rank 1");
    return Vector(t.data.begin(), t.data.end());
  };
  AttentionWeights w{as_matrix(load("w_q"), "w_q"),       as_matrix(load("w_k"), "w_k"),
                     as_matrix(load("w_v"), "w_v"),       as_matrix(load("ffn_w1"), "ffn_w1"),
                     as_vector(load("ffn_b1"), "ffn_b1"), as_matrix(load("ffn_w2"), "ffn_w2"),
                     as_vector(load("ffn_b2"), "ffn_b2")};
  w.validate();
  return w;
}

inline std::filesystem::path save_attention_weights(const AttentionWeights& w,
                                                    const std::filesystem::path& dir) {
  w.validate();
  std::filesystem::create_directories(dir);
  auto to_float = [](const Vector& v) { return std::vector<float>(v.begin(), v.end()); };
  auto save_matrix = [&](const Matrix& m, const std::string& file) {
    save_tensor(Tensor::matrix(m.rows(), m.cols(), to_float(m.data())), dir / file);
  };
  auto save_vector = [&](const Vector& v, const std::string& file) {
    save_tensor(Tensor{DType::kFloat32, {v.size()}, to_float(v)}, dir / file);
  };
  save_matrix(w.query, "w_q.mdet");
  save_matrix(w.key, "w_k.mdet");
  save_matrix(w.value, "w_v.mdet");
  save_matrix(w.ffn_in, "ffn_w1.mdet");
  save_vector(w.ffn_in_bias, "ffn_b1.mdet");
  save_matrix(w.ffn_out, "ffn_w2.mdet");
  save_vector(w.ffn_out_bias, "ffn_b2.mdet");
  const auto manifest = dir / "weights.txt";
  std::ofstream out(manifest, std::ios::trunc);
  write_key_values(out, {{"w_q", "w_q.mdet"},
                         {"w_k", "w_k.mdet"},
                         {"w_v", "w_v.mdet"},
                         {"ffn_w1", "ffn_w1.mdet"},
                         {"ffn_b1", "ffn_b1.mdet"},
                         {"ffn_w2", "ffn_w2.mdet"},
                         {"ffn_b2", "ffn_b2.mdet"}});
  return manifest;
}

}  // namespace ovmine
