// Copyright 2026 The SAC Codec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sac/quantization.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace sac {

template <typename Scalar>
Codebook<Scalar>::Codebook(Index size, Index dim, std::mt19937_64& rng, bool trainable) {
  if (size < 2 || dim < 1) throw ValidationError("codebook needs K >= 2 entries of dimension >= 1");
  const double bound = 1.0 / static_cast<double>(size);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<Scalar> m(size, dim);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  entries_ = ad::Tensor<Scalar>(std::move(m), trainable);
  usage_.assign(static_cast<std::size_t>(size), 0);
}

template <typename Scalar>
Codebook<Scalar>::Codebook(Matrix<Scalar> entries, bool trainable)
    : entries_(std::move(entries), trainable), usage_(static_cast<std::size_t>(entries_.rows()), 0) {
  validate();
}

template <typename Scalar>
void Codebook<Scalar>::record_step(std::span<const int> indices) {
  for (auto& u : usage_) ++u;
  for (int k : indices) {
    if (k < 0 || k >= size()) throw ValidationError("record_step: index out of range");
    usage_[static_cast<std::size_t>(k)] = 0;
  }
}

template <typename Scalar>
void Codebook<Scalar>::validate() const {
  if (size() < 2) throw ValidationError("codebook must have at least 2 entries");
  if (!entries_.value().allFinite()) throw ValidationError("codebook has non-finite entries");
  for (auto u : usage_) {
    if (u < 0) throw ValidationError("codebook usage counters must be nonnegative");
  }
}

template <typename Scalar>
Quantized<Scalar> quantize(const Matrix<Scalar>& z, const Codebook<Scalar>& cb) {
  if (z.cols() != cb.dim()) {
    throw ValidationError("quantize: latent width " + std::to_string(z.cols()) + " != code dimension " +
                          std::to_string(cb.dim()));
  }
  if (!z.allFinite()) throw ValidationError("quantize: non-finite latent");
  const Matrix<float> query = z.template cast<float>();
  const Matrix<float> table = cb.entries().value().template cast<float>();
  const Index k_total = table.rows(), d = table.cols();
  Quantized<Scalar> out;
  out.indices.resize(static_cast<std::size_t>(z.rows()));
  out.values.resize(z.rows(), d);
  for (Index t = 0; t < z.rows(); ++t) {
    const float* q = query.data() + t * d;
    float best = std::numeric_limits<float>::infinity();
    int best_k = 0;
    for (Index k = 0; k < k_total; ++k) {
      const float* e = table.data() + k * d;
      float dist = 0.0f;
      for (Index j = 0; j < d; ++j) {
        const float diff = q[j] - e[j];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_k = static_cast<int>(k);
      }
    }
    out.indices[static_cast<std::size_t>(t)] = best_k;
    out.values.row(t) = cb.entries().value().row(best_k);
  }
  return out;
}

template <typename Scalar>
ad::Tensor<Scalar> vq_loss(const ad::Tensor<Scalar>& z, const ad::Tensor<Scalar>& zq, double w_commit,
                           double w_codebook) {
  auto codebook_term = ad::mse_loss(z.detach(), zq);
  auto commit_term = ad::mse_loss(z, zq.detach());
  return codebook_term * static_cast<Scalar>(w_codebook) + commit_term * static_cast<Scalar>(w_commit);
}

template <typename Scalar>
Index reinit_dead_codes(Codebook<Scalar>& cb, const Matrix<Scalar>& batch_latents, std::int64_t threshold_steps,
                        std::uint64_t seed) {
  if (batch_latents.rows() < 1) throw ValidationError("reinit_dead_codes: need at least one latent");
  if (batch_latents.cols() != cb.dim()) throw ValidationError("reinit_dead_codes: latent width mismatch");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, batch_latents.rows() - 1);
  Index count = 0;
  auto& table = cb.entries().mutable_value();
  for (Index k = 0; k < cb.size(); ++k) {
    auto& counter = cb.usage()[static_cast<std::size_t>(k)];
    if (counter < threshold_steps) continue;
    table.row(k) = batch_latents.row(pick(rng));
    counter = 0;
    ++count;
  }
  return count;
}

CodebookStats codebook_stats(std::span<const int> indices, Index codebook_size) {
  if (indices.empty()) throw ValidationError("codebook_stats: need at least one index");
  if (codebook_size < 1) throw ValidationError("codebook_stats: codebook size must be positive");
  std::vector<double> counts(static_cast<std::size_t>(codebook_size), 0.0);
  for (int k : indices) {
    if (k < 0 || k >= codebook_size) throw ValidationError("codebook_stats: index out of range");
    counts[static_cast<std::size_t>(k)] += 1.0;
  }
  const double n = static_cast<double>(indices.size());
  double entropy = 0.0;
  Index used = 0;
  for (double c : counts) {
    if (c == 0.0) continue;
    ++used;
    const double p = c / n;
    entropy -= p * std::log(p);
  }
  return {static_cast<double>(used) / static_cast<double>(codebook_size), std::exp(entropy)};
}

template class Codebook<float>;
template class Codebook<double>;
template Quantized<float> quantize<float>(const Matrix<float>&, const Codebook<float>&);
template Quantized<double> quantize<double>(const Matrix<double>&, const Codebook<double>&);
template ad::Tensor<float> vq_loss<float>(const ad::Tensor<float>&, const ad::Tensor<float>&, double, double);
template ad::Tensor<double> vq_loss<double>(const ad::Tensor<double>&, const ad::Tensor<double>&, double, double);
template Index reinit_dead_codes<float>(Codebook<float>&, const Matrix<float>&, std::int64_t, std::uint64_t);
template Index reinit_dead_codes<double>(Codebook<double>&, const Matrix<double>&, std::int64_t, std::uint64_t);

}  // namespace sac
