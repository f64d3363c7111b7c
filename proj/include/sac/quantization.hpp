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

#ifndef SAC_QUANTIZATION_HPP_
#define SAC_QUANTIZATION_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sac/autodiff.hpp"

namespace sac {

// K x d_code embedding table plus, per entry, the number of optimizer steps
// since it was last selected.
template <typename Scalar>
class Codebook {
 public:
  Codebook() = default;
  // Entries uniform in [-1/K, 1/K].
  Codebook(Index size, Index dim, std::mt19937_64& rng, bool trainable);
  Codebook(Matrix<Scalar> entries, bool trainable);

  Index size() const { return entries_.rows(); }
  Index dim() const { return entries_.cols(); }
  const ad::Tensor<Scalar>& entries() const { return entries_; }
  ad::Tensor<Scalar>& entries() { return entries_; }
  const std::vector<std::int64_t>& usage() const { return usage_; }
  std::vector<std::int64_t>& usage() { return usage_; }

  // One optimizer step's bookkeeping: counters of selected entries reset to
  // zero, all others advance by one. Not thread-safe; the training loop is
  // the single writer.
  void record_step(std::span<const int> indices);
  void validate() const;

 private:
  ad::Tensor<Scalar> entries_;
  std::vector<std::int64_t> usage_;
};

template <typename Scalar>
struct Quantized {
  std::vector<int> indices;
  Matrix<Scalar> values;  // rows are codebook entries
};

// Nearest entry by squared L2 distance, accumulated in float32; ties go to
// the lowest index. Throws ValidationError on non-finite input.
template <typename Scalar>
Quantized<Scalar> quantize(const Matrix<Scalar>& z, const Codebook<Scalar>& cb);

// w_codebook * |sg(z) - zq|^2 + w_commit * |z - sg(zq)|^2, each a mean over
// all elements. zq should be a gather from the codebook so the first term
// reaches the entries.
template <typename Scalar>
ad::Tensor<Scalar> vq_loss(const ad::Tensor<Scalar>& z, const ad::Tensor<Scalar>& zq, double w_commit,
                           double w_codebook);

// Overwrites every entry idle for at least threshold_steps with a uniformly
// drawn row of batch_latents and resets its counter. Returns the count.
template <typename Scalar>
Index reinit_dead_codes(Codebook<Scalar>& cb, const Matrix<Scalar>& batch_latents, std::int64_t threshold_steps,
                        std::uint64_t seed);

struct CodebookStats {
  double utilization = 0.0;  // distinct codes used / K
  double perplexity = 0.0;   // exp(entropy of the empirical code distribution)
};

CodebookStats codebook_stats(std::span<const int> indices, Index codebook_size);

}  // namespace sac

#endif  // SAC_QUANTIZATION_HPP_
