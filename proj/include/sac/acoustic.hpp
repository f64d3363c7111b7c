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

#ifndef SAC_ACOUSTIC_HPP_
#define SAC_ACOUSTIC_HPP_

#include <random>
#include <string>
#include <vector>

#include "sac/config.hpp"
#include "sac/nn.hpp"
#include "sac/quantization.hpp"

namespace sac {

// Strided convolutional encoder: [N x 1] waveform -> [N / reduction x d_model].
// Input conv (k7), then per stride: residual units, ELU, strided conv with
// kernel 2*stride; channels double per block up to d_model; final ELU and
// k7 conv to d_model.
template <typename Scalar>
class AcousticEncoder {
 public:
  struct Block {
    std::vector<nn::ResidualUnit<Scalar>> residuals;
    nn::Conv1d<Scalar> down;
  };

  AcousticEncoder() = default;
  AcousticEncoder(const ModelConfig& cfg, std::mt19937_64& rng);
  // Throws ValidationError unless the length is a positive multiple of the
  // reduction factor.
  ad::Tensor<Scalar> operator()(const ad::Tensor<Scalar>& waveform) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;
  Index reduction() const { return reduction_; }

  nn::Conv1d<Scalar> input;
  std::vector<Block> blocks;
  nn::Conv1d<Scalar> output;

 private:
  Index reduction_ = 1;
};

// d_model -> d_code -> d_model linear pair around the codebook lookup.
template <typename Scalar>
class FactorizedProjection {
 public:
  FactorizedProjection() = default;
  FactorizedProjection(Index d_model, Index d_code, std::mt19937_64& rng);
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  nn::Linear<Scalar> down;
  nn::Linear<Scalar> up;
};

template <typename Scalar>
struct AcousticQuantized {
  std::vector<int> tokens;
  ad::Tensor<Scalar> latent;    // down(A), [T x d_code]
  ad::Tensor<Scalar> code;      // codebook rows, gradient reaches the entries
  ad::Tensor<Scalar> embedded;  // A_q = up(straight_through(latent, code))
};

template <typename Scalar>
AcousticQuantized<Scalar> quantize_acoustic(const ad::Tensor<Scalar>& encoded, const FactorizedProjection<Scalar>& proj,
                                            const Codebook<Scalar>& codebook);

// Token path used by the decoder side of the codec: up(entries[tokens]).
template <typename Scalar>
ad::Tensor<Scalar> embed_acoustic_tokens(std::span<const int> tokens, const FactorizedProjection<Scalar>& proj,
                                         const Codebook<Scalar>& codebook);

}  // namespace sac

#endif  // SAC_ACOUSTIC_HPP_
