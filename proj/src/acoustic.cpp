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

#include "sac/acoustic.hpp"

#include <algorithm>

namespace sac {

template <typename Scalar>
AcousticEncoder<Scalar>::AcousticEncoder(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Index channels = std::min(cfg.base_channels, cfg.d_model);
  input = nn::Conv1d<Scalar>(1, channels, 7, rng);
  reduction_ = 1;
  for (int stride : cfg.acoustic_strides) {
    Block block;
    Index dilation = 1;
    for (int r = 0; r < cfg.residual_units; ++r) {
      block.residuals.emplace_back(channels, cfg.residual_kernel, dilation, rng);
      dilation *= 3;
    }
    const Index next = std::min<Index>(channels * 2, cfg.d_model);
    block.down = nn::Conv1d<Scalar>(channels, next, 2 * stride, rng, stride);
    blocks.push_back(std::move(block));
    channels = next;
    reduction_ *= stride;
  }
  output = nn::Conv1d<Scalar>(channels, cfg.d_model, 7, rng);
}

template <typename Scalar>
ad::Tensor<Scalar> AcousticEncoder<Scalar>::operator()(const ad::Tensor<Scalar>& waveform) const {
  if (waveform.cols() != 1) throw ValidationError("acoustic encoder expects a single-channel waveform");
  if (waveform.rows() == 0) throw ValidationError("acoustic encoder received an empty waveform");
  if (waveform.rows() % reduction_ != 0) {
    throw ValidationError("waveform length " + std::to_string(waveform.rows()) +
                          " is not a multiple of the reduction factor " + std::to_string(reduction_));
  }
  auto h = input(waveform);
  for (const auto& block : blocks) {
    for (const auto& unit : block.residuals) h = unit(h);
    h = block.down(ad::elu(h));
  }
  return output(ad::elu(h));
}

template <typename Scalar>
void AcousticEncoder<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  input.collect(ps, prefix + ".input");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string p = prefix + ".block" + std::to_string(b);
    for (std::size_t r = 0; r < blocks[b].residuals.size(); ++r) {
      blocks[b].residuals[r].collect(ps, p + ".res" + std::to_string(r));
    }
    blocks[b].down.collect(ps, p + ".down");
  }
  output.collect(ps, prefix + ".output");
}

template <typename Scalar>
FactorizedProjection<Scalar>::FactorizedProjection(Index d_model, Index d_code, std::mt19937_64& rng)
    : down(d_model, d_code, rng), up(d_code, d_model, rng) {
  if (d_code >= d_model) throw ValidationError("code dimension must be smaller than the model width");
}

template <typename Scalar>
void FactorizedProjection<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  down.collect(ps, prefix + ".down");
  up.collect(ps, prefix + ".up");
}

template <typename Scalar>
AcousticQuantized<Scalar> quantize_acoustic(const ad::Tensor<Scalar>& encoded, const FactorizedProjection<Scalar>& proj,
                                            const Codebook<Scalar>& codebook) {
  AcousticQuantized<Scalar> out;
  out.latent = proj.down(encoded);
  out.tokens = quantize(out.latent.value(), codebook).indices;
  out.code = ad::gather_rows(codebook.entries(), std::span<const int>(out.tokens));
  out.embedded = proj.up(ad::straight_through(out.latent, out.code));
  return out;
}

template <typename Scalar>
ad::Tensor<Scalar> embed_acoustic_tokens(std::span<const int> tokens, const FactorizedProjection<Scalar>& proj,
                                         const Codebook<Scalar>& codebook) {
  for (int t : tokens) {
    if (t < 0 || t >= codebook.size()) {
      throw ValidationError("acoustic token " + std::to_string(t) + " outside codebook of size " +
                            std::to_string(codebook.size()));
    }
  }
  return proj.up(ad::gather_rows(codebook.entries(), tokens));
}

#define SAC_INSTANTIATE_ACOUSTIC(S)                                                                    \
  template class AcousticEncoder<S>;                                                                   \
  template class FactorizedProjection<S>;                                                              \
  template AcousticQuantized<S> quantize_acoustic<S>(const ad::Tensor<S>&, const FactorizedProjection<S>&, \
                                                     const Codebook<S>&);                              \
  template ad::Tensor<S> embed_acoustic_tokens<S>(std::span<const int>, const FactorizedProjection<S>&,  \
                                                  const Codebook<S>&);

SAC_INSTANTIATE_ACOUSTIC(float)
SAC_INSTANTIATE_ACOUSTIC(double)

#undef SAC_INSTANTIATE_ACOUSTIC

}  // namespace sac
