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

#ifndef SAC_MODEL_HPP_
#define SAC_MODEL_HPP_

#include <random>
#include <span>
#include <vector>

#include "sac/acoustic.hpp"
#include "sac/config.hpp"
#include "sac/decoder.hpp"
#include "sac/quantization.hpp"
#include "sac/semantic.hpp"

namespace sac {

template <typename Scalar>
struct ForwardResult {
  Quantized<Scalar> semantic;            // 12.5 Hz tokens and codebook rows
  ad::Tensor<Scalar> semantic_adapted;   // S_q' at the acoustic rate
  ad::Tensor<Scalar> encoded;            // A
  AcousticQuantized<Scalar> acoustic;    // tokens, code-space latent, A_q
  ad::Tensor<Scalar> fused;              // F at 50 Hz
  ad::Tensor<Scalar> reconstruction;     // [N x 1]
  ad::Tensor<Scalar> semantic_prediction;
  ad::Tensor<Scalar> speaker_prediction;  // [1 x d_spk]
};

// The generator: both streams, fusion, waveform decoder and the two
// auxiliary heads. The semantic codebook is frozen and the semantic
// features come from a SemanticProvider outside the model.
template <typename Scalar>
class SacModel {
 public:
  SacModel() = default;
  SacModel(const ModelConfig& cfg, Codebook<Scalar> semantic_codebook);

  // waveform [N x 1] with N a multiple of 1280; semantic_features is S_c
  // for the same audio, [N/320 x d_sem].
  ForwardResult<Scalar> forward(const ad::Tensor<Scalar>& waveform, const Matrix<Scalar>& semantic_features,
                                ReconstructionPattern pattern = ReconstructionPattern::kFull,
                                bool with_heads = true) const;

  // Decoder side of the codec. semantic_tokens at 12.5 Hz, acoustic_tokens
  // at the acoustic rate; an empty acoustic sequence is only allowed under
  // semantic-only and vice versa.
  ad::Tensor<Scalar> decode_tokens(std::span<const int> semantic_tokens, std::span<const int> acoustic_tokens,
                                   ReconstructionPattern pattern) const;

  // Everything the optimizer updates, in a fixed order with stable names.
  nn::ParamSet<Scalar> parameters() const;

  const ModelConfig& config() const { return config_; }

  AcousticEncoder<Scalar> encoder;
  FactorizedProjection<Scalar> projection;
  Codebook<Scalar> acoustic_codebook;
  Codebook<Scalar> semantic_codebook;
  SemanticAdapter<Scalar> adapter;
  FusionPrenet<Scalar> prenet;
  WaveformDecoder<Scalar> decoder;
  SemanticHead<Scalar> semantic_head;
  SpeakerProjector<Scalar> speaker_projector;

 private:
  ad::Tensor<Scalar> fuse_and_decode(const ad::Tensor<Scalar>& acoustic, const ad::Tensor<Scalar>& semantic,
                                     ReconstructionPattern pattern, ForwardResult<Scalar>* heads) const;

  ModelConfig config_;
};

}  // namespace sac

#endif  // SAC_MODEL_HPP_
