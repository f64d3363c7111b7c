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

#include "sac/model.hpp"

namespace sac {

template <typename Scalar>
SacModel<Scalar>::SacModel(const ModelConfig& cfg, Codebook<Scalar> sem_codebook) : config_(cfg) {
  cfg.validate();
  if (sem_codebook.dim() != cfg.d_sem) {
    throw ValidationError("semantic codebook width " + std::to_string(sem_codebook.dim()) + " does not match d_sem " +
                          std::to_string(cfg.d_sem));
  }
  if (sem_codebook.entries().requires_grad()) throw ValidationError("semantic codebook must be frozen");
  semantic_codebook = std::move(sem_codebook);
  std::mt19937_64 rng(cfg.model_seed);
  encoder = AcousticEncoder<Scalar>(cfg, rng);
  projection = FactorizedProjection<Scalar>(cfg.d_model, cfg.d_code, rng);
  acoustic_codebook = Codebook<Scalar>(cfg.codebook_size_acoustic, cfg.d_code, rng, /*trainable=*/true);
  adapter = SemanticAdapter<Scalar>(cfg.d_sem, cfg.adapter_blocks, cfg.adapter_kernel, rng);
  prenet = FusionPrenet<Scalar>(cfg, rng);
  decoder = WaveformDecoder<Scalar>(cfg, rng);
  semantic_head = SemanticHead<Scalar>(cfg, rng);
  speaker_projector = SpeakerProjector<Scalar>(cfg, rng);
}

template <typename Scalar>
ad::Tensor<Scalar> SacModel<Scalar>::fuse_and_decode(const ad::Tensor<Scalar>& acoustic,
                                                      const ad::Tensor<Scalar>& semantic,
                                                      ReconstructionPattern pattern,
                                                      ForwardResult<Scalar>* heads) const {
  auto fused = prenet(mask_stream(acoustic, Stream::kAcoustic, pattern),
                      mask_stream(semantic, Stream::kSemantic, pattern));
  auto wave = decoder(fused);
  if (heads) {
    heads->fused = fused;
    heads->semantic_prediction = semantic_head(fused);
    heads->speaker_prediction = speaker_projector(fused);
  }
  return wave;
}

template <typename Scalar>
ForwardResult<Scalar> SacModel<Scalar>::forward(const ad::Tensor<Scalar>& waveform,
                                                const Matrix<Scalar>& semantic_features,
                                                ReconstructionPattern pattern, bool with_heads) const {
  if (waveform.rows() % kSemanticTokenHopSamples != 0 || waveform.rows() == 0) {
    throw ValidationError("waveform length " + std::to_string(waveform.rows()) + " is not a positive multiple of " +
                          std::to_string(kSemanticTokenHopSamples) + " samples");
  }
  const Index t50 = waveform.rows() / kSemanticHopSamples;
  if (semantic_features.rows() != t50 || semantic_features.cols() != config_.d_sem) {
    throw ValidationError("semantic features are " + std::to_string(semantic_features.rows()) + "x" +
                          std::to_string(semantic_features.cols()) + ", expected " + std::to_string(t50) + "x" +
                          std::to_string(config_.d_sem));
  }
  ForwardResult<Scalar> r;
  r.semantic = tokenize_semantic(pool_to_semantic_rate(semantic_features), semantic_codebook);
  r.semantic_adapted = adapter(ad::Tensor<Scalar>(r.semantic.values), config_.acoustic_rate_hz());
  r.encoded = encoder(waveform);
  r.acoustic = quantize_acoustic(r.encoded, projection, acoustic_codebook);
  r.reconstruction = fuse_and_decode(r.acoustic.embedded, r.semantic_adapted, pattern, with_heads ? &r : nullptr);
  if (!with_heads) r.fused = ad::Tensor<Scalar>();
  return r;
}

template <typename Scalar>
ad::Tensor<Scalar> SacModel<Scalar>::decode_tokens(std::span<const int> semantic_tokens,
                                                   std::span<const int> acoustic_tokens,
                                                   ReconstructionPattern pattern) const {
  const Index factor = config_.adapter_factor();
  Index frames = 0;
  if (!semantic_tokens.empty()) frames = static_cast<Index>(semantic_tokens.size()) * factor;
  if (!acoustic_tokens.empty()) {
    const auto ac = static_cast<Index>(acoustic_tokens.size());
    if (frames != 0 && ac != frames) {
      throw ValidationError("token streams disagree: " + std::to_string(semantic_tokens.size()) +
                            " semantic tokens imply " + std::to_string(frames) + " acoustic frames, got " +
                            std::to_string(ac));
    }
    frames = ac;
  }
  if (frames == 0) throw ValidationError("no tokens to decode");

  ad::Tensor<Scalar> semantic;
  if (semantic_tokens.empty()) {
    if (pattern != ReconstructionPattern::kAcousticOnly) {
      throw ValidationError("semantic tokens are required unless decoding acoustic-only");
    }
    semantic = ad::Tensor<Scalar>::zeros(frames, config_.d_sem);
  } else {
    for (int t : semantic_tokens) {
      if (t < 0 || t >= semantic_codebook.size()) {
        throw ValidationError("semantic token " + std::to_string(t) + " outside codebook of size " +
                              std::to_string(semantic_codebook.size()));
      }
    }
    semantic = adapter(ad::gather_rows(semantic_codebook.entries(), semantic_tokens), config_.acoustic_rate_hz());
  }

  ad::Tensor<Scalar> acoustic;
  if (acoustic_tokens.empty()) {
    if (pattern != ReconstructionPattern::kSemanticOnly) {
      throw ValidationError("acoustic tokens are required unless decoding semantic-only");
    }
    acoustic = ad::Tensor<Scalar>::zeros(frames, config_.d_model);
  } else {
    acoustic = embed_acoustic_tokens(acoustic_tokens, projection, acoustic_codebook);
  }
  return fuse_and_decode(acoustic, semantic, pattern, nullptr);
}

template <typename Scalar>
nn::ParamSet<Scalar> SacModel<Scalar>::parameters() const {
  nn::ParamSet<Scalar> ps;
  encoder.collect(ps, "encoder");
  projection.collect(ps, "projection");
  ps.add("acoustic_codebook", acoustic_codebook.entries());
  adapter.collect(ps, "adapter");
  prenet.collect(ps, "prenet");
  decoder.collect(ps, "decoder");
  semantic_head.collect(ps, "semantic_head");
  speaker_projector.collect(ps, "speaker_projector");
  return ps;
}

template class SacModel<float>;
template class SacModel<double>;

}  // namespace sac
