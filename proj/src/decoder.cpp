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

#include "sac/decoder.hpp"

#include <algorithm>

namespace sac {

ReconstructionPattern parse_pattern(std::string_view text) {
  if (text == "full") return ReconstructionPattern::kFull;
  if (text == "semantic-only" || text == "semantic_only") return ReconstructionPattern::kSemanticOnly;
  if (text == "acoustic-only" || text == "acoustic_only") return ReconstructionPattern::kAcousticOnly;
  throw ValidationError("unknown reconstruction pattern '" + std::string(text) +
                        "' (expected full, semantic-only or acoustic-only)");
}

std::string_view pattern_name(ReconstructionPattern p) {
  switch (p) {
    case ReconstructionPattern::kFull:
      return "full";
    case ReconstructionPattern::kSemanticOnly:
      return "semantic-only";
    case ReconstructionPattern::kAcousticOnly:
      return "acoustic-only";
  }
  return "full";
}

template <typename Scalar>
ad::Tensor<Scalar> mask_stream(const ad::Tensor<Scalar>& x, Stream which, ReconstructionPattern pattern) {
  const bool drop = (which == Stream::kAcoustic && pattern == ReconstructionPattern::kSemanticOnly) ||
                    (which == Stream::kSemantic && pattern == ReconstructionPattern::kAcousticOnly);
  if (!drop) return x;
  return ad::Tensor<Scalar>::zeros(x.rows(), x.cols());
}

template <typename Scalar>
FusionPrenet<Scalar>::FusionPrenet(const ModelConfig& cfg, std::mt19937_64& rng) : upsample(cfg.prenet_factor()) {
  for (int i = 0; i < cfg.prenet_blocks; ++i) blocks.emplace_back(cfg.d_fuse(), cfg.prenet_kernel, rng);
}

template <typename Scalar>
ad::Tensor<Scalar> FusionPrenet<Scalar>::operator()(const ad::Tensor<Scalar>& acoustic,
                                                     const ad::Tensor<Scalar>& semantic) const {
  if (acoustic.rows() != semantic.rows()) {
    throw ValidationError("stream frame mismatch: acoustic has " + std::to_string(acoustic.rows()) +
                          " frames, semantic has " + std::to_string(semantic.rows()));
  }
  auto h = ad::concat_cols(acoustic, semantic);
  if (upsample > 1) h = ad::repeat_rows(h, upsample);
  for (const auto& b : blocks) h = b(h);
  return h;
}

template <typename Scalar>
void FusionPrenet<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(ps, prefix + ".block" + std::to_string(i));
}

template <typename Scalar>
WaveformDecoder<Scalar>::WaveformDecoder(const ModelConfig& cfg, std::mt19937_64& rng) {
  Index channels = std::min(cfg.base_channels * 16, cfg.d_model);
  input = nn::Conv1d<Scalar>(cfg.d_fuse(), channels, 7, rng);
  for (int stride : kDecoderStrides) {
    Block block;
    const Index next = std::max<Index>(1, channels / 2);
    block.up = nn::ConvTranspose1d<Scalar>(channels, next, stride, rng);
    Index dilation = 1;
    for (int r = 0; r < cfg.residual_units; ++r) {
      block.residuals.emplace_back(next, cfg.residual_kernel, dilation, rng);
      dilation *= 3;
    }
    blocks.push_back(std::move(block));
    channels = next;
  }
  output = nn::Conv1d<Scalar>(channels, 1, 7, rng);
}

template <typename Scalar>
ad::Tensor<Scalar> WaveformDecoder<Scalar>::operator()(const ad::Tensor<Scalar>& fused) const {
  auto h = input(fused);
  for (const auto& block : blocks) {
    h = block.up(ad::elu(h));
    for (const auto& unit : block.residuals) h = unit(h);
  }
  return ad::tanh(output(ad::elu(h)));
}

template <typename Scalar>
void WaveformDecoder<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  input.collect(ps, prefix + ".input");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string p = prefix + ".block" + std::to_string(b);
    blocks[b].up.collect(ps, p + ".up");
    for (std::size_t r = 0; r < blocks[b].residuals.size(); ++r) {
      blocks[b].residuals[r].collect(ps, p + ".res" + std::to_string(r));
    }
  }
  output.collect(ps, prefix + ".output");
}

template <typename Scalar>
SemanticHead<Scalar>::SemanticHead(const ModelConfig& cfg, std::mt19937_64& rng) {
  const Index width = cfg.d_fuse();
  layers.emplace_back(width, width, cfg.semantic_head_kernel, rng);
  layers.emplace_back(width, width, cfg.semantic_head_kernel, rng);
  layers.emplace_back(width, cfg.d_sem, cfg.semantic_head_kernel, rng);
}

template <typename Scalar>
ad::Tensor<Scalar> SemanticHead<Scalar>::operator()(const ad::Tensor<Scalar>& fused) const {
  auto h = fused;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = ad::gelu(h);
  }
  return h;
}

template <typename Scalar>
void SemanticHead<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(ps, prefix + ".conv" + std::to_string(i));
}

template <typename Scalar>
ad::Tensor<Scalar> speaker_features(const ad::Tensor<Scalar>& fused) {
  if (fused.rows() < 2) {
    throw ValidationError("speaker pooling needs at least 2 frames, got " + std::to_string(fused.rows()));
  }
  return ad::concat_cols(ad::mean_rows(fused), ad::std_rows(fused));
}

template <typename Scalar>
SpeakerProjector<Scalar>::SpeakerProjector(const ModelConfig& cfg, std::mt19937_64& rng)
    : hidden(2 * cfg.d_fuse(), cfg.speaker_hidden, rng), out(cfg.speaker_hidden, cfg.d_spk, rng) {}

template <typename Scalar>
ad::Tensor<Scalar> SpeakerProjector<Scalar>::operator()(const ad::Tensor<Scalar>& fused) const {
  return out(ad::gelu(hidden(speaker_features(fused))));
}

template <typename Scalar>
void SpeakerProjector<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  hidden.collect(ps, prefix + ".hidden");
  out.collect(ps, prefix + ".out");
}

namespace {

constexpr int kSpeakerMelBins = 40;
constexpr Index kSpeakerFrameWidth = 64;

SpectrogramScale speaker_scale() {
  SpectrogramScale s;
  s.fft_size = 512;
  s.hop = 160;
  s.mel_bins = kSpeakerMelBins;
  s.log_domain = true;
  return s;
}

}  // namespace

SpeakerEncoder::SpeakerEncoder(Index d_spk, std::uint64_t seed) : d_spk_(d_spk) {
  if (d_spk < 1) throw ValidationError("speaker embedding width must be positive");
  std::mt19937_64 rng(seed);
  frame_ = nn::Linear<float>(kSpeakerMelBins, kSpeakerFrameWidth, rng, /*trainable=*/false);
  out_ = nn::Linear<float>(2 * kSpeakerFrameWidth, d_spk, rng, /*trainable=*/false);
}

Matrix<float> SpeakerEncoder::embed(const Waveform& w) const {
  w.validate();
  const auto scale = speaker_scale();
  Waveform padded = w;
  if (padded.size() < scale.fft_size) {
    padded.samples.conservativeResize(scale.fft_size);
    padded.samples.tail(scale.fft_size - w.size()).setZero();
  }
  // Log-mel values sit around [-11, 3]; centre them before the affine layer.
  Matrix<float> logmel = compute_spectrogram(padded, scale).array() / 4.0f + 1.0f;
  ad::Tensor<float> frames(std::move(logmel));
  auto h = ad::tanh(frame_(frames));
  return out_(ad::concat_cols(ad::mean_rows(h), ad::std_rows(h))).value();
}

nn::ParamSet<float> SpeakerEncoder::parameters() const {
  nn::ParamSet<float> ps;
  frame_.collect(ps, "speaker_encoder.frame");
  out_.collect(ps, "speaker_encoder.out");
  return ps;
}

#define SAC_INSTANTIATE_DECODER(S)                                                                  \
  template ad::Tensor<S> mask_stream<S>(const ad::Tensor<S>&, Stream, ReconstructionPattern);       \
  template class FusionPrenet<S>;                                                                   \
  template class WaveformDecoder<S>;                                                                \
  template class SemanticHead<S>;                                                                   \
  template ad::Tensor<S> speaker_features<S>(const ad::Tensor<S>&);                                 \
  template class SpeakerProjector<S>;

SAC_INSTANTIATE_DECODER(float)
SAC_INSTANTIATE_DECODER(double)

#undef SAC_INSTANTIATE_DECODER

}  // namespace sac
