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

#include "sac/codec.hpp"

#include <vector>

namespace sac {

Waveform pad_to_token_grid(const Waveform& w) {
  const Index blocks = std::max<Index>(1, (w.size() + kSemanticTokenHopSamples - 1) / kSemanticTokenHopSamples);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = Eigen::VectorXf::Zero(blocks * kSemanticTokenHopSamples);
  out.samples.head(w.size()) = w.samples;
  return out;
}

Matrix<float> semantic_features_for(const SemanticProvider& provider, const Waveform& w, Index frames,
                                    std::string_view utterance_id) {
  // Inputs shorter than one feature hop are analysed on the padded grid.
  Matrix<float> feats = provider.extract(w.size() < kSemanticHopSamples ? pad_to_token_grid(w) : w, utterance_id);
  Matrix<float> out = Matrix<float>::Zero(frames, feats.cols());
  const Index take = std::min(frames, feats.rows());
  out.topRows(take) = feats.topRows(take);
  return out;
}

Codec::Codec(SacModel<float> model, std::shared_ptr<const SemanticProvider> provider)
    : model_(std::move(model)), provider_(std::move(provider)) {
  if (!provider_) throw ValidationError("codec needs a semantic provider");
  if (provider_->dim() != model_.config().d_sem) {
    throw ValidationError("semantic provider width " + std::to_string(provider_->dim()) + " does not match d_sem " +
                          std::to_string(model_.config().d_sem));
  }
}

SacHeader Codec::header_for(std::uint32_t semantic_frames, std::uint32_t original_length) const {
  const auto& cfg = model_.config();
  SacHeader h;
  h.sample_rate = kSampleRate;
  h.acoustic_rate_centi_hz = static_cast<std::uint32_t>(cfg.acoustic_centi_hz());
  h.semantic_codebook_size = static_cast<std::uint32_t>(cfg.codebook_size_semantic);
  h.acoustic_codebook_size = static_cast<std::uint32_t>(cfg.codebook_size_acoustic);
  h.semantic_frames = semantic_frames;
  h.acoustic_frames = semantic_frames * static_cast<std::uint32_t>(cfg.adapter_factor());
  h.original_length = original_length;
  return h;
}

SacStream Codec::encode(const Waveform& w, std::string_view utterance_id) const {
  w.validate();
  if (w.sample_rate != kSampleRate) {
    throw ValidationError("expected 16000 Hz audio, got " + std::to_string(w.sample_rate) + " Hz");
  }
  const Waveform padded = pad_to_token_grid(w);
  const Index t50 = padded.size() / kSemanticHopSamples;
  const auto feats = semantic_features_for(*provider_, w, t50, utterance_id);
  const auto semantic = tokenize_semantic(pool_to_semantic_rate(feats), model_.semantic_codebook);
  const auto encoded = model_.encoder(ad::Tensor<float>(Matrix<float>(padded.samples)));
  const auto acoustic = quantize(model_.projection.down(encoded).value(), model_.acoustic_codebook);

  SacStream s;
  s.header = header_for(static_cast<std::uint32_t>(semantic.indices.size()), static_cast<std::uint32_t>(w.size()));
  s.semantic_tokens = semantic.indices;
  s.acoustic_tokens = acoustic.indices;
  s.validate();
  return s;
}

Waveform Codec::decode(const SacStream& stream, ReconstructionPattern pattern) const {
  stream.validate();
  const auto expected = header_for(stream.header.semantic_frames, stream.header.original_length);
  const auto& h = stream.header;
  std::vector<std::string> problems;
  auto check = [&](const char* field, std::uint32_t got, std::uint32_t want) {
    if (got != want) {
      problems.push_back(std::string(field) + "=" + std::to_string(got) + " (model expects " + std::to_string(want) + ")");
    }
  };
  check("sample_rate", h.sample_rate, expected.sample_rate);
  check("semantic_rate_centi_hz", h.semantic_rate_centi_hz, expected.semantic_rate_centi_hz);
  check("acoustic_rate_centi_hz", h.acoustic_rate_centi_hz, expected.acoustic_rate_centi_hz);
  check("semantic_codebook_size", h.semantic_codebook_size, expected.semantic_codebook_size);
  check("acoustic_codebook_size", h.acoustic_codebook_size, expected.acoustic_codebook_size);
  check("acoustic_frames", h.acoustic_frames, expected.acoustic_frames);
  if (h.semantic_frames == 0) problems.push_back("semantic_frames=0");
  const std::uint64_t capacity = static_cast<std::uint64_t>(h.semantic_frames) * kSemanticTokenHopSamples;
  if (h.original_length > capacity || h.original_length + kSemanticTokenHopSamples <= capacity) {
    problems.push_back("original_length=" + std::to_string(h.original_length) + " (inconsistent with " +
                       std::to_string(h.semantic_frames) + " semantic frames)");
  }
  if (!problems.empty()) {
    std::string msg = "stream does not match model:";
    for (const auto& p : problems) msg += " " + p + ";";
    msg.pop_back();
    throw ValidationError(msg);
  }
  const auto wave = model_.decode_tokens(stream.semantic_tokens, stream.acoustic_tokens, pattern);
  Waveform out;
  out.sample_rate = kSampleRate;
  out.samples = wave.value().col(0).head(h.original_length);
  return out;
}

}  // namespace sac
