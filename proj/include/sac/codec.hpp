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

#ifndef SAC_CODEC_HPP_
#define SAC_CODEC_HPP_

#include <memory>
#include <string_view>

#include "sac/bitstream.hpp"
#include "sac/model.hpp"
#include "sac/semantic.hpp"

namespace sac {

// Encode/decode over a trained generator and the frozen semantic provider.
class Codec {
 public:
  Codec(SacModel<float> model, std::shared_ptr<const SemanticProvider> provider);

  // 16 kHz mono only. The input is right-padded with zeros to a multiple of
  // 1280 samples so both streams cover it; the header keeps the original
  // length.
  SacStream encode(const Waveform& w, std::string_view utterance_id = {}) const;
  // Output is trimmed to the original length. Throws ValidationError listing
  // every header field that disagrees with the model.
  Waveform decode(const SacStream& stream, ReconstructionPattern pattern = ReconstructionPattern::kFull) const;
  // Header this model writes for a given token count.
  SacHeader header_for(std::uint32_t semantic_frames, std::uint32_t original_length) const;
  double bitrate() const { return sac::bitrate(model_.config()); }

  const SacModel<float>& model() const { return model_; }
  const SemanticProvider& provider() const { return *provider_; }

 private:
  SacModel<float> model_;
  std::shared_ptr<const SemanticProvider> provider_;
};

// Waveform padded to the next multiple of 1280 samples (at least one block).
Waveform pad_to_token_grid(const Waveform& w);

// S_c for w, extended with zero rows or truncated to `frames` rows.
Matrix<float> semantic_features_for(const SemanticProvider& provider, const Waveform& w, Index frames,
                                    std::string_view utterance_id = {});

}  // namespace sac

#endif  // SAC_CODEC_HPP_
