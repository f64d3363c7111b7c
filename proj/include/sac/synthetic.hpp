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

#ifndef SAC_SYNTHETIC_HPP_
#define SAC_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sac/signal.hpp"

namespace sac {

struct SyntheticUtterance {
  std::string id;
  Waveform wave;
  int voice = 0;  // which pitch register generated it
};

// Mixtures of 2-4 slowly amplitude-modulated sinusoids plus low-level white
// noise. Each utterance draws a pitch register from `voices`, which makes
// the voice index a learnable label for probing. Deterministic in seed.
std::vector<SyntheticUtterance> synthesize_corpus(int count, double duration_s, std::uint64_t seed, int voices = 4);

// Writes <dir>/<id>.wav for every utterance plus <dir>/manifest.txt and
// <dir>/labels.txt ("<id> <voice>"). Returns the manifest path.
std::filesystem::path write_corpus(const std::vector<SyntheticUtterance>& corpus, const std::filesystem::path& dir);

}  // namespace sac

#endif  // SAC_SYNTHETIC_HPP_
