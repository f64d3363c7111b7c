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

#include "sac/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace sac {

std::vector<SyntheticUtterance> synthesize_corpus(int count, double duration_s, std::uint64_t seed, int voices) {
  if (count < 1 || duration_s <= 0.0 || voices < 1) throw ValidationError("invalid synthetic corpus parameters");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto n = static_cast<Index>(std::llround(duration_s * kSampleRate));
  std::vector<SyntheticUtterance> out;
  for (int u = 0; u < count; ++u) {
    SyntheticUtterance s;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%03d", u);
    s.id = id;
    s.voice = static_cast<int>(rng() % static_cast<std::uint64_t>(voices));
    // Registers spaced by half an octave from 110 Hz.
    const double base = 110.0 * std::pow(2.0, 0.5 * s.voice);
    const int partials = 2 + static_cast<int>(rng() % 3);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int p = 0; p < partials; ++p) {
      const double freq = base * (1 + p + static_cast<int>(rng() % 4)) * (1.0 + 0.02 * (unit(rng) - 0.5));
      const double amp = 0.5 + 0.5 * unit(rng);
      const double phase = 2.0 * M_PI * unit(rng);
      const double mod_rate = 1.0 + 4.0 * unit(rng);
      const double mod_phase = 2.0 * M_PI * unit(rng);
      for (Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        const double envelope = 0.6 + 0.4 * std::sin(2.0 * M_PI * mod_rate * t + mod_phase);
        x(i) += amp * envelope * std::sin(2.0 * M_PI * freq * t + phase);
      }
    }
    for (Index i = 0; i < n; ++i) x(i) += 0.02 * gauss(rng);
    x *= 0.5 / std::max(1e-9, x.cwiseAbs().maxCoeff());
    s.wave.samples = x.cast<float>();
    out.push_back(std::move(s));
  }
  return out;
}

std::filesystem::path write_corpus(const std::vector<SyntheticUtterance>& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "manifest.txt";
  std::ofstream m(manifest), labels(dir / "labels.txt");
  if (!m || !labels) throw RuntimeError("cannot write corpus files in " + dir.string());
  for (const auto& u : corpus) {
    write_wav(dir / (u.id + ".wav"), u.wave);
    m << u.id << ".wav\n";
    labels << u.id << " " << u.voice << "\n";
  }
  return manifest;
}

}  // namespace sac
