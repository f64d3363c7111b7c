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

#ifndef SAC_CONFIG_HPP_
#define SAC_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sac {

struct ModelConfig {
  std::vector<int> acoustic_strides{2, 2, 4, 5, 8};
  int base_channels = 32;
  int d_model = 256;
  int d_code = 8;
  int codebook_size_acoustic = 16384;
  int codebook_size_semantic = 16384;
  // The surrogate semantic codebook is fitted with k-means, which caps its
  // effective size. Headers still carry codebook_size_semantic.
  int semantic_codebook_cap = 512;
  int d_sem = 256;
  int semantic_channels = 64;
  int adapter_blocks = 2;
  int adapter_kernel = 7;
  int prenet_blocks = 2;
  int prenet_kernel = 7;
  int residual_units = 1;
  int residual_kernel = 3;
  int semantic_head_kernel = 3;
  int speaker_hidden = 256;
  int d_spk = 192;
  std::uint64_t model_seed = 0;
  std::uint64_t semantic_seed = 1234;
  std::uint64_t speaker_seed = 4321;

  int reduction() const;              // product of acoustic strides
  double acoustic_rate_hz() const;    // 16000 / reduction
  int acoustic_centi_hz() const;      // exact integer rate * 100
  int adapter_factor() const;         // acoustic rate / 12.5
  int prenet_factor() const;          // 50 / acoustic rate
  int d_fuse() const { return d_model + d_sem; }
  int semantic_entries() const;       // min(codebook_size_semantic, cap)
  void validate() const;
};

struct DiscriminatorConfig {
  std::vector<int> periods{2, 3, 5, 7, 11};
  std::vector<int> stft_ffts{512, 1024, 2048};
  double width_scale = 0.25;
  void validate() const;
};

struct ReconConfig {
  std::vector<int> ffts{512, 1024, 2048};
  int mel_bins = 80;
  bool mel_on_log = true;
  void validate() const;
};

struct LossWeights {
  double recon = 15.0;
  double vq = 1.0;
  double adv = 1.0;
  double feat = 2.0;
  double sem = 1000.0;
  double spk = 10.0;
  // Inside the VQ term.
  double commit = 0.25;
  double codebook = 4.0;
  void validate() const;
};

struct TrainConfig {
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double beta1 = 0.8;
  double beta2 = 0.9;
  double weight_decay = 0.01;
  double lr_decay = 0.999996;  // per step
  int warmup_steps = 1500;     // generator-only steps before the discriminators join
  double ema_decay = 0.999;
  int batch_size = 4;
  double crop_s = 2.4;
  long total_steps = 850000;
  std::uint64_t seed = 0;
  int dead_code_threshold = 200;
  double grad_clip = 1000.0;
  long checkpoint_every = 1000;
  void validate() const;
};

// Every tunable knob, loaded from flat "key = value" text. Unknown keys and
// malformed values are reported together.
struct RunConfig {
  ModelConfig model;
  DiscriminatorConfig disc;
  ReconConfig recon;
  LossWeights weights;
  TrainConfig train;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  // Canonical text: every key, fixed order, round-trips through parse().
  std::string serialize() const;
  std::uint64_t hash() const;  // FNV-1a over serialize()
  // Applies a single key; throws ValidationError on unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  static std::vector<std::string> keys();
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace sac

#endif  // SAC_CONFIG_HPP_
