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

#ifndef SAC_EVALUATION_HPP_
#define SAC_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sac/quantization.hpp"
#include "sac/signal.hpp"

namespace sac {

// Polyphase rational resampling with a Kaiser-windowed sinc low-pass
// (beta 5, half-length 10 * max(up, down) taps per phase).
Eigen::VectorXd resample_poly(const Eigen::VectorXd& x, int up, int down);

// Short-Time Objective Intelligibility. Both signals are resampled to
// 10 kHz, frames more than 40 dB below the loudest reference frame are
// dropped, 15 one-third-octave bands from 150 Hz are correlated over
// 30-frame (384 ms) segments with -15 dB clipping. Throws ValidationError
// for unequal lengths or fewer than 30 frames after silence removal.
double stoi(const Waveform& reference, const Waveform& degraded);

// Mean over frames of the RMS (over bins) difference of 10*log10 power
// spectra, in dB (fft 512, hop 128, power floor 1e-10).
double log_spectral_distance(const Waveform& reference, const Waveform& degraded);

double cosine_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b);
// Mean cosine over all unordered pairs; needs at least two embeddings.
double mean_pairwise_similarity(const std::vector<Eigen::VectorXf>& embeddings);

// ---- probing ---------------------------------------------------------------

struct ProbeTask {
  Matrix<double> features;  // one pooled row per item
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;
  void validate() const;
};

struct ProbeResult {
  double accuracy = 0.0;        // held-out
  double train_accuracy = 0.0;
  Index train_items = 0;
  Index test_items = 0;
  int iterations = 0;
};

struct ProbeOptions {
  double l2 = 1e-4;
  int max_iterations = 1000;
  double tolerance = 1e-6;  // on the gradient norm
};

// Mean over time of a [frames x dim] sequence.
Eigen::RowVectorXd average_pool(const Matrix<float>& frames);

// Per-class shuffled 80/20 split, features standardised on the training
// part, then multinomial logistic regression (L2) fitted by gradient
// descent with backtracking. Deterministic in split_seed.
ProbeResult probe_linear(const ProbeTask& task, std::uint64_t split_seed, const ProbeOptions& options = {});

// ---- figures ---------------------------------------------------------------

// Writes an 8-bit RGB PNG.
void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);

// One labelled panel per waveform (80-band log-mel, fft 1024, hop 256),
// stacked top to bottom on a shared colour scale whose floor is
// log(1e-5), with time (s) and frequency (Hz) ticks.
void emit_mel_figure(const std::vector<std::pair<std::string, Waveform>>& rows, const std::filesystem::path& path);

// ---- reports ---------------------------------------------------------------

struct EvalReport {
  std::string utterance_id;
  double stoi = 0.0;
  double log_spectral_distance_db = 0.0;
  std::optional<double> speaker_cosine;
  std::optional<CodebookStats> semantic_codes;
  std::optional<CodebookStats> acoustic_codes;
  // Metrics that need external systems; filled only by merge_external.
  std::optional<double> wer, utmos, sim, pesq;

  void validate() const;
  nlohmann::json to_json() const;
};

// Mean of every field present in all reports.
EvalReport aggregate(const std::vector<EvalReport>& reports);

// external: {"<utterance_id>": {"wer": .., "utmos": .., "sim": .., "pesq": ..}}
void merge_external(std::vector<EvalReport>& reports, const nlohmann::json& external);

}  // namespace sac

#endif  // SAC_EVALUATION_HPP_
