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

#ifndef SAC_TRAINING_HPP_
#define SAC_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sac/config.hpp"
#include "sac/decoder.hpp"
#include "sac/discriminators.hpp"
#include "sac/model.hpp"
#include "sac/objectives.hpp"
#include "sac/semantic.hpp"

namespace sac {

// Stateless seed derivation (splitmix64 over the parts); every random draw
// in training is keyed by (seed, step, ...) so runs can resume anywhere.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

// lr0 * decay^step.
double learning_rate(double lr0, double decay, long step);

// ema <- decay * ema + (1 - decay) * value.
inline double ema_update(double ema, double value, double decay) { return decay * ema + (1.0 - decay) * value; }

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(nn::ParamSet<Scalar>& params, double max_norm);

// Adam with decoupled weight decay.
template <typename Scalar>
class AdamW {
 public:
  AdamW() = default;
  AdamW(const nn::ParamSet<Scalar>& params, double beta1, double beta2, double weight_decay, double eps = 1e-8);
  void step(nn::ParamSet<Scalar>& params, double lr);

  long steps = 0;
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;

 private:
  double beta1_ = 0.9, beta2_ = 0.999, weight_decay_ = 0.0, eps_ = 1e-8;
};

// Shadow copy of a parameter set.
template <typename Scalar>
class Ema {
 public:
  Ema() = default;
  explicit Ema(const nn::ParamSet<Scalar>& params);
  void update(const nn::ParamSet<Scalar>& params, double decay);
  // Writes the shadow values into params (same order and shapes).
  void copy_to(nn::ParamSet<Scalar>& params) const;

  std::vector<Matrix<Scalar>> shadow;
};

// ---- data ------------------------------------------------------------------

struct Utterance {
  std::string id;
  Waveform wave;
  // Precomputed S_c for the whole utterance; empty when features are
  // extracted from each crop.
  Matrix<float> semantic;
};

struct Batch {
  std::vector<std::string> ids;
  std::vector<Waveform> crops;            // all exactly crop_samples long
  std::vector<Matrix<float>> semantic;    // S_c per crop
  std::vector<bool> padded;
  std::vector<Index> offsets;
};

// Crops are placed on the 20 ms semantic grid so precomputed feature rows
// can be sliced without resampling.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Utterance> items, std::shared_ptr<const SemanticProvider> provider);

  // Pure function of (seed, step): item order is a seeded permutation per
  // epoch, crop offsets come from derive_seed(seed, step, slot). Items are
  // prepared on SAC_NUM_WORKERS threads.
  Batch batch(long step, int batch_size, double crop_s, std::uint64_t seed) const;

  std::size_t size() const { return items_.size(); }
  const std::vector<Utterance>& items() const { return items_; }
  const SemanticProvider& provider() const { return *provider_; }

 private:
  std::vector<Utterance> items_;
  std::shared_ptr<const SemanticProvider> provider_;
};

// Manifest: one "wav_path [feature_record_path]" per line, '#' comments,
// relative paths resolved against the manifest directory. Unreadable
// files are skipped with a warning; an empty result is a ValidationError.
Dataset build_dataset(const std::filesystem::path& manifest, std::shared_ptr<const SemanticProvider> provider,
                      std::ostream* warnings = nullptr);

// k-means semantic codebook over the pooled features of every utterance
// (precomputed features when present, provider output otherwise).
Codebook<float> build_semantic_codebook(const Dataset& data, Index entries, std::uint64_t seed);

// Worker count from SAC_NUM_WORKERS (default 1).
int num_workers();

// ---- training ----------------------------------------------------------------

struct StepReport {
  long step = 0;
  double lr = 0.0;
  bool adversarial = false;
  LossBreakdown losses;
  double discriminator_loss = 0.0;
  double grad_norm = 0.0;
  CodebookStats acoustic_codes;
  Index reinitialized = 0;
};

class Trainer {
 public:
  // The semantic codebook and speaker encoder are frozen inputs.
  Trainer(const RunConfig& cfg, Codebook<float> semantic_codebook);

  // One optimizer step on the batch (crops of equal length). Before
  // warmup_steps only the generator is trained, without adversarial or
  // feature-matching terms; afterwards the discriminators are updated
  // first, then the generator against the updated, frozen discriminators.
  StepReport train_step(const Batch& batch);

  // Generator losses on a batch without touching any state.
  LossBreakdown evaluate(const Batch& batch) const;

  long step() const { return step_; }
  const RunConfig& config() const { return config_; }
  SacModel<float>& model() { return model_; }
  const SacModel<float>& model() const { return model_; }
  const Discriminators<float>& discriminators() const { return disc_; }
  const SpeakerEncoder& speaker_encoder() const { return speaker_; }
  // A deep copy of the generator carrying the EMA weights.
  SacModel<float> ema_model() const;

  void save_checkpoint(const std::filesystem::path& path) const;
  static Trainer load_checkpoint(const std::filesystem::path& path);

 private:
  LossBreakdown generator_terms(const SacModel<float>& model, const Waveform& crop, const Matrix<float>& semantic,
                                const Discriminators<float>* disc, ad::Tensor<float>* total,
                                ForwardResult<float>* forward) const;

  RunConfig config_;
  SacModel<float> model_;
  Discriminators<float> disc_;
  SpeakerEncoder speaker_;
  AdamW<float> opt_g_;
  AdamW<float> opt_d_;
  Ema<float> ema_;
  long step_ = 0;
};

// Fresh deep copy of a generator (parameters and codebook usage).
SacModel<float> clone_model(const SacModel<float>& model);

struct InferenceBundle {
  RunConfig config;
  SacModel<float> model;  // EMA weights
};

// Loads only what encode/decode need from a checkpoint.
InferenceBundle load_inference_model(const std::filesystem::path& checkpoint);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::vector<std::string> ablations;  // recorded in the log header
  std::optional<std::filesystem::path> resume;
  std::function<void(const StepReport&)> on_step;
};

// Runs to config.train.total_steps, writing train_log.jsonl, periodic
// checkpoints (ckpt_<step>.bin) and the final checkpoint final.bin, whose
// EMA weights are the ones inference loads.
void run_training(const RunConfig& cfg, const Dataset& data, Codebook<float> semantic_codebook,
                  const TrainOptions& options);

// One JSON object per line.
std::string step_report_json(const StepReport& r);

}  // namespace sac

#endif  // SAC_TRAINING_HPP_
