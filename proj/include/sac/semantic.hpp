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

#ifndef SAC_SEMANTIC_HPP_
#define SAC_SEMANTIC_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sac/config.hpp"
#include "sac/nn.hpp"
#include "sac/quantization.hpp"
#include "sac/signal.hpp"

namespace sac {

// Source of the 50 Hz continuous semantic features S_c. Implementations are
// frozen: extract is deterministic and nothing in them is trained.
class SemanticProvider {
 public:
  virtual ~SemanticProvider() = default;
  // [round(duration_s * 50) x d_sem]. utterance_id is used by providers that
  // look features up instead of computing them.
  virtual Matrix<float> extract(const Waveform& w, std::string_view utterance_id = {}) const = 0;
  virtual Index dim() const = 0;
  bool frozen() const { return true; }
};

// Fixed-seed random strided conv encoder (strides 4,4,4,5: 16 kHz -> 50 Hz)
// standing in for a pretrained tokenizer's continuous front end.
class SurrogateSemanticProvider final : public SemanticProvider {
 public:
  SurrogateSemanticProvider(Index d_sem, Index channels, std::uint64_t seed);
  Matrix<float> extract(const Waveform& w, std::string_view utterance_id = {}) const override;
  Index dim() const override { return d_sem_; }
  // Read-only view of the frozen weights, for audits.
  nn::ParamSet<float> parameters() const;

 private:
  Index d_sem_;
  std::vector<nn::Conv1d<float>> layers_;
};

// One pre-extracted utterance.
struct FeatureRecord {
  std::string utterance_id;
  Matrix<float> features;    // [T50 x d_sem]
  std::vector<int> tokens;   // 12.5 Hz semantic tokens, may be empty
};

// Binary layout (little-endian): "SACF", u32 version=1, u32 id_len, id bytes,
// u32 T50, u32 d_sem, T50*d_sem float32 row-major, u32 n_tokens, n_tokens i32.
void write_feature_record(const std::filesystem::path& path, const FeatureRecord& rec);
FeatureRecord read_feature_record(const std::filesystem::path& path);

// Serves S_c from records listed in a manifest of "utterance_id path" lines.
class PrecomputedSemanticProvider final : public SemanticProvider {
 public:
  static PrecomputedSemanticProvider from_manifest(const std::filesystem::path& manifest);
  void add(FeatureRecord rec);
  Matrix<float> extract(const Waveform& w, std::string_view utterance_id = {}) const override;
  Index dim() const override { return dim_; }
  const FeatureRecord& record(std::string_view utterance_id) const;

 private:
  std::map<std::string, FeatureRecord, std::less<>> records_;
  Index dim_ = 0;
};

// Mean over consecutive groups of 4 frames (50 Hz -> 12.5 Hz). A trailing
// remainder is dropped with a warning on stderr.
template <typename Scalar>
Matrix<Scalar> pool_to_semantic_rate(const Matrix<Scalar>& features);

// Nearest-entry lookup against the frozen semantic codebook.
template <typename Scalar>
Quantized<Scalar> tokenize_semantic(const Matrix<Scalar>& pooled, const Codebook<Scalar>& frozen_codebook);

// Lloyd's k-means with k-means++ seeding. When data has fewer rows than k,
// the surplus centroids are jittered copies of data rows.
Matrix<float> kmeans(const Matrix<float>& data, Index k, std::uint64_t seed, int iterations = 25);

// Fits the frozen semantic codebook on pooled provider features of a corpus.
Codebook<float> build_semantic_codebook(const SemanticProvider& provider, const std::vector<Waveform>& corpus,
                                        Index entries, std::uint64_t seed);

// Nearest-neighbour repeat to the acoustic rate followed by ConvNeXt blocks.
template <typename Scalar>
class SemanticAdapter {
 public:
  SemanticAdapter() = default;
  SemanticAdapter(Index channels, int blocks, Index kernel, std::mt19937_64& rng);
  // target_rate_hz / 12.5 must be 2 or 4.
  ad::Tensor<Scalar> operator()(const ad::Tensor<Scalar>& quantized, double target_rate_hz) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  std::vector<nn::ConvNeXtBlock<Scalar>> blocks;
};

// Integer repeat factor for 12.5 Hz -> target_rate_hz; throws unless 2 or 4.
int semantic_upsample_factor(double target_rate_hz);

}  // namespace sac

#endif  // SAC_SEMANTIC_HPP_
