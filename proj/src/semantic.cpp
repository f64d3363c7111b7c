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

#include "sac/semantic.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace sac {

namespace {

constexpr int kProviderStrides[] = {4, 4, 4, 5};

}  // namespace

SurrogateSemanticProvider::SurrogateSemanticProvider(Index d_sem, Index channels, std::uint64_t seed)
    : d_sem_(d_sem) {
  if (d_sem < 1 || channels < 1) throw ValidationError("semantic provider widths must be positive");
  std::mt19937_64 rng(seed);
  Index in = 1;
  for (std::size_t i = 0; i < std::size(kProviderStrides); ++i) {
    const Index out = (i + 1 == std::size(kProviderStrides)) ? d_sem : channels;
    const Index stride = kProviderStrides[i];
    nn::Conv1d<float> conv(in, out, 2 * stride, rng, stride, 1, /*trainable=*/false);
    // Variance-preserving scale so the features neither vanish nor saturate.
    conv.weight.mutable_value() =
        nn::uniform_init<float>(conv.weight.rows(), conv.weight.cols(), 2 * stride * in, rng, std::sqrt(6.0));
    layers_.push_back(std::move(conv));
    in = out;
  }
}

Matrix<float> SurrogateSemanticProvider::extract(const Waveform& w, std::string_view) const {
  w.validate();
  const Index frames = static_cast<Index>(std::llround(static_cast<double>(w.size()) / kSemanticHopSamples));
  if (frames < 1) throw ValidationError("waveform too short for one 20 ms semantic frame");
  Matrix<float> signal = Matrix<float>::Zero(frames * kSemanticHopSamples, 1);
  const Index n = std::min<Index>(w.size(), signal.rows());
  signal.topRows(n) = w.samples.head(n);
  ad::Tensor<float> h(std::move(signal));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    h = (i + 1 == layers_.size()) ? ad::tanh(h) : ad::elu(h);
  }
  return h.value();
}

nn::ParamSet<float> SurrogateSemanticProvider::parameters() const {
  nn::ParamSet<float> ps;
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(ps, "semantic_provider." + std::to_string(i));
  return ps;
}

// ---- feature records -------------------------------------------------------

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw RuntimeError("truncated feature record while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature_record(const std::filesystem::path& path, const FeatureRecord& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeError("cannot write feature record " + path.string());
  os.write("SACF", 4);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(rec.utterance_id.size()));
  os.write(rec.utterance_id.data(), static_cast<std::streamsize>(rec.utterance_id.size()));
  put_u32(os, static_cast<std::uint32_t>(rec.features.rows()));
  put_u32(os, static_cast<std::uint32_t>(rec.features.cols()));
  for (Index i = 0; i < rec.features.size(); ++i) {
    std::uint32_t bits;
    const float v = rec.features.data()[i];
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
  }
  put_u32(os, static_cast<std::uint32_t>(rec.tokens.size()));
  for (int t : rec.tokens) put_u32(os, static_cast<std::uint32_t>(t));
  if (!os) throw RuntimeError("failed writing feature record " + path.string());
}

FeatureRecord read_feature_record(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeError("cannot open feature record " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "SACF") {
    throw RuntimeError(path.string() + ": not a feature record");
  }
  const auto version = get_u32(is, "version");
  if (version != 1) throw RuntimeError(path.string() + ": unsupported feature record version " + std::to_string(version));
  FeatureRecord rec;
  rec.utterance_id.resize(get_u32(is, "id length"));
  if (!is.read(rec.utterance_id.data(), static_cast<std::streamsize>(rec.utterance_id.size()))) {
    throw RuntimeError(path.string() + ": truncated utterance id");
  }
  const auto frames = get_u32(is, "frame count");
  const auto dim = get_u32(is, "feature dim");
  rec.features.resize(frames, dim);
  for (Index i = 0; i < rec.features.size(); ++i) {
    const std::uint32_t bits = get_u32(is, "features");
    float v;
    std::memcpy(&v, &bits, 4);
    rec.features.data()[i] = v;
  }
  rec.tokens.resize(get_u32(is, "token count"));
  for (auto& t : rec.tokens) t = static_cast<int>(get_u32(is, "tokens"));
  return rec;
}

PrecomputedSemanticProvider PrecomputedSemanticProvider::from_manifest(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw RuntimeError("cannot open feature manifest " + manifest.string());
  PrecomputedSemanticProvider p;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string id, file;
    if (!(ss >> id >> file) || id.front() == '#') continue;
    std::filesystem::path fp(file);
    if (fp.is_relative()) fp = manifest.parent_path() / fp;
    FeatureRecord rec = read_feature_record(fp);
    if (rec.utterance_id != id) {
      throw RuntimeError("feature manifest lists '" + id + "' but record holds '" + rec.utterance_id + "'");
    }
    p.add(std::move(rec));
  }
  return p;
}

void PrecomputedSemanticProvider::add(FeatureRecord rec) {
  if (dim_ == 0) {
    dim_ = rec.features.cols();
  } else if (rec.features.cols() != dim_) {
    throw ValidationError("feature record '" + rec.utterance_id + "' has width " +
                          std::to_string(rec.features.cols()) + ", expected " + std::to_string(dim_));
  }
  std::string id = rec.utterance_id;
  records_.insert_or_assign(std::move(id), std::move(rec));
}

const FeatureRecord& PrecomputedSemanticProvider::record(std::string_view utterance_id) const {
  auto it = records_.find(utterance_id);
  if (it == records_.end()) throw ValidationError("no precomputed features for '" + std::string(utterance_id) + "'");
  return it->second;
}

Matrix<float> PrecomputedSemanticProvider::extract(const Waveform& w, std::string_view utterance_id) const {
  const auto& rec = record(utterance_id);
  const Index expected = static_cast<Index>(std::llround(static_cast<double>(w.size()) / kSemanticHopSamples));
  if (rec.features.rows() != expected) {
    throw ValidationError("precomputed features for '" + rec.utterance_id + "' have " +
                          std::to_string(rec.features.rows()) + " frames, waveform implies " + std::to_string(expected));
  }
  return rec.features;
}

// ---- pooling, tokens, codebook -------------------------------------------

template <typename Scalar>
Matrix<Scalar> pool_to_semantic_rate(const Matrix<Scalar>& features) {
  if (features.rows() < kSemanticPoolFactor) {
    throw ValidationError("semantic pooling needs at least 4 frames, got " + std::to_string(features.rows()));
  }
  const Index out_rows = features.rows() / kSemanticPoolFactor;
  if (features.rows() % kSemanticPoolFactor != 0) {
    std::cerr << "warning: dropping " << features.rows() % kSemanticPoolFactor
              << " trailing semantic frame(s) not divisible by the pooling factor\n";
  }
  Matrix<Scalar> out(out_rows, features.cols());
  for (Index t = 0; t < out_rows; ++t) {
    out.row(t) = features.middleRows(t * kSemanticPoolFactor, kSemanticPoolFactor).colwise().mean();
  }
  return out;
}

template <typename Scalar>
Quantized<Scalar> tokenize_semantic(const Matrix<Scalar>& pooled, const Codebook<Scalar>& frozen_codebook) {
  if (frozen_codebook.entries().requires_grad()) {
    throw ValidationError("semantic codebook must be frozen");
  }
  return quantize(pooled, frozen_codebook);
}

Matrix<float> kmeans(const Matrix<float>& data, Index k, std::uint64_t seed, int iterations) {
  if (data.rows() < 1) throw ValidationError("kmeans: no data");
  if (k < 1) throw ValidationError("kmeans: k must be positive");
  std::mt19937_64 rng(seed);
  const Index n = data.rows(), d = data.cols();
  const Index seeded = std::min(k, n);
  Matrix<float> centroids(k, d);

  // k-means++ over the available rows.
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = data.row(first(rng));
  for (Index c = 1; c < seeded; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double dist = (data.row(i) - centroids.row(c - 1)).squaredNorm();
      nearest[static_cast<std::size_t>(i)] = std::min(nearest[static_cast<std::size_t>(i)], dist);
      total += nearest[static_cast<std::size_t>(i)];
    }
    Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        target -= nearest[static_cast<std::size_t>(chosen)];
        if (target <= 0.0) break;
      }
    } else {
      chosen = first(rng);
    }
    centroids.row(c) = data.row(chosen);
  }

  std::vector<Index> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      float best_d = std::numeric_limits<float>::infinity();
      for (Index c = 0; c < seeded; ++c) {
        const float dist = (data.row(i) - centroids.row(c)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best || it == 0) changed = true;
      assign[static_cast<std::size_t>(i)] = best;
    }
    Matrix<float> sums = Matrix<float>::Zero(seeded, d);
    std::vector<Index> counts(static_cast<std::size_t>(seeded), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += data.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (Index c = 0; c < seeded; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<float>(counts[static_cast<std::size_t>(c)]);
      }
    }
    if (!changed) break;
  }

  if (seeded < k) {
    const float scale = std::max(1e-3f, static_cast<float>(std::sqrt(
                                            (data.rowwise() - data.colwise().mean()).squaredNorm() /
                                            static_cast<double>(std::max<Index>(1, n * d)))) * 0.05f);
    std::normal_distribution<float> jitter(0.0f, scale);
    std::uniform_int_distribution<Index> row(0, n - 1);
    for (Index c = seeded; c < k; ++c) {
      centroids.row(c) = data.row(row(rng));
      for (Index j = 0; j < d; ++j) centroids(c, j) += jitter(rng);
    }
  }
  return centroids;
}

Codebook<float> build_semantic_codebook(const SemanticProvider& provider, const std::vector<Waveform>& corpus,
                                        Index entries, std::uint64_t seed) {
  if (corpus.empty()) throw ValidationError("semantic codebook needs a non-empty corpus");
  std::vector<Matrix<float>> pooled;
  Index rows = 0;
  for (const auto& w : corpus) {
    Matrix<float> feats = provider.extract(w);
    if (feats.rows() < kSemanticPoolFactor) continue;
    feats.conservativeResize(feats.rows() - feats.rows() % kSemanticPoolFactor, Eigen::NoChange);
    pooled.push_back(pool_to_semantic_rate(feats));
    rows += pooled.back().rows();
  }
  if (rows == 0) throw ValidationError("semantic codebook corpus has no utterance longer than 80 ms");
  Matrix<float> data(rows, provider.dim());
  Index r = 0;
  for (const auto& p : pooled) {
    data.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return Codebook<float>(kmeans(data, entries, seed), /*trainable=*/false);
}

int semantic_upsample_factor(double target_rate_hz) {
  const double ratio = target_rate_hz / 12.5;
  if (std::abs(ratio - 2.0) < 1e-9) return 2;
  if (std::abs(ratio - 4.0) < 1e-9) return 4;
  throw ValidationError("semantic adapter target rate " + std::to_string(target_rate_hz) +
                        " Hz is not 2x or 4x the 12.5 Hz token rate");
}

template <typename Scalar>
SemanticAdapter<Scalar>::SemanticAdapter(Index channels, int num_blocks, Index kernel, std::mt19937_64& rng) {
  for (int i = 0; i < num_blocks; ++i) blocks.emplace_back(channels, kernel, rng);
}

template <typename Scalar>
ad::Tensor<Scalar> SemanticAdapter<Scalar>::operator()(const ad::Tensor<Scalar>& quantized,
                                                        double target_rate_hz) const {
  auto h = ad::repeat_rows(quantized, semantic_upsample_factor(target_rate_hz));
  for (const auto& b : blocks) h = b(h);
  return h;
}

template <typename Scalar>
void SemanticAdapter<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(ps, prefix + ".block" + std::to_string(i));
}

template Matrix<float> pool_to_semantic_rate<float>(const Matrix<float>&);
template Matrix<double> pool_to_semantic_rate<double>(const Matrix<double>&);
template Quantized<float> tokenize_semantic<float>(const Matrix<float>&, const Codebook<float>&);
template Quantized<double> tokenize_semantic<double>(const Matrix<double>&, const Codebook<double>&);
template class SemanticAdapter<float>;
template class SemanticAdapter<double>;

}  // namespace sac
