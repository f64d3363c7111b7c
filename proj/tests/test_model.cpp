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

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "sac/model.hpp"
#include "test_util.hpp"

using namespace sac;
using namespace sac::testing;

namespace {

ModelConfig tiny_config(bool high_rate) {
  ModelConfig c;
  c.acoustic_strides = high_rate ? std::vector<int>{2, 4, 5, 8} : std::vector<int>{2, 2, 4, 5, 8};
  c.base_channels = 4;
  c.d_model = 16;
  c.d_code = 4;
  c.codebook_size_acoustic = 32;
  c.codebook_size_semantic = 32;
  c.d_sem = 8;
  c.semantic_channels = 8;
  c.speaker_hidden = 16;
  c.d_spk = 8;
  c.adapter_blocks = 1;
  c.prenet_blocks = 1;
  return c;
}

template <typename Scalar>
Codebook<Scalar> semantic_codebook(const ModelConfig& c, std::uint64_t seed) {
  return Codebook<Scalar>(random_matrix(c.semantic_entries(), c.d_sem, seed).cast<Scalar>(), false);
}

}  // namespace

TEST_CASE("acoustic encoder frame counts") {
  for (bool high : {false, true}) {
    const ModelConfig c = tiny_config(high);
    std::mt19937_64 rng(1);
    AcousticEncoder<float> enc(c, rng);
    const Index r = c.reduction();
    CHECK(enc(ad::Tensor<float>(Matrix<float>::Zero(38400, 1))).rows() == (high ? 120 : 60));
    CHECK(enc(ad::Tensor<float>(Matrix<float>::Zero(16000, 1))).rows() == (high ? 50 : 25));
    std::mt19937_64 lengths(7);
    for (int i = 0; i < 10; ++i) {
      const Index frames = 1 + static_cast<Index>(lengths() % 40);
      const auto out = enc(ad::Tensor<float>(Matrix<float>(random_matrix(frames * r, 1, i).cast<float>())));
      CHECK(out.rows() == frames);
      CHECK(out.cols() == c.d_model);
    }
    CHECK_THROWS_AS(enc(ad::Tensor<float>(Matrix<float>::Zero(r + 1, 1))), ValidationError);
  }
}

TEST_CASE("acoustic quantisation") {
  const ModelConfig c = tiny_config(false);
  std::mt19937_64 rng(2);
  FactorizedProjection<double> proj(c.d_model, c.d_code, rng);
  const TensorD a(random_matrix(60, c.d_model, 3));
  const MatD latent = proj.down(a).value();

  SUBCASE("entries seeded with the latents give an exact round trip") {
    Codebook<double> cb(MatD(latent.topRows(32)), true);
    const auto q = quantize_acoustic(TensorD(MatD(a.value().topRows(32))), proj, cb);
    std::vector<int> expect(32);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(q.tokens == expect);
    CHECK(q.embedded.value() == proj.up(TensorD(MatD(latent.topRows(32)))).value());
  }
  SUBCASE("tokens match a brute-force scan in code space") {
    Codebook<double> cb(random_matrix(64, c.d_code, 4), true);
    const auto q = quantize_acoustic(a, proj, cb);
    for (Index t = 0; t < 60; ++t) {
      float best = std::numeric_limits<float>::infinity();
      int arg = 0;
      for (Index k = 0; k < 64; ++k) {
        const float d = (latent.row(t).cast<float>() - cb.entries().value().row(k).cast<float>()).squaredNorm();
        if (d < best) {
          best = d;
          arg = static_cast<int>(k);
        }
      }
      CHECK(q.tokens[static_cast<std::size_t>(t)] == arg);
    }
    CHECK(embed_acoustic_tokens(std::span<const int>(q.tokens), proj, cb).value() == q.embedded.value());
    const std::vector<int> bad{64};
    CHECK_THROWS_AS(embed_acoustic_tokens(std::span<const int>(bad), proj, cb), ValidationError);
  }
  std::mt19937_64 r2(1);
  CHECK_THROWS_AS(FactorizedProjection<double>(8, 8, r2), ValidationError);
}

TEST_CASE("fusion prenet rates") {
  ModelConfig low = tiny_config(false), high = tiny_config(true);
  std::mt19937_64 rng(5);
  FusionPrenet<double> p_low(low, rng), p_high(high, rng);
  CHECK(p_low(TensorD(random_matrix(60, 16, 1)), TensorD(random_matrix(60, 8, 2))).rows() == 120);
  CHECK(p_high(TensorD(random_matrix(120, 16, 1)), TensorD(random_matrix(120, 8, 2))).rows() == 120);
  try {
    p_low(TensorD(random_matrix(60, 16, 1)), TensorD(random_matrix(120, 8, 2)));
    FAIL("expected a mismatch error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("60") != std::string::npos);
    CHECK(msg.find("120") != std::string::npos);
  }
}

TEST_CASE("waveform decoder lengths and zero path") {
  const ModelConfig c = tiny_config(false);
  std::mt19937_64 rng(6);
  WaveformDecoder<float> dec(c, rng);
  CHECK(dec(ad::Tensor<float>(Matrix<float>::Zero(120, c.d_fuse()))).rows() == 38400);
  CHECK(dec(ad::Tensor<float>(Matrix<float>::Zero(50, c.d_fuse()))).rows() == 16000);
  dec.output.weight.mutable_value().setZero();
  dec.output.bias.mutable_value().setZero();
  CHECK(dec(ad::Tensor<float>(Matrix<float>::Zero(10, c.d_fuse()))).value().isZero(0));
}

TEST_CASE("semantic head shape and regression loss") {
  const ModelConfig c = tiny_config(false);
  std::mt19937_64 rng(7);
  SemanticHead<double> head(c, rng);
  for (Index t : {1, 17, 120}) CHECK(head(TensorD(random_matrix(t, c.d_fuse(), 8))).cols() == c.d_sem);
  const MatD s = random_matrix(20, c.d_sem, 9);
  CHECK(ad::mse_loss(TensorD(s), TensorD(s)).item() == 0.0);
  CHECK(ad::mse_loss(TensorD(MatD(s.array() + 1.0)), TensorD(s)).item() == doctest::Approx(1.0));
}

TEST_CASE("speaker pooling") {
  const MatD f = random_matrix(10, 4, 10);
  const MatD pooled = speaker_features(TensorD(f)).value();
  REQUIRE(pooled.cols() == 8);
  for (Index j = 0; j < 4; ++j) {
    double mean = 0;
    for (Index t = 0; t < 10; ++t) mean += f(t, j);
    mean /= 10;
    double var = 0;
    for (Index t = 0; t < 10; ++t) var += (f(t, j) - mean) * (f(t, j) - mean);
    CHECK(pooled(0, j) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(pooled(0, 4 + j) == doctest::Approx(std::sqrt(var / 10)).epsilon(1e-12));
  }
  MatD shuffled = f;
  std::vector<Index> order{3, 9, 0, 5, 1, 8, 2, 7, 6, 4};
  for (Index t = 0; t < 10; ++t) shuffled.row(t) = f.row(order[static_cast<std::size_t>(t)]);
  CHECK(speaker_features(TensorD(shuffled)).value() == pooled);
  const MatD constant = MatD::Constant(6, 3, 0.25);
  CHECK(speaker_features(TensorD(constant)).value().rightCols(3).isZero(0));
  CHECK_THROWS_AS(speaker_features(TensorD(random_matrix(1, 4, 11))), ValidationError);
}

TEST_CASE("speaker encoder surrogate is frozen and deterministic") {
  SpeakerEncoder enc(8, 3);
  const Waveform w = sine_wave(180, 0.5);
  const Matrix<float> e = enc.embed(w);
  CHECK(e.rows() == 1);
  CHECK(e.cols() == 8);
  CHECK(e.allFinite());
  CHECK(SpeakerEncoder(8, 3).embed(w) == e);
  CHECK(enc.embed(noise_wave(100, 1)).allFinite());
  const auto params = enc.parameters();
  for (const auto& [name, t] : params.items()) CHECK_FALSE(t.requires_grad());
}

TEST_CASE("pattern names and masking") {
  CHECK(parse_pattern("full") == ReconstructionPattern::kFull);
  CHECK(parse_pattern("semantic-only") == ReconstructionPattern::kSemanticOnly);
  CHECK(parse_pattern("acoustic_only") == ReconstructionPattern::kAcousticOnly);
  CHECK_THROWS_AS(parse_pattern("both"), ValidationError);
  CHECK(pattern_name(ReconstructionPattern::kSemanticOnly) == "semantic-only");
  const TensorD x(random_matrix(4, 3, 12));
  CHECK(mask_stream(x, Stream::kAcoustic, ReconstructionPattern::kFull).value() == x.value());
  CHECK(mask_stream(x, Stream::kAcoustic, ReconstructionPattern::kSemanticOnly).value().isZero(0));
  CHECK(mask_stream(x, Stream::kSemantic, ReconstructionPattern::kSemanticOnly).value() == x.value());
  CHECK(mask_stream(x, Stream::kSemantic, ReconstructionPattern::kAcousticOnly).value().isZero(0));
}

TEST_CASE("model forward and token decoding agree") {
  for (bool high : {false, true}) {
    const ModelConfig c = tiny_config(high);
    SacModel<float> m(c, semantic_codebook<float>(c, 13));
    const Waveform w = noise_wave(2 * 1280, 14);
    const Matrix<float> sc = random_matrix(8, c.d_sem, 15).cast<float>();
    const auto r = m.forward(ad::Tensor<float>(Matrix<float>(w.samples)), sc);
    CHECK(r.semantic.indices.size() == 2);
    CHECK(r.acoustic.tokens.size() == static_cast<std::size_t>(high ? 8 : 4));
    CHECK(r.fused.rows() == 8);
    CHECK(r.reconstruction.rows() == 2560);
    CHECK(r.semantic_prediction.rows() == 8);
    CHECK(r.speaker_prediction.cols() == c.d_spk);
    const auto decoded = m.decode_tokens(r.semantic.indices, r.acoustic.tokens, ReconstructionPattern::kFull);
    CHECK(decoded.value() == r.reconstruction.value());
    CHECK_THROWS_AS(m.forward(ad::Tensor<float>(Matrix<float>::Zero(1000, 1)), sc), ValidationError);
    CHECK_THROWS_AS(m.forward(ad::Tensor<float>(Matrix<float>(w.samples)), Matrix<float>::Zero(7, c.d_sem)),
                    ValidationError);
  }
}

TEST_CASE("masked decoding ignores the dropped stream") {
  const ModelConfig c = tiny_config(false);
  SacModel<float> m(c, semantic_codebook<float>(c, 16));
  const std::vector<int> sem_a{1, 5, 9}, sem_b{30, 2, 2};
  const std::vector<int> ac_a{0, 1, 2, 3, 4, 5}, ac_b{31, 30, 7, 7, 7, 1};
  using P = ReconstructionPattern;
  CHECK(m.decode_tokens(sem_a, ac_a, P::kSemanticOnly).value() ==
        m.decode_tokens(sem_a, ac_b, P::kSemanticOnly).value());
  CHECK(m.decode_tokens(sem_a, ac_a, P::kSemanticOnly).value() ==
        m.decode_tokens(sem_a, {}, P::kSemanticOnly).value());
  CHECK(m.decode_tokens(sem_a, ac_a, P::kAcousticOnly).value() ==
        m.decode_tokens(sem_b, ac_a, P::kAcousticOnly).value());
  CHECK(m.decode_tokens(sem_a, ac_a, P::kAcousticOnly).value() ==
        m.decode_tokens({}, ac_a, P::kAcousticOnly).value());
  CHECK(m.decode_tokens(sem_a, ac_a, P::kFull).value() != m.decode_tokens(sem_a, ac_b, P::kFull).value());
  CHECK_THROWS_AS(m.decode_tokens(sem_a, {}, P::kFull), ValidationError);
  CHECK_THROWS_AS(m.decode_tokens({}, ac_a, P::kSemanticOnly), ValidationError);
  CHECK_THROWS_AS(m.decode_tokens(sem_a, std::vector<int>{1, 2}, P::kFull), ValidationError);
}

TEST_CASE("semantic path is frozen") {
  const ModelConfig c = tiny_config(false);
  SacModel<double> m(c, semantic_codebook<double>(c, 17));
  const auto params = m.parameters();
  for (const auto& [name, t] : params.items()) CHECK(name.find("semantic_codebook") == std::string::npos);
  CHECK_FALSE(m.semantic_codebook.entries().requires_grad());
  const Waveform w = noise_wave(1280, 18);
  const auto r = m.forward(TensorD(MatD(w.samples.cast<double>())), random_matrix(4, c.d_sem, 19));
  ad::sum(ad::square(r.reconstruction)).backward();
  CHECK_FALSE(m.semantic_codebook.entries().has_grad());
  CHECK_THROWS_AS(SacModel<double>(c, Codebook<double>(random_matrix(32, c.d_sem, 1), true)), ValidationError);
}
