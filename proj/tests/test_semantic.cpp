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

#include <filesystem>
#include <fstream>
#include <limits>

#include "sac/semantic.hpp"
#include "test_util.hpp"

using namespace sac;
using namespace sac::testing;

namespace {

std::vector<int> nearest_rows(const Matrix<float>& q, const Matrix<float>& table) {
  std::vector<int> out;
  for (Index i = 0; i < q.rows(); ++i) {
    float best = std::numeric_limits<float>::infinity();
    int arg = 0;
    for (Index k = 0; k < table.rows(); ++k) {
      const float d = (q.row(i) - table.row(k)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(k);
      }
    }
    out.push_back(arg);
  }
  return out;
}

}  // namespace

TEST_CASE("surrogate provider emits 50 Hz frozen features") {
  SurrogateSemanticProvider p(16, 8, 3);
  const Waveform w = noise_wave(38400, 1);
  const Matrix<float> f = p.extract(w);
  CHECK(f.rows() == 120);
  CHECK(f.cols() == 16);
  CHECK(f.allFinite());
  CHECK(f.cwiseAbs().maxCoeff() <= 1.0f);
  CHECK(f.cwiseAbs().maxCoeff() > 0.05f);
  CHECK(p.extract(w) == f);
  CHECK(p.frozen());
  const auto params = p.parameters();
  for (const auto& [name, t] : params.items()) CHECK_FALSE(t.requires_grad());
  CHECK(p.extract(noise_wave(16000, 2)).rows() == 50);
  CHECK(p.extract(noise_wave(16170, 2)).rows() == 51);
  SurrogateSemanticProvider same(16, 8, 3);
  CHECK(same.extract(w) == f);
}

TEST_CASE("feature records round-trip and feed the precomputed provider") {
  const auto dir = std::filesystem::temp_directory_path() / "sac_test_features";
  std::filesystem::create_directories(dir);
  FeatureRecord rec{"utt_a", random_matrix(50, 6, 4).cast<float>(), {3, 1, 4, 1}};
  write_feature_record(dir / "a.feat", rec);
  const FeatureRecord back = read_feature_record(dir / "a.feat");
  CHECK(back.utterance_id == rec.utterance_id);
  CHECK(back.features == rec.features);
  CHECK(back.tokens == rec.tokens);
  {
    std::ofstream m(dir / "features.txt");
    m << "# id path\nutt_a a.feat\n";
  }
  const auto provider = PrecomputedSemanticProvider::from_manifest(dir / "features.txt");
  CHECK(provider.dim() == 6);
  CHECK(provider.extract(noise_wave(16000, 1), "utt_a") == rec.features);
  CHECK_THROWS_AS(provider.extract(noise_wave(32000, 1), "utt_a"), ValidationError);
  CHECK_THROWS_AS(provider.extract(noise_wave(16000, 1), "utt_b"), ValidationError);
  PrecomputedSemanticProvider p2;
  p2.add(rec);
  CHECK_THROWS_AS(p2.add(FeatureRecord{"x", Matrix<float>::Zero(3, 5), {}}), ValidationError);
  std::ofstream(dir / "junk.feat") << "nope";
  CHECK_THROWS_AS(read_feature_record(dir / "junk.feat"), RuntimeError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("pooling to 12.5 Hz") {
  Matrix<double> c = Matrix<double>::Constant(12, 3, 0.7);
  CHECK(pool_to_semantic_rate(c).isApprox(Matrix<double>::Constant(3, 3, 0.7)));
  Matrix<double> ramp(8, 1);
  ramp << 1, 2, 3, 4, 5, 6, 7, 8;
  const Matrix<double> p = pool_to_semantic_rate(ramp);
  REQUIRE(p.rows() == 2);
  CHECK(p(0, 0) == 2.5);
  CHECK(p(1, 0) == 6.5);
  const MatD r = random_matrix(40, 4, 5);
  const Matrix<double> pr = pool_to_semantic_rate(r);
  REQUIRE(pr.rows() == 10);
  for (Index t = 0; t < 10; ++t) {
    for (Index j = 0; j < 4; ++j) {
      double acc = 0;
      for (Index k = 0; k < 4; ++k) acc += r(4 * t + k, j);
      CHECK(pr(t, j) == doctest::Approx(acc / 4).epsilon(1e-15));
    }
  }
  CHECK(pool_to_semantic_rate(random_matrix(10, 2, 6)).rows() == 2);
  CHECK_THROWS_AS(pool_to_semantic_rate(random_matrix(3, 2, 6)), ValidationError);
}

TEST_CASE("semantic tokenisation against the frozen codebook") {
  const Matrix<float> table = random_matrix(16, 4, 7).cast<float>();
  Codebook<float> frozen(table, false);
  const Matrix<float> row7 = table.row(7);
  CHECK(tokenize_semantic(row7, frozen).indices[0] == 7);
  const Matrix<float> q = random_matrix(30, 4, 8).cast<float>();
  CHECK(tokenize_semantic(q, frozen).indices == nearest_rows(q, table));
  Codebook<float> trainable(table, true);
  CHECK_THROWS_AS(tokenize_semantic(q, trainable), ValidationError);
}

TEST_CASE("k-means recovers separated clusters") {
  Matrix<float> data(60, 2);
  const float centres[3][2] = {{-5, 0}, {5, 0}, {0, 8}};
  const MatD noise = random_matrix(60, 2, 9, 0.1);
  for (Index i = 0; i < 60; ++i) {
    data(i, 0) = centres[i % 3][0] + static_cast<float>(noise(i, 0));
    data(i, 1) = centres[i % 3][1] + static_cast<float>(noise(i, 1));
  }
  const Matrix<float> c = kmeans(data, 3, 1);
  for (const auto& centre : centres) {
    double best = 1e9;
    for (Index k = 0; k < 3; ++k) best = std::min<double>(best, std::hypot(c(k, 0) - centre[0], c(k, 1) - centre[1]));
    CHECK(best < 0.2);
  }
  const Matrix<float> many = kmeans(data.topRows(4), 10, 2);
  CHECK(many.rows() == 10);
  CHECK(many.allFinite());
  CHECK(kmeans(data, 3, 1) == c);
}

TEST_CASE("semantic codebook from a corpus is frozen and sized") {
  SurrogateSemanticProvider p(8, 8, 3);
  std::vector<Waveform> corpus{noise_wave(16000, 1), sine_wave(220, 1.0), sine_wave(440, 0.5)};
  const Codebook<float> cb = build_semantic_codebook(p, corpus, 12, 5);
  CHECK(cb.size() == 12);
  CHECK(cb.dim() == 8);
  CHECK_FALSE(cb.entries().requires_grad());
  CHECK_THROWS_AS(build_semantic_codebook(p, {}, 12, 5), ValidationError);
}

TEST_CASE("adapter upsamples to the acoustic rate") {
  std::mt19937_64 rng(1);
  SemanticAdapter<double> adapter(6, 2, 7, rng);
  const TensorD s(random_matrix(30, 6, 10));
  CHECK(adapter(s, 25.0).rows() == 60);
  CHECK(adapter(s, 50.0).rows() == 120);
  CHECK_THROWS_AS(adapter(s, 37.5), ValidationError);
  CHECK(semantic_upsample_factor(25.0) == 2);
  CHECK(semantic_upsample_factor(50.0) == 4);

  for (auto& b : adapter.blocks) {
    b.project.weight.mutable_value().setZero();
    b.project.bias.mutable_value().setZero();
  }
  const MatD out = adapter(s, 25.0).value();
  for (Index t = 0; t < 60; ++t) CHECK(out.row(t) == s.value().row(t / 2));
}
