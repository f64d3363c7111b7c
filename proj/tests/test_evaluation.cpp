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
#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "sac/evaluation.hpp"
#include "sac/synthetic.hpp"
#include "test_util.hpp"

using namespace sac;
using namespace sac::testing;

namespace {

struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
  std::array<std::uint8_t, 3> at(int x, int y) const {
    const auto* p = rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    return {p[0], p[1], p[2]};
  }
};

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

// Minimal reader for 8-bit RGB, filter-0 images; verifies every chunk CRC.
Image read_png(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() > 8);
  REQUIRE(bytes[1] == 'P');
  Image img;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = be32(&bytes[pos]);
    const std::string type(bytes.begin() + static_cast<long>(pos) + 4, bytes.begin() + static_cast<long>(pos) + 8);
    const std::uint8_t* data = &bytes[pos + 8];
    CHECK(crc32(crc32(0, &bytes[pos + 4], 4), data, len) == be32(data + len));
    if (type == "IHDR") {
      img.width = static_cast<int>(be32(data));
      img.height = static_cast<int>(be32(data + 4));
      CHECK(data[8] == 8);
      CHECK(data[9] == 2);
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    }
    pos += 12 + len;
  }
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3 + 1;
  std::vector<std::uint8_t> raw(stride * static_cast<std::size_t>(img.height));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  REQUIRE(uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) == Z_OK);
  REQUIRE(raw_len == raw.size());
  for (int y = 0; y < img.height; ++y) {
    REQUIRE(raw[y * stride] == 0);
    img.rgb.insert(img.rgb.end(), raw.begin() + static_cast<long>(y * stride + 1),
                   raw.begin() + static_cast<long>((y + 1) * stride));
  }
  return img;
}

Waveform speech_like(double seconds, std::uint64_t seed) {
  return synthesize_corpus(1, seconds, seed).front().wave;
}

Waveform add_noise(const Waveform& ref, double snr_db, std::uint64_t seed) {
  const double signal = ref.samples.cast<double>().squaredNorm() / static_cast<double>(ref.size());
  Waveform noise = noise_wave(ref.size(), seed, 1.0);
  const double noise_power = noise.samples.cast<double>().squaredNorm() / static_cast<double>(ref.size());
  const double gain = std::sqrt(signal / noise_power * std::pow(10.0, -snr_db / 10.0));
  Waveform out = ref;
  out.samples += (gain * noise.samples.cast<double>()).cast<float>();
  return out;
}

}  // namespace

TEST_CASE("polyphase resampling keeps a tone") {
  const Waveform w = sine_wave(1000, 0.5, 0.5);
  const Eigen::VectorXd y = resample_poly(w.samples.cast<double>(), 10000, 16000);
  CHECK(y.size() == 5000);
  double worst = 0;
  for (Index i = 200; i < 4800; ++i) worst = std::max(worst, std::abs(y(i) - 0.5 * std::sin(2 * M_PI * 1000 * i / 1e4)));
  CHECK(worst < 1e-3);
}

TEST_CASE("intelligibility score") {
  const Waveform ref = speech_like(2.0, 1);
  CHECK(stoi(ref, ref) == doctest::Approx(1.0).epsilon(1e-6));
  Waveform half = ref;
  half.samples *= 0.5f;
  CHECK(stoi(ref, half) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(stoi(ref, noise_wave(ref.size(), 9, 0.1)) < 0.2);

  double previous = 1.0;
  for (double snr : {30.0, 20.0, 10.0, 5.0, 0.0}) {
    const double score = stoi(ref, add_noise(ref, snr, 4));
    CHECK(score <= previous + 1e-9);
    previous = score;
  }
  CHECK(previous < 0.95);
  CHECK_THROWS_AS(stoi(ref, speech_like(1.0, 1)), ValidationError);
  CHECK_THROWS_AS(stoi(speech_like(0.2, 2), speech_like(0.2, 2)), ValidationError);
}

TEST_CASE("log spectral distance") {
  const Waveform ref = noise_wave(16000, 3);
  CHECK(log_spectral_distance(ref, ref) == 0.0);
  Waveform half = ref;
  half.samples *= 0.5f;
  CHECK(log_spectral_distance(ref, half) == doctest::Approx(20 * std::log10(2.0)).epsilon(1e-3));
  CHECK(log_spectral_distance(ref, noise_wave(16000, 4)) > 0.0);
  CHECK_THROWS_AS(log_spectral_distance(ref, noise_wave(100, 4)), ValidationError);
}

TEST_CASE("embedding similarity") {
  Eigen::VectorXf a(3), b(3);
  a << 1, 2, 3;
  b << -1, -2, -3;
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(-1.0));
  CHECK(mean_pairwise_similarity({a, a, a}) == doctest::Approx(1.0));
  CHECK(mean_pairwise_similarity({a, a, b}) == doctest::Approx(-1.0 / 3.0));
  CHECK_THROWS_AS(mean_pairwise_similarity({a}), ValidationError);
}

TEST_CASE("linear probe") {
  CHECK(average_pool((Matrix<float>(2, 2) << 1, 2, 3, 6).finished()) == Eigen::RowVector2d(2, 4));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  ProbeTask separable;
  separable.num_classes = 2;
  separable.features.resize(40, 3);
  for (Index i = 0; i < 40; ++i) {
    const int label = static_cast<int>(i % 2);
    separable.labels.push_back(label);
    separable.features.row(i) << (label ? 3.0 : -3.0) + 0.3 * n(rng), n(rng), n(rng);
  }
  const ProbeResult r = probe_linear(separable, 1);
  CHECK(r.accuracy == 1.0);
  CHECK(r.train_items + r.test_items == 40);
  CHECK(r.test_items == 8);
  const ProbeResult again = probe_linear(separable, 1);
  CHECK(again.accuracy == r.accuracy);
  CHECK(again.iterations == r.iterations);

  ProbeTask null_task;
  null_task.num_classes = 4;
  null_task.features.resize(200, 8);
  for (Index i = 0; i < null_task.features.size(); ++i) null_task.features.data()[i] = n(rng);
  for (int i = 0; i < 200; ++i) null_task.labels.push_back(i % 4);
  std::shuffle(null_task.labels.begin(), null_task.labels.end(), rng);
  CHECK(std::abs(probe_linear(null_task, 2).accuracy - 0.25) <= 0.15);

  ProbeTask thin = separable;
  thin.num_classes = 3;
  thin.labels[0] = 2;
  CHECK_THROWS_AS(probe_linear(thin, 1), ValidationError);
  ProbeTask one_class = separable;
  one_class.num_classes = 1;
  CHECK_THROWS_AS(probe_linear(one_class, 1), ValidationError);
}

TEST_CASE("mel figure layout") {
  const auto dir = std::filesystem::temp_directory_path();
  const Waveform speech = speech_like(1.0, 6);
  Waveform silence = speech;
  silence.samples.setZero();
  const auto path = dir / "sac_mel_figure.png";
  emit_mel_figure({{"original", speech}, {"full", speech}, {"semantic-only", silence}, {"acoustic-only", speech}},
                  path);
  const Image img = read_png(path);
  const int title = 12, panel = 160, gap = 6, left = 48;
  REQUIRE(img.height == 4 * (title + panel + gap) + 22);
  const int panel_w = img.width - left - 8;
  CHECK(panel_w > 0);
  auto top = [&](int row) { return row * (title + panel + gap) + title; };
  bool same = true;
  for (int y = 0; y < panel; ++y) {
    for (int x = 0; x < panel_w; ++x) same &= img.at(left + x, top(0) + y) == img.at(left + x, top(1) + y);
  }
  CHECK(same);
  const auto floor = img.at(left, top(2));
  bool uniform = true;
  for (int y = 0; y < panel; ++y) {
    for (int x = 0; x < panel_w; ++x) uniform &= img.at(left + x, top(2) + y) == floor;
  }
  CHECK(uniform);
  CHECK(img.at(left + panel_w / 2, top(0) + panel - 5) != floor);

  CHECK_THROWS_AS(emit_mel_figure({}, path), ValidationError);
  CHECK_THROWS_AS(write_png(path, 2, 2, std::vector<std::uint8_t>(5)), ValidationError);
}

TEST_CASE("evaluation reports") {
  EvalReport a, b;
  a.utterance_id = "a";
  a.stoi = 0.8;
  a.log_spectral_distance_db = 2.0;
  a.speaker_cosine = 0.5;
  b.utterance_id = "b";
  b.stoi = 0.6;
  b.log_spectral_distance_db = 4.0;
  b.speaker_cosine = 0.7;
  const EvalReport agg = aggregate({a, b});
  CHECK(agg.stoi == doctest::Approx(0.7));
  CHECK(agg.log_spectral_distance_db == doctest::Approx(3.0));
  CHECK(*agg.speaker_cosine == doctest::Approx(0.6));
  CHECK_FALSE(agg.wer.has_value());

  std::vector<EvalReport> reports{a, b};
  merge_external(reports, nlohmann::json::parse(R"({"a": {"wer": 0.1, "pesq": 3.2}, "zzz": {"wer": 1}})"));
  CHECK(*reports[0].wer == 0.1);
  CHECK(*reports[0].pesq == 3.2);
  CHECK_FALSE(reports[1].wer.has_value());
  const auto j = reports[0].to_json();
  CHECK(j["wer"].get<double>() == 0.1);
  CHECK(j["utmos"].is_null());
  CHECK(j["stoi"].get<double>() == 0.8);
  CHECK_THROWS_AS(merge_external(reports, nlohmann::json::parse(R"({"a": {"mos": 1}})")), ValidationError);
  CHECK_THROWS_AS(merge_external(reports, nlohmann::json::parse(R"([1])")), ValidationError);

  EvalReport bad = a;
  bad.stoi = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = a;
  bad.log_spectral_distance_db = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_NOTHROW(a.validate());
  CHECK_THROWS_AS(aggregate({}), ValidationError);
}
