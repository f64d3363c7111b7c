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

#ifndef SAC_TESTS_TEST_UTIL_HPP_
#define SAC_TESTS_TEST_UTIL_HPP_

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sac/autodiff.hpp"
#include "sac/config.hpp"
#include "sac/signal.hpp"

namespace sac::testing {

using TensorD = ad::Tensor<double>;
using MatD = Matrix<double>;

inline MatD random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  MatD m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Largest relative error between the autodiff gradient of f and central
// differences, over every entry of every input.
inline double gradient_error(const std::function<TensorD(const std::vector<TensorD>&)>& f,
                             const std::vector<MatD>& inputs, double h = 1e-6) {
  std::vector<TensorD> leaves;
  for (const auto& m : inputs) leaves.emplace_back(m, true);
  f(leaves).backward();
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const MatD analytic = leaves[k].has_grad() ? leaves[k].grad() : MatD::Zero(inputs[k].rows(), inputs[k].cols());
    for (Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<TensorD> probe;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          MatD m = inputs[j];
          if (j == k) m.data()[i] += delta;
          probe.emplace_back(m, false);
        }
        return f(probe).item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double err = std::abs(numeric - analytic.data()[i]) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Projects a tensor to a scalar with fixed random weights so that every
// output entry contributes to the gradient.
inline TensorD project(const TensorD& y, std::uint64_t seed = 99) {
  return ad::sum(ad::mul(y, TensorD(random_matrix(y.rows(), y.cols(), seed))));
}

inline Waveform sine_wave(double freq, double seconds, double amp = 0.5, double phase = 0.0) {
  Waveform w;
  const Index n = static_cast<Index>(std::llround(seconds * kSampleRate));
  w.samples.resize(n);
  for (Index i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2 * M_PI * freq * i / kSampleRate + phase));
  }
  return w;
}

inline Waveform noise_wave(Index n, std::uint64_t seed, double sigma = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, static_cast<float>(sigma));
  Waveform w;
  w.samples.resize(n);
  for (Index i = 0; i < n; ++i) w.samples[i] = d(rng);
  return w;
}

// A run small enough for a few optimizer steps per test.
inline RunConfig tiny_run_config() {
  RunConfig c;
  c.model.acoustic_strides = {2, 2, 4, 5, 8};
  c.model.base_channels = 4;
  c.model.d_model = 16;
  c.model.d_code = 4;
  c.model.codebook_size_acoustic = 16;
  c.model.codebook_size_semantic = 16;
  c.model.d_sem = 8;
  c.model.semantic_channels = 8;
  c.model.speaker_hidden = 8;
  c.model.d_spk = 8;
  c.model.adapter_blocks = 1;
  c.model.prenet_blocks = 1;
  c.disc.width_scale = 0.0625;
  c.train.batch_size = 2;
  c.train.crop_s = 0.16;
  c.train.warmup_steps = 2;
  c.train.total_steps = 4;
  c.train.checkpoint_every = 1000;
  return c;
}

}  // namespace sac::testing

#endif  // SAC_TESTS_TEST_UTIL_HPP_
