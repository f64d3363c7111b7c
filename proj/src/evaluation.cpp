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

#include "sac/evaluation.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <unsupported/Eigen/FFT>

namespace sac {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Hann window without its zero end points, length n.
Eigen::VectorXd inner_hann(Index n) {
  Eigen::VectorXd w(n);
  for (Index i = 0; i < n; ++i) w(i) = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  return w;
}

Eigen::VectorXd to_double(const Waveform& w) { return w.samples.cast<double>(); }

}  // namespace

Eigen::VectorXd resample_poly(const Eigen::VectorXd& x, int up, int down) {
  if (up < 1 || down < 1) throw ValidationError("resample factors must be positive");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return x;
  const int max_rate = std::max(up, down);
  const Index half = 10 * max_rate;
  const Index taps = 2 * half + 1;
  const double cutoff = 1.0 / max_rate;
  const double beta = 5.0;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  Eigen::VectorXd h(taps);
  for (Index n = 0; n < taps; ++n) {
    const double m = static_cast<double>(n - half);
    const double arg = cutoff * m;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
    const double r = 2.0 * static_cast<double>(n) / static_cast<double>(taps - 1) - 1.0;
    const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h(n) = cutoff * sinc * window;
  }
  h *= static_cast<double>(up) / h.sum();

  const Index n_in = x.size();
  const Index n_out = (n_in * up + down - 1) / down;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n_out);
  for (Index m = 0; m < n_out; ++m) {
    // y[m] = sum_n x[n] h[m*down + half - n*up]
    const Index centre = m * down + half;
    const Index n_lo = std::max<Index>(0, (centre - (taps - 1) + up - 1) / up);
    const Index n_hi = std::min<Index>(n_in - 1, centre / up);
    double acc = 0.0;
    for (Index n = n_lo; n <= n_hi; ++n) acc += x(n) * h(centre - n * up);
    y(m) = acc;
  }
  return y;
}

// ---- STOI ----------------------------------------------------------------------

namespace {

constexpr int kStoiRate = 10000;
constexpr Index kStoiFrame = 256;
constexpr Index kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr Index kStoiSegment = 30;
constexpr double kStoiBeta = -15.0;
constexpr double kStoiDynRange = 40.0;

Matrix<double> third_octave_bands() {
  const Index bins = kStoiFft / 2 + 1;
  Matrix<double> obm = Matrix<double>::Zero(kStoiBands, bins);
  auto nearest = [&](double f) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index b = 0; b < bins; ++b) {
      const double fb = static_cast<double>(b) * kStoiRate / static_cast<double>(kStoiFft);
      const double d = (fb - f) * (fb - f);
      if (d < best_d) {
        best_d = d;
        best = b;
      }
    }
    return best;
  };
  for (int k = 0; k < kStoiBands; ++k) {
    const Index lo = nearest(kStoiMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0));
    const Index hi = nearest(kStoiMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0));
    for (Index b = lo; b < hi; ++b) obm(k, b) = 1.0;
  }
  return obm;
}

std::vector<Eigen::VectorXd> frames_of(const Eigen::VectorXd& x, Index len, Index hop, const Eigen::VectorXd& w) {
  std::vector<Eigen::VectorXd> out;
  for (Index i = 0; i + len < x.size(); i += hop) out.push_back(w.cwiseProduct(x.segment(i, len)));
  return out;
}

Eigen::VectorXd overlap_add(const std::vector<Eigen::VectorXd>& frames, Index hop) {
  if (frames.empty()) return Eigen::VectorXd();
  const Index len = frames.front().size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Index>(frames.size() - 1) * hop + len);
  for (std::size_t i = 0; i < frames.size(); ++i) out.segment(static_cast<Index>(i) * hop, len) += frames[i];
  return out;
}

// [bands x frames] one-third-octave band magnitudes.
Matrix<double> band_envelopes(const Eigen::VectorXd& x, const Matrix<double>& obm) {
  const Eigen::VectorXd w = inner_hann(kStoiFrame);
  const auto frames = frames_of(x, kStoiFrame, kStoiFrame / 2, w);
  Eigen::FFT<double> fft;
  Matrix<double> out(kStoiBands, static_cast<Index>(frames.size()));
  std::vector<double> buf(kStoiFft);
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(kStoiFft / 2 + 1);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (Index i = 0; i < kStoiFrame; ++i) buf[static_cast<std::size_t>(i)] = frames[f](i);
    fft.fwd(spec, buf);
    for (Index b = 0; b <= kStoiFft / 2; ++b) power(b) = std::norm(spec[static_cast<std::size_t>(b)]);
    out.col(static_cast<Index>(f)) = (obm * power).cwiseSqrt();
  }
  return out;
}

}  // namespace

double stoi(const Waveform& reference, const Waveform& degraded) {
  reference.validate();
  degraded.validate();
  if (reference.size() != degraded.size()) {
    throw ValidationError("stoi needs equal lengths, got " + std::to_string(reference.size()) + " and " +
                          std::to_string(degraded.size()));
  }
  if (reference.sample_rate != degraded.sample_rate) throw ValidationError("stoi needs equal sample rates");
  Eigen::VectorXd x = to_double(reference), y = to_double(degraded);
  if (reference.sample_rate != kStoiRate) {
    x = resample_poly(x, kStoiRate, reference.sample_rate);
    y = resample_poly(y, kStoiRate, reference.sample_rate);
  }

  // Silent-frame removal driven by the reference.
  const Eigen::VectorXd w = inner_hann(kStoiFrame);
  const auto xf = frames_of(x, kStoiFrame, kStoiFrame / 2, w);
  const auto yf = frames_of(y, kStoiFrame, kStoiFrame / 2, w);
  std::vector<double> energy(xf.size());
  double max_energy = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xf.size(); ++i) {
    energy[i] = 20.0 * std::log10(xf[i].norm() + kEps);
    max_energy = std::max(max_energy, energy[i]);
  }
  std::vector<Eigen::VectorXd> xk, yk;
  for (std::size_t i = 0; i < xf.size(); ++i) {
    if (max_energy - kStoiDynRange - energy[i] < 0) {
      xk.push_back(xf[i]);
      yk.push_back(yf[i]);
    }
  }
  const Eigen::VectorXd xs = overlap_add(xk, kStoiFrame / 2);
  const Eigen::VectorXd ys = overlap_add(yk, kStoiFrame / 2);

  static const Matrix<double> obm = third_octave_bands();
  const Matrix<double> xb = band_envelopes(xs, obm);
  const Matrix<double> yb = band_envelopes(ys, obm);
  if (xb.cols() < kStoiSegment) {
    throw ValidationError("stoi needs at least 30 non-silent frames (384 ms), got " + std::to_string(xb.cols()));
  }
  const double clip = std::pow(10.0, -kStoiBeta / 20.0);
  double total = 0.0;
  const Index segments = xb.cols() - kStoiSegment + 1;
  for (Index m = 0; m < segments; ++m) {
    for (Index j = 0; j < kStoiBands; ++j) {
      Eigen::RowVectorXd xr = xb.row(j).segment(m, kStoiSegment);
      Eigen::RowVectorXd yr = yb.row(j).segment(m, kStoiSegment);
      yr *= xr.norm() / (yr.norm() + kEps);
      yr = yr.cwiseMin(xr * (1.0 + clip));
      yr.array() -= yr.mean();
      xr.array() -= xr.mean();
      yr /= yr.norm() + kEps;
      xr /= xr.norm() + kEps;
      total += xr.dot(yr);
    }
  }
  return total / static_cast<double>(kStoiBands * segments);
}

double log_spectral_distance(const Waveform& reference, const Waveform& degraded) {
  if (reference.size() != degraded.size()) {
    throw ValidationError("log-spectral distance needs equal lengths, got " + std::to_string(reference.size()) +
                          " and " + std::to_string(degraded.size()));
  }
  SpectrogramScale scale;
  scale.fft_size = 512;
  scale.hop = 128;
  const Matrix<double> a = compute_spectrogram(reference, scale).cast<double>().array().square();
  const Matrix<double> b = compute_spectrogram(degraded, scale).cast<double>().array().square();
  const Matrix<double> diff =
      10.0 * ((a.array() + 1e-10).log10() - (b.array() + 1e-10).log10());
  return diff.array().square().rowwise().mean().sqrt().mean();
}

double cosine_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  if (a.size() != b.size() || a.size() == 0) throw ValidationError("cosine similarity needs equal, non-empty vectors");
  const double na = a.cast<double>().norm(), nb = b.cast<double>().norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.cast<double>().dot(b.cast<double>()) / (na * nb);
}

double mean_pairwise_similarity(const std::vector<Eigen::VectorXf>& e) {
  if (e.size() < 2) throw ValidationError("mean similarity needs at least two embeddings");
  double total = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      total += cosine_similarity(e[i], e[j]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

// ---- probing -------------------------------------------------------------------

void ProbeTask::validate() const {
  if (num_classes < 2) throw ValidationError("probe task needs at least 2 classes");
  if (features.rows() != static_cast<Index>(labels.size())) {
    throw ValidationError("probe task has " + std::to_string(features.rows()) + " feature rows but " +
                          std::to_string(labels.size()) + " labels");
  }
  if (!features.allFinite()) throw ValidationError("probe features must be finite");
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw ValidationError("probe label " + std::to_string(l) + " out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2) {
      throw ValidationError("probe class " + std::to_string(c) + " has fewer than 2 items");
    }
  }
}

Eigen::RowVectorXd average_pool(const Matrix<float>& frames) {
  if (frames.rows() == 0) throw ValidationError("cannot pool an empty sequence");
  return frames.cast<double>().colwise().mean();
}

namespace {

struct Softmax {
  Matrix<double> weights;  // [d x C]
  Eigen::RowVectorXd bias;
};

double probe_objective(const Matrix<double>& x, const std::vector<int>& y, const Softmax& m, double l2,
                       Softmax* grad) {
  const Index n = x.rows();
  Matrix<double> logits = x * m.weights;
  logits.rowwise() += m.bias;
  double loss = 0.0;
  Matrix<double> delta(n, logits.cols());
  for (Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    const double z = e.sum();
    loss += std::log(z) + mx - logits(i, y[static_cast<std::size_t>(i)]);
    delta.row(i) = e / z;
    delta(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  }
  loss = loss / static_cast<double>(n) + 0.5 * l2 * m.weights.squaredNorm();
  if (grad) {
    grad->weights = x.transpose() * delta / static_cast<double>(n) + l2 * m.weights;
    grad->bias = delta.colwise().mean();
  }
  return loss;
}

int predict(const Eigen::RowVectorXd& row, const Softmax& m) {
  Eigen::RowVectorXd logits = row * m.weights + m.bias;
  Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

ProbeResult probe_linear(const ProbeTask& task, std::uint64_t split_seed, const ProbeOptions& options) {
  task.validate();
  std::mt19937_64 rng(split_seed);
  std::vector<Index> train, test;
  for (int c = 0; c < task.num_classes; ++c) {
    std::vector<Index> members;
    for (std::size_t i = 0; i < task.labels.size(); ++i) {
      if (task.labels[i] == c) members.push_back(static_cast<Index>(i));
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * members.size())));
    test.insert(test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());

  const Index d = task.features.cols();
  Matrix<double> xtr(static_cast<Index>(train.size()), d), xte(static_cast<Index>(test.size()), d);
  std::vector<int> ytr, yte;
  for (std::size_t i = 0; i < train.size(); ++i) {
    xtr.row(static_cast<Index>(i)) = task.features.row(train[i]);
    ytr.push_back(task.labels[static_cast<std::size_t>(train[i])]);
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    xte.row(static_cast<Index>(i)) = task.features.row(test[i]);
    yte.push_back(task.labels[static_cast<std::size_t>(test[i])]);
  }
  const Eigen::RowVectorXd mean = xtr.colwise().mean();
  Eigen::RowVectorXd scale = ((xtr.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Index j = 0; j < d; ++j) {
    if (scale(j) < 1e-12) scale(j) = 1.0;
  }
  auto standardise = [&](Matrix<double>& m) {
    m.rowwise() -= mean;
    m.array().rowwise() /= scale.array();
  };
  standardise(xtr);
  standardise(xte);

  Softmax model{Matrix<double>::Zero(d, task.num_classes), Eigen::RowVectorXd::Zero(task.num_classes)};
  Softmax grad;
  double loss = probe_objective(xtr, ytr, model, options.l2, &grad);
  double step = 1.0;
  ProbeResult result;
  for (int it = 0; it < options.max_iterations; ++it) {
    const double gnorm2 = grad.weights.squaredNorm() + grad.bias.squaredNorm();
    if (std::sqrt(gnorm2) < options.tolerance) break;
    result.iterations = it + 1;
    step = std::min(step * 2.0, 1e3);
    Softmax trial;
    double trial_loss = 0.0;
    while (true) {
      trial.weights = model.weights - step * grad.weights;
      trial.bias = model.bias - step * grad.bias;
      trial_loss = probe_objective(xtr, ytr, trial, options.l2, nullptr);
      if (trial_loss <= loss - 0.5 * step * gnorm2 || step < 1e-12) break;
      step *= 0.5;
    }
    model = std::move(trial);
    loss = probe_objective(xtr, ytr, model, options.l2, &grad);
  }

  auto accuracy = [&](const Matrix<double>& x, const std::vector<int>& y) {
    Index correct = 0;
    for (Index i = 0; i < x.rows(); ++i) correct += predict(x.row(i), model) == y[static_cast<std::size_t>(i)];
    return static_cast<double>(correct) / static_cast<double>(x.rows());
  };
  result.accuracy = accuracy(xte, yte);
  result.train_accuracy = accuracy(xtr, ytr);
  result.train_items = xtr.rows();
  result.test_items = xte.rows();
  return result;
}

// ---- figures -------------------------------------------------------------------

namespace {

const std::map<char, std::array<std::uint8_t, 7>>& font() {
  static const std::map<char, std::array<std::uint8_t, 7>> glyphs = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1e, 0x01, 0x01, 0x0e, 0x01, 0x01, 0x1e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x0e, 0x10, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x01, 0x0e}},
    {'a', {0x00, 0x00, 0x0e, 0x01, 0x0f, 0x11, 0x0f}},
    {'b', {0x10, 0x10, 0x1e, 0x11, 0x11, 0x11, 0x1e}},
    {'c', {0x00, 0x00, 0x0e, 0x10, 0x10, 0x10, 0x0e}},
    {'d', {0x01, 0x01, 0x0f, 0x11, 0x11, 0x11, 0x0f}},
    {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
    {'f', {0x06, 0x08, 0x1e, 0x08, 0x08, 0x08, 0x08}},
    {'g', {0x00, 0x0f, 0x11, 0x11, 0x0f, 0x01, 0x0e}},
    {'h', {0x10, 0x10, 0x1e, 0x11, 0x11, 0x11, 0x11}},
    {'i', {0x04, 0x00, 0x0c, 0x04, 0x04, 0x04, 0x0e}},
    {'j', {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0c}},
    {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
    {'l', {0x0c, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'m', {0x00, 0x00, 0x1a, 0x15, 0x15, 0x15, 0x15}},
    {'n', {0x00, 0x00, 0x1e, 0x11, 0x11, 0x11, 0x11}},
    {'o', {0x00, 0x00, 0x0e, 0x11, 0x11, 0x11, 0x0e}},
    {'p', {0x00, 0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10}},
    {'q', {0x00, 0x0f, 0x11, 0x11, 0x0f, 0x01, 0x01}},
    {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
    {'s', {0x00, 0x00, 0x0f, 0x10, 0x0e, 0x01, 0x1e}},
    {'t', {0x08, 0x08, 0x1e, 0x08, 0x08, 0x09, 0x06}},
    {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0d}},
    {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0a, 0x04}},
    {'w', {0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0a}},
    {'x', {0x00, 0x00, 0x11, 0x0a, 0x04, 0x0a, 0x11}},
    {'y', {0x00, 0x11, 0x11, 0x11, 0x0f, 0x01, 0x0e}},
    {'z', {0x00, 0x00, 0x1f, 0x02, 0x04, 0x08, 0x1f}},
    {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
    {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
  };
  return glyphs;
}

struct Canvas {
  int width, height;
  std::vector<std::uint8_t> rgb;
  Canvas(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 255) {}
  void set(int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
  }
  void text(int x, int y, const std::string& s) {
    for (char ch : s) {
      auto it = font().find(ch);
      if (it == font().end()) it = font().find(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      if (it != font().end()) {
        for (int r = 0; r < 7; ++r) {
          for (int c = 0; c < 5; ++c) {
            if ((it->second[static_cast<std::size_t>(r)] >> (4 - c)) & 1) set(x + c, y + r, {0, 0, 0});
          }
        }
      }
      x += 6;
    }
  }
  int text_width(const std::string& s) const { return static_cast<int>(s.size()) * 6; }
};

std::array<std::uint8_t, 3> colormap(double t) {
  static const double anchors[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    out[static_cast<std::size_t>(c)] =
        static_cast<std::uint8_t>(std::lround(anchors[i][c] + f * (anchors[i + 1][c] - anchors[i][c])));
  }
  return out;
}

std::string format_tick(double v) {
  char buf[32];
  if (std::abs(v - std::round(v)) < 1e-9) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.1f", v);
  }
  return buf;
}

}  // namespace

void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  if (width < 1 || height < 1 || rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw ValidationError("image buffer does not match its dimensions");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3);
  }
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (fp == nullptr) throw RuntimeError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  bool ok = info != nullptr;
  if (ok && setjmp(png_jmpbuf(png)) != 0) ok = false;
  if (ok) {
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_set_compression_level(png, 9);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  const bool closed = std::fclose(fp) == 0;
  if (!ok || !closed) throw RuntimeError("failed writing " + path.string());
}

void emit_mel_figure(const std::vector<std::pair<std::string, Waveform>>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw ValidationError("mel figure needs at least one waveform");
  SpectrogramScale scale;
  scale.fft_size = 1024;
  scale.hop = 256;
  scale.mel_bins = 80;
  scale.log_domain = true;
  std::vector<Matrix<float>> mels;
  double vmax = std::log(kLogEpsilon);
  Index frames = 0;
  for (const auto& [label, w] : rows) {
    w.validate();
    Waveform padded = w;
    if (padded.size() < scale.fft_size) {
      padded.samples.conservativeResize(scale.fft_size);
      padded.samples.tail(scale.fft_size - w.size()).setZero();
    }
    mels.push_back(compute_spectrogram(padded, scale));
    vmax = std::max(vmax, static_cast<double>(mels.back().maxCoeff()));
    frames = std::max(frames, mels.back().rows());
  }
  const double vmin = std::log(kLogEpsilon);
  const double range = std::max(vmax - vmin, 1e-9);
  const int sample_rate = rows.front().second.sample_rate;

  const int px = std::max(1, static_cast<int>(800 / std::max<Index>(frames, 1)));
  const int panel_w = static_cast<int>(frames) * px;
  const int panel_h = 160;
  const int left = 48, right = 8, title = 12, gap = 6, bottom = 22;
  const int height = static_cast<int>(rows.size()) * (title + panel_h + gap) + bottom;
  const int width = left + panel_w + right;
  Canvas canvas(width, height);

  const double mel_top = 2595.0 * std::log10(1.0 + (sample_rate / 2.0) / 700.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int top = static_cast<int>(r) * (title + panel_h + gap) + title;
    canvas.text(left, top - title + 2, rows[r].first);
    const auto& m = mels[r];
    for (int x = 0; x < panel_w; ++x) {
      const Index f = x / px;
      for (int y = 0; y < panel_h; ++y) {
        const Index bin = static_cast<Index>((panel_h - 1 - y) * m.cols() / panel_h);
        const double v = f < m.rows() ? m(f, bin) : vmin;
        canvas.set(left + x, top + y, colormap((v - vmin) / range));
      }
    }
    for (double hz : {0.0, 2000.0, 4000.0, 8000.0}) {
      if (hz > sample_rate / 2.0) continue;
      const double mel = 2595.0 * std::log10(1.0 + hz / 700.0);
      const int y = top + panel_h - 1 - static_cast<int>(std::lround(mel / mel_top * (panel_h - 1)));
      for (int k = 1; k <= 3; ++k) canvas.set(left - k, y, {0, 0, 0});
      const std::string label = hz == 0.0 ? "0" : format_tick(hz / 1000.0) + "k";
      canvas.text(left - 5 - canvas.text_width(label), y - 3, label);
    }
  }
  canvas.text(2, 2, "Hz");

  const int axis_y = height - bottom + 2;
  const double seconds = static_cast<double>(frames) * scale.hop / sample_rate;
  const double step = seconds > 8 ? 2.0 : seconds > 2 ? 0.5 : 0.25;
  for (double t = 0.0; t <= seconds + 1e-9; t += step) {
    const int x = left + static_cast<int>(std::lround(t * sample_rate / scale.hop * px));
    for (int k = 0; k < 3; ++k) canvas.set(x, axis_y + k, {0, 0, 0});
    const auto label = format_tick(t);
    canvas.text(x - canvas.text_width(label) / 2, axis_y + 4, label);
  }
  canvas.text(width - right - canvas.text_width("time (s)"), axis_y + 12, "time (s)");
  write_png(path, width, height, canvas.rgb);
}

// ---- reports -------------------------------------------------------------------

void EvalReport::validate() const {
  if (!std::isfinite(stoi) || stoi < 0.0 || stoi > 1.0) throw ValidationError("stoi outside [0, 1]");
  if (!std::isfinite(log_spectral_distance_db) || log_spectral_distance_db < 0.0) {
    throw ValidationError("log-spectral distance must be finite and nonnegative");
  }
  if (speaker_cosine && (!std::isfinite(*speaker_cosine) || std::abs(*speaker_cosine) > 1.0 + 1e-9)) {
    throw ValidationError("speaker cosine outside [-1, 1]");
  }
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  if (!utterance_id.empty()) j["utterance_id"] = utterance_id;
  j["stoi"] = stoi;
  j["log_spectral_distance_db"] = log_spectral_distance_db;
  if (speaker_cosine) j["speaker_cosine"] = *speaker_cosine;
  auto stats = [](const CodebookStats& s) {
    return nlohmann::json{{"utilization", s.utilization}, {"perplexity", s.perplexity}};
  };
  if (semantic_codes) j["semantic_codebook"] = stats(*semantic_codes);
  if (acoustic_codes) j["acoustic_codebook"] = stats(*acoustic_codes);
  auto opt = [&](const char* key, const std::optional<double>& v) { j[key] = v ? nlohmann::json(*v) : nlohmann::json(); };
  opt("wer", wer);
  opt("utmos", utmos);
  opt("sim", sim);
  opt("pesq", pesq);
  return j;
}

EvalReport aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ValidationError("nothing to aggregate");
  EvalReport out;
  out.utterance_id = "aggregate";
  const double n = static_cast<double>(reports.size());
  auto mean_opt = [&](auto getter) -> std::optional<double> {
    double total = 0.0;
    for (const auto& r : reports) {
      const std::optional<double> v = getter(r);
      if (!v) return std::nullopt;
      total += *v;
    }
    return total / n;
  };
  for (const auto& r : reports) {
    out.stoi += r.stoi / n;
    out.log_spectral_distance_db += r.log_spectral_distance_db / n;
  }
  out.speaker_cosine = mean_opt([](const EvalReport& r) { return r.speaker_cosine; });
  out.wer = mean_opt([](const EvalReport& r) { return r.wer; });
  out.utmos = mean_opt([](const EvalReport& r) { return r.utmos; });
  out.sim = mean_opt([](const EvalReport& r) { return r.sim; });
  out.pesq = mean_opt([](const EvalReport& r) { return r.pesq; });
  return out;
}

void merge_external(std::vector<EvalReport>& reports, const nlohmann::json& external) {
  if (!external.is_object()) throw ValidationError("external metrics must be a JSON object keyed by utterance id");
  for (auto& r : reports) {
    auto it = external.find(r.utterance_id);
    if (it == external.end()) continue;
    if (!it->is_object()) throw ValidationError("external metrics for '" + r.utterance_id + "' must be an object");
    for (const auto& [key, value] : it->items()) {
      if (!value.is_number()) throw ValidationError("external metric '" + key + "' must be a number");
      const double v = value.get<double>();
      if (key == "wer") {
        r.wer = v;
      } else if (key == "utmos") {
        r.utmos = v;
      } else if (key == "sim") {
        r.sim = v;
      } else if (key == "pesq") {
        r.pesq = v;
      } else {
        throw ValidationError("unknown external metric '" + key + "' (expected wer, utmos, sim, pesq)");
      }
    }
  }
}

}  // namespace sac
