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

#include "sac/discriminators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace sac {

namespace {

Index scaled(double base, double width_scale) {
  return std::max<Index>(1, static_cast<Index>(std::lround(base * width_scale)));
}

ad::Conv2dGeometry conv_shape(Index kh, Index kw, Index sh, Index sw, Index dh, Index dw, Index ph, Index pw) {
  ad::Conv2dGeometry g;
  g.kernel_h = kh;
  g.kernel_w = kw;
  g.stride_h = sh;
  g.stride_w = sw;
  g.dilation_h = dh;
  g.dilation_w = dw;
  g.pad_top = g.pad_bottom = ph;
  g.pad_left = g.pad_right = pw;
  return g;
}

}  // namespace

template <typename Scalar>
WNConv2d<Scalar>::WNConv2d(Index in, Index out, ad::Conv2dGeometry s, std::mt19937_64& rng) : shape(s) {
  const Index fan_in = s.taps() * in;
  Matrix<Scalar> v = nn::uniform_init<Scalar>(fan_in, out, fan_in, rng);
  magnitude = ad::Tensor<Scalar>(v.colwise().norm(), true);
  direction = ad::Tensor<Scalar>(std::move(v), true);
  bias = ad::Tensor<Scalar>(nn::uniform_init<Scalar>(1, out, fan_in, rng), true);
}

template <typename Scalar>
ad::Tensor<Scalar> WNConv2d<Scalar>::operator()(const ad::Tensor<Scalar>& x, Index in_h, Index in_w, bool frozen,
                                                Index* out_h, Index* out_w) const {
  ad::Conv2dGeometry g = shape;
  g.in_h = in_h;
  g.in_w = in_w;
  if (out_h) *out_h = g.out_h();
  if (out_w) *out_w = g.out_w();
  if (frozen) return ad::conv2d(x, g, ad::weight_norm(direction.detach(), magnitude.detach()), bias.detach());
  return ad::conv2d(x, g, ad::weight_norm(direction, magnitude), bias);
}

template <typename Scalar>
void WNConv2d<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  ps.add(prefix + ".direction", direction);
  ps.add(prefix + ".magnitude", magnitude);
  ps.add(prefix + ".bias", bias);
}

Index period_frames(Index length, int period) { return (length + period - 1) / period; }

template <typename Scalar>
PeriodDiscriminator<Scalar>::PeriodDiscriminator(int p, double width_scale, std::mt19937_64& rng) : period(p) {
  const double widths[] = {32, 128, 512, 1024, 1024};
  Index in = 1;
  for (std::size_t i = 0; i < std::size(widths); ++i) {
    const Index out = scaled(widths[i], width_scale);
    const Index stride = (i + 1 < std::size(widths)) ? 3 : 1;
    layers.emplace_back(in, out, conv_shape(5, 1, stride, 1, 1, 1, 2, 0), rng);
    in = out;
  }
  post = WNConv2d<Scalar>(in, 1, conv_shape(3, 1, 1, 1, 1, 1, 1, 0), rng);
}

template <typename Scalar>
void PeriodDiscriminator<Scalar>::forward(const ad::Tensor<Scalar>& waveform, bool frozen,
                                          DiscriminatorOutput<Scalar>& out) const {
  const Index frames = period_frames(waveform.rows(), period);
  // Row h*p + w of the padded signal is position (h, w): no reshuffle needed.
  auto h = ad::pad_rows(waveform, 0, frames * period - waveform.rows());
  Index height = frames, width = period;
  std::vector<ad::Tensor<Scalar>> feats;
  for (const auto& layer : layers) {
    Index nh = 0, nw = 0;
    h = ad::leaky_relu(layer(h, height, width, frozen, &nh, &nw), Scalar(0.1));
    height = nh;
    width = nw;
    feats.push_back(h);
  }
  auto score = post(h, height, width, frozen);
  feats.push_back(score);
  out.scores.push_back(score);
  out.features.push_back(std::move(feats));
}

template <typename Scalar>
void PeriodDiscriminator<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(ps, prefix + ".conv" + std::to_string(i));
  post.collect(ps, prefix + ".post");
}

template <typename Scalar>
StftDiscriminator<Scalar>::StftDiscriminator(int fft, double width_scale, std::mt19937_64& rng) : fft_size(fft) {
  const Index filters = scaled(32, width_scale);
  layers.emplace_back(2, filters, conv_shape(3, 9, 1, 1, 1, 1, 1, 4), rng);
  for (Index dilation : {1, 2, 4}) {
    layers.emplace_back(filters, filters, conv_shape(3, 9, 1, 2, dilation, 1, dilation, 4), rng);
  }
  layers.emplace_back(filters, filters, conv_shape(3, 3, 1, 1, 1, 1, 1, 1), rng);
  post = WNConv2d<Scalar>(filters, 1, conv_shape(3, 3, 1, 1, 1, 1, 1, 1), rng);
}

template <typename Scalar>
void StftDiscriminator<Scalar>::forward(const ad::Tensor<Scalar>& waveform, bool frozen,
                                        DiscriminatorOutput<Scalar>& out) const {
  if (waveform.rows() < fft_size) {
    throw ValidationError("STFT discriminator needs at least " + std::to_string(fft_size) + " samples, got " +
                          std::to_string(waveform.rows()));
  }
  const Index hop = fft_size / 4;
  // Normalised by the window energy; frames are not centre-padded.
  Scalar energy = 0;
  for (Index i = 0; i < fft_size; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(fft_size));
    energy += static_cast<Scalar>(w * w);
  }
  auto h = ad::stft(waveform, fft_size, hop, /*center=*/false) * (Scalar(1) / std::sqrt(energy));
  Index height = (waveform.rows() - fft_size) / hop + 1;
  Index width = fft_size / 2 + 1;
  std::vector<ad::Tensor<Scalar>> feats;
  for (const auto& layer : layers) {
    Index nh = 0, nw = 0;
    h = ad::leaky_relu(layer(h, height, width, frozen, &nh, &nw), Scalar(0.2));
    height = nh;
    width = nw;
    feats.push_back(h);
  }
  auto score = post(h, height, width, frozen);
  feats.push_back(score);
  out.scores.push_back(score);
  out.features.push_back(std::move(feats));
}

template <typename Scalar>
void StftDiscriminator<Scalar>::collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(ps, prefix + ".conv" + std::to_string(i));
  post.collect(ps, prefix + ".post");
}

template <typename Scalar>
Discriminators<Scalar>::Discriminators(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::set<int> seen;
  for (int p : cfg.periods) {
    if (p < 1 || !seen.insert(p).second) throw ValidationError("discriminator periods must be distinct positive ints");
  }
  std::mt19937_64 rng(seed);
  for (int p : cfg.periods) periods.emplace_back(p, cfg.width_scale, rng);
  for (int f : cfg.stft_ffts) scales.emplace_back(f, cfg.width_scale, rng);
}

template <typename Scalar>
DiscriminatorOutput<Scalar> Discriminators<Scalar>::mpd(const ad::Tensor<Scalar>& waveform, bool frozen) const {
  if (waveform.rows() == 0) throw ValidationError("discriminator received an empty waveform");
  DiscriminatorOutput<Scalar> out;
  for (const auto& d : periods) d.forward(waveform, frozen, out);
  return out;
}

template <typename Scalar>
DiscriminatorOutput<Scalar> Discriminators<Scalar>::msstft(const ad::Tensor<Scalar>& waveform, bool frozen) const {
  if (waveform.rows() == 0) throw ValidationError("discriminator received an empty waveform");
  DiscriminatorOutput<Scalar> out;
  for (const auto& d : scales) d.forward(waveform, frozen, out);
  return out;
}

template <typename Scalar>
DiscriminatorOutput<Scalar> Discriminators<Scalar>::operator()(const ad::Tensor<Scalar>& waveform,
                                                               bool frozen) const {
  auto out = mpd(waveform, frozen);
  auto spec = msstft(waveform, frozen);
  for (auto& s : spec.scores) out.scores.push_back(std::move(s));
  for (auto& f : spec.features) out.features.push_back(std::move(f));
  return out;
}

template <typename Scalar>
nn::ParamSet<Scalar> Discriminators<Scalar>::parameters() const {
  nn::ParamSet<Scalar> ps;
  for (std::size_t i = 0; i < periods.size(); ++i) {
    periods[i].collect(ps, "mpd.p" + std::to_string(periods[i].period));
  }
  for (std::size_t i = 0; i < scales.size(); ++i) {
    scales[i].collect(ps, "msstft.n" + std::to_string(scales[i].fft_size));
  }
  return ps;
}

#define SAC_INSTANTIATE_DISC(S)          \
  template class WNConv2d<S>;            \
  template class PeriodDiscriminator<S>; \
  template class StftDiscriminator<S>;   \
  template class Discriminators<S>;

SAC_INSTANTIATE_DISC(float)
SAC_INSTANTIATE_DISC(double)

#undef SAC_INSTANTIATE_DISC

}  // namespace sac
