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

#include "sac/nn.hpp"

#include <cmath>

namespace sac::nn {

template <typename Scalar>
void ParamSet<Scalar>::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

template <typename Scalar>
double ParamSet<Scalar>::grad_norm() const {
  double sq = 0.0;
  for (const auto& [name, t] : items_) {
    if (t.has_grad()) sq += static_cast<double>(t.grad().squaredNorm());
  }
  return std::sqrt(sq);
}

template <typename Scalar>
Index ParamSet<Scalar>::num_scalars() const {
  Index n = 0;
  for (const auto& [name, t] : items_) n += t.value().size();
  return n;
}

template <typename Scalar>
Matrix<Scalar> uniform_init(Index rows, Index cols, Index fan_in, std::mt19937_64& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
Linear<Scalar>::Linear(Index in, Index out, std::mt19937_64& rng, bool trainable)
    : weight(uniform_init<Scalar>(in, out, in, rng), trainable),
      bias(uniform_init<Scalar>(1, out, in, rng), trainable) {}

template <typename Scalar>
Tensor<Scalar> Linear<Scalar>::operator()(const Tensor<Scalar>& x) const {
  return ad::add_bias(ad::matmul(x, weight), bias);
}

template <typename Scalar>
void Linear<Scalar>::collect(ParamSet<Scalar>& ps, const std::string& prefix) const {
  ps.add(prefix + ".weight", weight);
  ps.add(prefix + ".bias", bias);
}

template <typename Scalar>
LayerNorm<Scalar>::LayerNorm(Index channels, bool trainable)
    : gain(Matrix<Scalar>::Ones(1, channels), trainable),
      bias(Matrix<Scalar>::Zero(1, channels), trainable) {}

template <typename Scalar>
Tensor<Scalar> LayerNorm<Scalar>::operator()(const Tensor<Scalar>& x) const {
  return ad::layer_norm(x, gain, bias);
}

template <typename Scalar>
void LayerNorm<Scalar>::collect(ParamSet<Scalar>& ps, const std::string& prefix) const {
  ps.add(prefix + ".gain", gain);
  ps.add(prefix + ".bias", bias);
}

template <typename Scalar>
Conv1d<Scalar>::Conv1d(Index in, Index out, Index kernel_size, std::mt19937_64& rng, Index stride_,
                       Index dilation_, bool trainable)
    : in_channels(in),
      out_channels(out),
      kernel(kernel_size),
      stride(stride_),
      dilation(dilation_),
      weight(uniform_init<Scalar>(kernel_size * in, out, kernel_size * in, rng), trainable),
      bias(uniform_init<Scalar>(1, out, kernel_size * in, rng), trainable) {}

template <typename Scalar>
Tensor<Scalar> Conv1d<Scalar>::operator()(const Tensor<Scalar>& x) const {
  ad::Conv2dGeometry g;
  g.in_h = x.rows();
  g.kernel_h = kernel;
  g.stride_h = stride;
  g.dilation_h = dilation;
  const Index total_pad = dilation * (kernel - 1) + 1 - stride;
  g.pad_top = std::max<Index>(total_pad, 0) / 2;
  g.pad_bottom = std::max<Index>(total_pad, 0) - g.pad_top;
  return ad::conv2d(x, g, weight, bias);
}

template <typename Scalar>
void Conv1d<Scalar>::collect(ParamSet<Scalar>& ps, const std::string& prefix) const {
  ps.add(prefix + ".weight", weight);
  ps.add(prefix + ".bias", bias);
}

template <typename Scalar>
ConvTranspose1d<Scalar>::ConvTranspose1d(Index in, Index out, Index stride_, std::mt19937_64& rng)
    : in_channels(in),
      out_channels(out),
      stride(stride_),
      weight(uniform_init<Scalar>(in, 2 * stride_ * out, in, rng), true),
      bias(uniform_init<Scalar>(1, out, in, rng), true) {}

template <typename Scalar>
Tensor<Scalar> ConvTranspose1d<Scalar>::operator()(const Tensor<Scalar>& x) const {
  return ad::conv_transpose1d(x, weight, bias, stride, stride / 2, x.rows() * stride);
}

template <typename Scalar>
void ConvTranspose1d<Scalar>::collect(ParamSet<Scalar>& ps, const std::string& prefix) const {
  ps.add(prefix + ".weight", weight);
  ps.add(prefix + ".bias", bias);
}

template <typename Scalar>
ConvNeXtBlock<Scalar>::ConvNeXtBlock(Index channels, Index kernel, std::mt19937_64& rng)
    : dw_weight(uniform_init<Scalar>(kernel, channels, kernel, rng), true),
      dw_bias(uniform_init<Scalar>(1, channels, kernel, rng), true),
      norm(channels),
      expand(channels, 3 * channels, rng),
      project(3 * channels, channels, rng) {}

template <typename Scalar>
Tensor<Scalar> ConvNeXtBlock<Scalar>::operator()(const Tensor<Scalar>& x) const {
  auto h = ad::depthwise_conv1d(x, dw_weight, dw_bias);
  h = project(ad::gelu(expand(norm(h))));
  return x + h;
}

template <typename Scalar>
void ConvNeXtBlock<Scalar>::collect(ParamSet<Scalar>& ps, const std::string& prefix) const {
  ps.add(prefix + ".dw.weight", dw_weight);
  ps.add(prefix + ".dw.bias", dw_bias);
  norm.collect(ps, prefix + ".norm");
  expand.collect(ps, prefix + ".expand");
  project.collect(ps, prefix + ".project");
}

template <typename Scalar>
ResidualUnit<Scalar>::ResidualUnit(Index channels, Index kernel, Index dilation, std::mt19937_64& rng)
    : conv(channels, channels, kernel, rng, 1, dilation), pointwise(channels, channels, 1, rng) {}

template <typename Scalar>
Tensor<Scalar> ResidualUnit<Scalar>::operator()(const Tensor<Scalar>& x) const {
  return x + pointwise(ad::elu(conv(ad::elu(x))));
}

template <typename Scalar>
void ResidualUnit<Scalar>::collect(ParamSet<Scalar>& ps, const std::string& prefix) const {
  conv.collect(ps, prefix + ".conv");
  pointwise.collect(ps, prefix + ".pointwise");
}

#define SAC_INSTANTIATE_NN(S)                                                              \
  template class ParamSet<S>;                                                              \
  template Matrix<S> uniform_init<S>(Index, Index, Index, std::mt19937_64&, double);       \
  template class Linear<S>;                                                                \
  template class LayerNorm<S>;                                                             \
  template class Conv1d<S>;                                                                \
  template class ConvTranspose1d<S>;                                                       \
  template class ConvNeXtBlock<S>;                                                         \
  template class ResidualUnit<S>;

SAC_INSTANTIATE_NN(float)
SAC_INSTANTIATE_NN(double)

#undef SAC_INSTANTIATE_NN

}  // namespace sac::nn
