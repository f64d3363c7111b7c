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

#ifndef SAC_NN_HPP_
#define SAC_NN_HPP_

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sac/autodiff.hpp"

namespace sac::nn {

template <typename Scalar>
using Tensor = ad::Tensor<Scalar>;

// Ordered, named view over trainable tensors.
template <typename Scalar>
class ParamSet {
 public:
  void add(std::string name, Tensor<Scalar> t) { items_.emplace_back(std::move(name), std::move(t)); }
  std::vector<std::pair<std::string, Tensor<Scalar>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor<Scalar>>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  void zero_grad();
  double grad_norm() const;
  Index num_scalars() const;

 private:
  std::vector<std::pair<std::string, Tensor<Scalar>>> items_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for conv and
// affine layers.
template <typename Scalar>
Matrix<Scalar> uniform_init(Index rows, Index cols, Index fan_in, std::mt19937_64& rng,
                            double gain = 1.0);

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out, std::mt19937_64& rng, bool trainable = true);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void collect(ParamSet<Scalar>& ps, const std::string& prefix) const;

  Tensor<Scalar> weight;  // [in x out]
  Tensor<Scalar> bias;    // [1 x out]
};

template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(Index channels, bool trainable = true);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void collect(ParamSet<Scalar>& ps, const std::string& prefix) const;

  Tensor<Scalar> gain;
  Tensor<Scalar> bias;
};

// 1-D convolution over time-major [T x C_in] input.
template <typename Scalar>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(Index in, Index out, Index kernel, std::mt19937_64& rng, Index stride = 1,
         Index dilation = 1, bool trainable = true);
  // Length-preserving for stride 1; exactly T/stride frames when the kernel
  // is 2*stride and T is a multiple of stride.
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void collect(ParamSet<Scalar>& ps, const std::string& prefix) const;

  Index in_channels = 0, out_channels = 0, kernel = 1, stride = 1, dilation = 1;
  Tensor<Scalar> weight;  // [(kernel*C_in) x C_out]
  Tensor<Scalar> bias;    // [1 x C_out]
};

// Upsamples time by `stride` with kernel 2*stride: T frames -> T*stride.
template <typename Scalar>
class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(Index in, Index out, Index stride, std::mt19937_64& rng);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void collect(ParamSet<Scalar>& ps, const std::string& prefix) const;

  Index in_channels = 0, out_channels = 0, stride = 1;
  Tensor<Scalar> weight;  // [C_in x (2*stride*C_out)]
  Tensor<Scalar> bias;
};

// depthwise conv -> LayerNorm -> pointwise x3 expansion -> GELU -> pointwise
// projection, plus the residual path. Width is preserved.
template <typename Scalar>
class ConvNeXtBlock {
 public:
  ConvNeXtBlock() = default;
  ConvNeXtBlock(Index channels, Index kernel, std::mt19937_64& rng);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void collect(ParamSet<Scalar>& ps, const std::string& prefix) const;

  Tensor<Scalar> dw_weight;  // [kernel x C]
  Tensor<Scalar> dw_bias;
  LayerNorm<Scalar> norm;
  Linear<Scalar> expand;
  Linear<Scalar> project;
};

// ELU -> dilated conv(k) -> ELU -> conv(1), added to the input.
template <typename Scalar>
class ResidualUnit {
 public:
  ResidualUnit() = default;
  ResidualUnit(Index channels, Index kernel, Index dilation, std::mt19937_64& rng);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void collect(ParamSet<Scalar>& ps, const std::string& prefix) const;

  Conv1d<Scalar> conv;
  Conv1d<Scalar> pointwise;
};

}  // namespace sac::nn

#endif  // SAC_NN_HPP_
