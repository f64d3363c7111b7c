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

#ifndef SAC_AUTODIFF_HPP_
#define SAC_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sac/common.hpp"

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tensor is a shared handle to a graph node. Operations build the graph
// eagerly; calling backward() on a 1x1 result accumulates gradients into
// every reachable node that requires them. Leaf tensors created with
// requires_grad = true act as trainable parameters and keep their
// accumulated gradient until zero_grad().
namespace sac::ad {

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  Matrix<Scalar>& grad_buffer() {
    if (grad.size() == 0) grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
    return grad;
  }
};

template <typename Scalar>
class Tensor {
 public:
  using Mat = Matrix<Scalar>;

  Tensor() = default;
  explicit Tensor(Mat value, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor scalar(Scalar v);

  bool defined() const { return static_cast<bool>(node_); }
  const Mat& value() const { return node_->value; }
  // Only meaningful for leaves; optimizers write through this.
  Mat& mutable_value() { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  Mat& mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Scalar item() const;

  // Seeds d(self)/d(self) = 1; self must be 1x1.
  void backward() const;
  void backward(const Mat& seed) const;
  void zero_grad();
  // Same value, cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<Node<Scalar>> node);

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

// Builds a result node; the closure is dropped when no input needs a gradient.
template <typename Scalar>
Tensor<Scalar> make_op(Matrix<Scalar> value, std::vector<Tensor<Scalar>> inputs,
                       std::function<void(Node<Scalar>&)> backward_fn);

// ---- elementwise and structural -----------------------------------------

template <typename Scalar> Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> operator-(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s);
template <typename Scalar> Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) { return a * s; }

template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar s);
template <typename Scalar> Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
// x [T x C] + bias [1 x C] broadcast over rows.
template <typename Scalar> Tensor<Scalar> add_bias(const Tensor<Scalar>& x, const Tensor<Scalar>& bias);

template <typename Scalar> Tensor<Scalar> elu(const Tensor<Scalar>& x, Scalar alpha = Scalar(1));
// tanh approximation of GELU.
template <typename Scalar> Tensor<Scalar> gelu(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> tanh(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope);
template <typename Scalar> Tensor<Scalar> square(const Tensor<Scalar>& x);
// log(x + eps)
template <typename Scalar> Tensor<Scalar> log_eps(const Tensor<Scalar>& x, Scalar eps);

// Per-row normalisation across channels.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                          const Tensor<Scalar>& bias, Scalar eps = Scalar(1e-6));

template <typename Scalar> Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> slice_rows(const Tensor<Scalar>& x, Index start, Index count);
template <typename Scalar> Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Index start, Index count);
template <typename Scalar> Tensor<Scalar> pad_rows(const Tensor<Scalar>& x, Index before, Index after);
// Nearest-neighbour upsampling along time.
template <typename Scalar> Tensor<Scalar> repeat_rows(const Tensor<Scalar>& x, Index factor);
// Row-major reinterpretation; rows * cols must be preserved.
template <typename Scalar> Tensor<Scalar> reshape(const Tensor<Scalar>& x, Index rows, Index cols);

// ---- reductions ----------------------------------------------------------

template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> l1_loss(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> mse_loss(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

// Column means / population standard deviations over time, [1 x C].
// Sums run over sorted values so the result is bit-exactly invariant to
// any permutation of the rows.
template <typename Scalar> Tensor<Scalar> mean_rows(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> std_rows(const Tensor<Scalar>& x);

// ---- quantisation helpers -----------------------------------------------

template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table, std::span<const int> indices);
// Forward value is exactly zq; the backward pass routes the incoming
// gradient to z unchanged and nothing to zq.
template <typename Scalar>
Tensor<Scalar> straight_through(const Tensor<Scalar>& z, const Tensor<Scalar>& zq);

// ---- convolutions --------------------------------------------------------

struct Conv2dGeometry {
  Index in_h = 0, in_w = 1;
  Index kernel_h = 1, kernel_w = 1;
  Index stride_h = 1, stride_w = 1;
  Index dilation_h = 1, dilation_w = 1;
  Index pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;

  Index out_h() const {
    return (in_h + pad_top + pad_bottom - dilation_h * (kernel_h - 1) - 1) / stride_h + 1;
  }
  Index out_w() const {
    return (in_w + pad_left + pad_right - dilation_w * (kernel_w - 1) - 1) / stride_w + 1;
  }
  Index taps() const { return kernel_h * kernel_w; }
};

// x holds in_h*in_w positions (row = h*in_w + w) by C_in channels; weight is
// [(kernel_h*kernel_w*C_in) x C_out] with row = (i*kernel_w + j)*C_in + c;
// bias is [1 x C_out]. Zero padding.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Conv2dGeometry& geom,
                      const Tensor<Scalar>& weight, const Tensor<Scalar>& bias);

// Transposed 1-D convolution. weight is [C_in x (kernel*C_out)], block j
// holding tap j. The full output has (T-1)*stride + kernel rows; rows
// [trim_left, trim_left + out_len) are returned.
template <typename Scalar>
Tensor<Scalar> conv_transpose1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                const Tensor<Scalar>& bias, Index stride, Index trim_left,
                                Index out_len);

// Per-channel 1-D convolution with "same" zero padding; weight is
// [kernel x C], kernel odd.
template <typename Scalar>
Tensor<Scalar> depthwise_conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                const Tensor<Scalar>& bias, Index dilation = 1);

// Weight normalisation per output column: w[:, j] = g[j] * v[:, j] / |v[:, j]|.
template <typename Scalar>
Tensor<Scalar> weight_norm(const Tensor<Scalar>& v, const Tensor<Scalar>& g);

// ---- spectral ------------------------------------------------------------

// Short-time Fourier transform of a [N x 1] signal with a periodic Hann
// window. With center = true the signal is reflect-padded by fft_size/2 on
// both sides. Output is [(frames * bins) x 2] with row = frame*bins + bin,
// bins = fft_size/2 + 1, column 0 real and column 1 imaginary.
template <typename Scalar>
Tensor<Scalar> stft(const Tensor<Scalar>& x, Index fft_size, Index hop, bool center);

// |re + i im| for a [n x 2] input, giving [n x 1].
template <typename Scalar> Tensor<Scalar> complex_abs(const Tensor<Scalar>& z);

}  // namespace sac::ad

#endif  // SAC_AUTODIFF_HPP_
