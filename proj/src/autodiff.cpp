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

#include "sac/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <unordered_set>

#include <unsupported/Eigen/FFT>

namespace sac::ad {

namespace {

template <typename Scalar>
using NodePtr = std::shared_ptr<Node<Scalar>>;

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch [" + std::to_string(a.rows()) +
                          " x " + std::to_string(a.cols()) + "] vs [" +
                          std::to_string(b.rows()) + " x " + std::to_string(b.cols()) + "]");
  }
}

template <typename Scalar>
Node<Scalar>& in(Node<Scalar>& n, std::size_t i) {
  return *n.inputs[i];
}

// Sum of a column after sorting, so the result does not depend on row order.
template <typename Scalar>
Scalar sorted_sum(std::vector<Scalar>& values) {
  std::sort(values.begin(), values.end());
  Scalar acc = 0;
  for (Scalar v : values) acc += v;
  return acc;
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar>::Tensor(Mat value, bool requires_grad) : node_(std::make_shared<Node<Scalar>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Mat::Zero(rows, cols), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_node(std::shared_ptr<Node<Scalar>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (rows() != 1 || cols() != 1) throw ValidationError("item() requires a 1x1 tensor");
  return node_->value(0, 0);
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
  if (rows() != 1 || cols() != 1) throw ValidationError("backward() requires a 1x1 tensor");
  backward(Mat::Ones(1, 1));
}

template <typename Scalar>
void Tensor<Scalar>::backward(const Mat& seed) const {
  if (!node_->requires_grad) return;
  // Iterative post-order DFS; reversed, it is a valid topological order.
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> visited;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<Scalar>* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  node_->grad.resize(0, 0);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return Tensor(node_->value, false);
}

template <typename Scalar>
Tensor<Scalar> make_op(Matrix<Scalar> value, std::vector<Tensor<Scalar>> inputs,
                       std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  for (const auto& t : inputs) {
    if (t.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

// ---- elementwise ---------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "add");
  return make_op<Scalar>(a.value() + b.value(), {a, b}, [](Node<Scalar>& n) {
    for (auto& p : n.inputs)
      if (p->requires_grad) p->accumulate(n.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "sub");
  return make_op<Scalar>(a.value() - b.value(), {a, b}, [](Node<Scalar>& n) {
    if (in(n, 0).requires_grad) in(n, 0).accumulate(n.grad);
    if (in(n, 1).requires_grad) in(n, 1).accumulate(-n.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) {
  return make_op<Scalar>(-a.value(), {a}, [](Node<Scalar>& n) { in(n, 0).accumulate(-n.grad); });
}

template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s) {
  return make_op<Scalar>(a.value() * s, {a},
                         [s](Node<Scalar>& n) { in(n, 0).accumulate(n.grad * s); });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mul");
  return make_op<Scalar>(a.value().cwiseProduct(b.value()), {a, b}, [](Node<Scalar>& n) {
    Node<Scalar>& x = in(n, 0);
    Node<Scalar>& y = in(n, 1);
    if (x.requires_grad) x.accumulate(n.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(n.grad.cwiseProduct(x.value));
  });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar s) {
  return make_op<Scalar>((a.value().array() + s).matrix(), {a},
                         [](Node<Scalar>& n) { in(n, 0).accumulate(n.grad); });
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                          std::to_string(b.rows()) + " differ");
  }
  Matrix<Scalar> out;
  out.noalias() = a.value() * b.value();
  return make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& n) {
    Node<Scalar>& x = in(n, 0);
    Node<Scalar>& y = in(n, 1);
    if (x.requires_grad) x.grad_buffer().noalias() += n.grad * y.value.transpose();
    if (y.requires_grad) y.grad_buffer().noalias() += x.value.transpose() * n.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> add_bias(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw ValidationError("add_bias: bias must be [1 x C]");
  Matrix<Scalar> out = x.value();
  out.rowwise() += bias.value().row(0);
  return make_op<Scalar>(std::move(out), {x, bias}, [](Node<Scalar>& n) {
    if (in(n, 0).requires_grad) in(n, 0).accumulate(n.grad);
    if (in(n, 1).requires_grad) in(n, 1).accumulate(n.grad.colwise().sum());
  });
}

template <typename Scalar>
Tensor<Scalar> elu(const Tensor<Scalar>& x, Scalar alpha) {
  Matrix<Scalar> out =
      x.value().unaryExpr([alpha](Scalar v) { return v > 0 ? v : alpha * std::expm1(v); });
  return make_op<Scalar>(std::move(out), {x}, [alpha](Node<Scalar>& n) {
    const auto& v = in(n, 0).value;
    in(n, 0).accumulate(n.grad.cwiseProduct(
        v.unaryExpr([alpha](Scalar t) { return t > 0 ? Scalar(1) : alpha * std::exp(t); })));
  });
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  constexpr Scalar kC = Scalar(0.7978845608028654);  // sqrt(2/pi)
  constexpr Scalar kA = Scalar(0.044715);
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar v) {
    return Scalar(0.5) * v * (Scalar(1) + std::tanh(kC * (v + kA * v * v * v)));
  });
  return make_op<Scalar>(std::move(out), {x}, [](Node<Scalar>& n) {
    const auto& v = in(n, 0).value;
    in(n, 0).accumulate(n.grad.cwiseProduct(v.unaryExpr([](Scalar t) {
      const Scalar u = kC * (t + kA * t * t * t);
      const Scalar th = std::tanh(u);
      const Scalar du = kC * (Scalar(1) + Scalar(3) * kA * t * t);
      return Scalar(0.5) * (Scalar(1) + th) + Scalar(0.5) * t * (Scalar(1) - th * th) * du;
    })));
  });
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
  Matrix<Scalar> out = x.value().array().tanh().matrix();
  return make_op<Scalar>(std::move(out), {x}, [](Node<Scalar>& n) {
    in(n, 0).accumulate(
        (n.grad.array() * (Scalar(1) - n.value.array().square())).matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope) {
  Matrix<Scalar> out = x.value().unaryExpr([slope](Scalar v) { return v > 0 ? v : slope * v; });
  return make_op<Scalar>(std::move(out), {x}, [slope](Node<Scalar>& n) {
    const auto& v = in(n, 0).value;
    in(n, 0).accumulate(n.grad.cwiseProduct(
        v.unaryExpr([slope](Scalar t) { return t > 0 ? Scalar(1) : slope; })));
  });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x) {
  return make_op<Scalar>(x.value().array().square().matrix(), {x}, [](Node<Scalar>& n) {
    in(n, 0).accumulate((Scalar(2) * n.grad.array() * in(n, 0).value.array()).matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> log_eps(const Tensor<Scalar>& x, Scalar eps) {
  Matrix<Scalar> out = (x.value().array() + eps).log().matrix();
  return make_op<Scalar>(std::move(out), {x}, [eps](Node<Scalar>& n) {
    in(n, 0).accumulate((n.grad.array() / (in(n, 0).value.array() + eps)).matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                          const Tensor<Scalar>& bias, Scalar eps) {
  const Index c = x.cols();
  if (gain.cols() != c || bias.cols() != c) throw ValidationError("layer_norm: parameter width mismatch");
  Vector<Scalar> mu = x.value().rowwise().mean();
  Matrix<Scalar> centered = x.value().colwise() - mu;
  Vector<Scalar> inv_std =
      ((centered.array().square().rowwise().sum() / Scalar(c)) + eps).rsqrt().matrix();
  auto normed = std::make_shared<Matrix<Scalar>>(centered.array().colwise() * inv_std.array());
  Matrix<Scalar> out = normed->array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return make_op<Scalar>(std::move(out), {x, gain, bias},
                         [normed, inv_std, c](Node<Scalar>& n) {
    const Matrix<Scalar>& xh = *normed;
    Node<Scalar>& g = in(n, 1);
    if (g.requires_grad) g.accumulate(n.grad.cwiseProduct(xh).colwise().sum());
    if (in(n, 2).requires_grad) in(n, 2).accumulate(n.grad.colwise().sum());
    if (in(n, 0).requires_grad) {
      Matrix<Scalar> dxh = n.grad.array().rowwise() * g.value.row(0).array();
      Vector<Scalar> m1 = dxh.rowwise().mean();
      Vector<Scalar> m2 = dxh.cwiseProduct(xh).rowwise().sum() / Scalar(c);
      Matrix<Scalar> dx = dxh.colwise() - m1;
      dx -= (xh.array().colwise() * m2.array()).matrix();
      in(n, 0).accumulate((dx.array().colwise() * inv_std.array()).matrix());
    }
  });
}

// ---- structural ----------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rows() != b.rows()) {
    throw ValidationError("concat_cols: row counts " + std::to_string(a.rows()) + " and " +
                          std::to_string(b.rows()) + " differ");
  }
  Matrix<Scalar> out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index ca = a.cols();
  return make_op<Scalar>(std::move(out), {a, b}, [ca](Node<Scalar>& n) {
    if (in(n, 0).requires_grad) in(n, 0).accumulate(n.grad.leftCols(ca));
    if (in(n, 1).requires_grad) in(n, 1).accumulate(n.grad.rightCols(n.grad.cols() - ca));
  });
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) throw ValidationError("slice_rows: out of range");
  return make_op<Scalar>(x.value().middleRows(start, count), {x}, [start, count](Node<Scalar>& n) {
    in(n, 0).grad_buffer().middleRows(start, count) += n.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw ValidationError("slice_cols: out of range");
  return make_op<Scalar>(x.value().middleCols(start, count), {x}, [start, count](Node<Scalar>& n) {
    in(n, 0).grad_buffer().middleCols(start, count) += n.grad;
  });
}

template <typename Scalar>
Tensor<Scalar> pad_rows(const Tensor<Scalar>& x, Index before, Index after) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows() + before + after, x.cols());
  out.middleRows(before, x.rows()) = x.value();
  const Index rows = x.rows();
  return make_op<Scalar>(std::move(out), {x}, [before, rows](Node<Scalar>& n) {
    in(n, 0).accumulate(n.grad.middleRows(before, rows));
  });
}

template <typename Scalar>
Tensor<Scalar> repeat_rows(const Tensor<Scalar>& x, Index factor) {
  if (factor < 1) throw ValidationError("repeat_rows: factor must be >= 1");
  if (factor == 1) return x;
  Matrix<Scalar> out(x.rows() * factor, x.cols());
  for (Index t = 0; t < x.rows(); ++t) out.middleRows(t * factor, factor).rowwise() = x.value().row(t);
  return make_op<Scalar>(std::move(out), {x}, [factor](Node<Scalar>& n) {
    Matrix<Scalar>& g = in(n, 0).grad_buffer();
    for (Index t = 0; t < g.rows(); ++t) g.row(t) += n.grad.middleRows(t * factor, factor).colwise().sum();
  });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Index rows, Index cols) {
  if (rows * cols != x.rows() * x.cols()) throw ValidationError("reshape: element count changes");
  Matrix<Scalar> out = Eigen::Map<const Matrix<Scalar>>(x.value().data(), rows, cols);
  const Index r0 = x.rows(), c0 = x.cols();
  return make_op<Scalar>(std::move(out), {x}, [r0, c0](Node<Scalar>& n) {
    in(n, 0).accumulate(Eigen::Map<const Matrix<Scalar>>(n.grad.data(), r0, c0));
  });
}

// ---- reductions ----------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return make_op<Scalar>(std::move(out), {x}, [](Node<Scalar>& n) {
    Matrix<Scalar>& g = in(n, 0).grad_buffer();
    g.array() += n.grad(0, 0);
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  if (x.value().size() == 0) throw ValidationError("mean of empty tensor");
  return sum(x) * (Scalar(1) / Scalar(x.value().size()));
}

template <typename Scalar>
Tensor<Scalar> l1_loss(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "l1_loss");
  if (a.value().size() == 0) throw ValidationError("l1_loss of empty tensors");
  Matrix<Scalar> diff = a.value() - b.value();
  const Scalar inv = Scalar(1) / Scalar(diff.size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = diff.cwiseAbs().sum() * inv;
  auto sign = std::make_shared<Matrix<Scalar>>(diff.unaryExpr([](Scalar v) {
    return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0));
  }));
  return make_op<Scalar>(std::move(out), {a, b}, [sign, inv](Node<Scalar>& n) {
    const Scalar g = n.grad(0, 0) * inv;
    if (in(n, 0).requires_grad) in(n, 0).accumulate(*sign * g);
    if (in(n, 1).requires_grad) in(n, 1).accumulate(*sign * (-g));
  });
}

template <typename Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mse_loss");
  if (a.value().size() == 0) throw ValidationError("mse_loss of empty tensors");
  auto diff = std::make_shared<Matrix<Scalar>>(a.value() - b.value());
  const Scalar inv = Scalar(1) / Scalar(diff->size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = diff->squaredNorm() * inv;
  return make_op<Scalar>(std::move(out), {a, b}, [diff, inv](Node<Scalar>& n) {
    const Scalar g = Scalar(2) * n.grad(0, 0) * inv;
    if (in(n, 0).requires_grad) in(n, 0).accumulate(*diff * g);
    if (in(n, 1).requires_grad) in(n, 1).accumulate(*diff * (-g));
  });
}

template <typename Scalar>
Tensor<Scalar> mean_rows(const Tensor<Scalar>& x) {
  const Index t = x.rows();
  if (t == 0) throw ValidationError("mean_rows of empty tensor");
  Matrix<Scalar> out(1, x.cols());
  std::vector<Scalar> column(static_cast<std::size_t>(t));
  for (Index c = 0; c < x.cols(); ++c) {
    for (Index r = 0; r < t; ++r) column[static_cast<std::size_t>(r)] = x.value()(r, c);
    out(0, c) = sorted_sum(column) / Scalar(t);
  }
  return make_op<Scalar>(std::move(out), {x}, [t](Node<Scalar>& n) {
    Matrix<Scalar>& g = in(n, 0).grad_buffer();
    g.rowwise() += n.grad.row(0) / Scalar(t);
  });
}

template <typename Scalar>
Tensor<Scalar> std_rows(const Tensor<Scalar>& x) {
  const Index t = x.rows();
  if (t == 0) throw ValidationError("std_rows of empty tensor");
  const Index cols = x.cols();
  RowVector<Scalar> mu(cols);
  Matrix<Scalar> out(1, cols);
  std::vector<Scalar> column(static_cast<std::size_t>(t));
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < t; ++r) column[static_cast<std::size_t>(r)] = x.value()(r, c);
    mu(c) = sorted_sum(column) / Scalar(t);
    for (Index r = 0; r < t; ++r) {
      const Scalar d = x.value()(r, c) - mu(c);
      column[static_cast<std::size_t>(r)] = d * d;
    }
    out(0, c) = std::sqrt(sorted_sum(column) / Scalar(t));
  }
  return make_op<Scalar>(std::move(out), {x}, [mu, t](Node<Scalar>& n) {
    Matrix<Scalar>& g = in(n, 0).grad_buffer();
    const Matrix<Scalar>& v = in(n, 0).value;
    for (Index c = 0; c < v.cols(); ++c) {
      const Scalar s = n.value(0, c);
      if (s <= Scalar(0)) continue;  // d std / dx undefined at zero spread
      const Scalar k = n.grad(0, c) / (Scalar(t) * s);
      g.col(c).array() += k * (v.col(c).array() - mu(c));
    }
  });
}

// ---- quantisation helpers -----------------------------------------------

template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table, std::span<const int> indices) {
  Matrix<Scalar> out(static_cast<Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int k = indices[i];
    if (k < 0 || k >= table.rows()) throw ValidationError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = table.value().row(k);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return make_op<Scalar>(std::move(out), {table}, [idx = std::move(idx)](Node<Scalar>& n) {
    Matrix<Scalar>& g = in(n, 0).grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Index>(i));
  });
}

template <typename Scalar>
Tensor<Scalar> straight_through(const Tensor<Scalar>& z, const Tensor<Scalar>& zq) {
  require_same_shape(z, zq, "straight_through");
  return make_op<Scalar>(zq.value(), {z}, [](Node<Scalar>& n) { in(n, 0).accumulate(n.grad); });
}

// ---- convolutions --------------------------------------------------------

namespace {

template <typename Scalar>
Matrix<Scalar> im2col(const Matrix<Scalar>& x, const Conv2dGeometry& g) {
  const Index cin = x.cols();
  const Index oh = g.out_h(), ow = g.out_w();
  const Index width = g.taps() * cin;
  Matrix<Scalar> col = Matrix<Scalar>::Zero(oh * ow, width);
  const Scalar* src = x.data();
  Scalar* dst = col.data();
  for (Index a = 0; a < oh; ++a) {
    for (Index i = 0; i < g.kernel_h; ++i) {
      const Index h = a * g.stride_h + i * g.dilation_h - g.pad_top;
      if (h < 0 || h >= g.in_h) continue;
      for (Index b = 0; b < ow; ++b) {
        Scalar* row = dst + (a * ow + b) * width;
        for (Index j = 0; j < g.kernel_w; ++j) {
          const Index w = b * g.stride_w + j * g.dilation_w - g.pad_left;
          if (w < 0 || w >= g.in_w) continue;
          std::copy_n(src + (h * g.in_w + w) * cin, cin, row + (i * g.kernel_w + j) * cin);
        }
      }
    }
  }
  return col;
}

template <typename Scalar>
void col2im_add(const Matrix<Scalar>& col, const Conv2dGeometry& g, Matrix<Scalar>& x) {
  const Index cin = x.cols();
  const Index oh = g.out_h(), ow = g.out_w();
  const Index width = g.taps() * cin;
  const Scalar* src = col.data();
  Scalar* dst = x.data();
  for (Index a = 0; a < oh; ++a) {
    for (Index i = 0; i < g.kernel_h; ++i) {
      const Index h = a * g.stride_h + i * g.dilation_h - g.pad_top;
      if (h < 0 || h >= g.in_h) continue;
      for (Index b = 0; b < ow; ++b) {
        const Scalar* row = src + (a * ow + b) * width;
        for (Index j = 0; j < g.kernel_w; ++j) {
          const Index w = b * g.stride_w + j * g.dilation_w - g.pad_left;
          if (w < 0 || w >= g.in_w) continue;
          Scalar* out = dst + (h * g.in_w + w) * cin;
          const Scalar* in_row = row + (i * g.kernel_w + j) * cin;
          for (Index c = 0; c < cin; ++c) out[c] += in_row[c];
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Conv2dGeometry& geom,
                      const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  if (x.rows() != geom.in_h * geom.in_w) throw ValidationError("conv2d: input rows do not match geometry");
  if (weight.rows() != geom.taps() * x.cols()) {
    throw ValidationError("conv2d: weight rows " + std::to_string(weight.rows()) + " != taps*C_in " +
                          std::to_string(geom.taps() * x.cols()));
  }
  if (bias.rows() != 1 || bias.cols() != weight.cols()) throw ValidationError("conv2d: bias shape");
  if (geom.out_h() < 1 || geom.out_w() < 1) throw ValidationError("conv2d: input smaller than kernel");
  auto col = std::make_shared<Matrix<Scalar>>(im2col(x.value(), geom));
  Matrix<Scalar> out;
  out.noalias() = *col * weight.value();
  out.rowwise() += bias.value().row(0);
  return make_op<Scalar>(std::move(out), {x, weight, bias}, [col, geom](Node<Scalar>& n) {
    Node<Scalar>& xin = in(n, 0);
    Node<Scalar>& w = in(n, 1);
    if (w.requires_grad) w.grad_buffer().noalias() += col->transpose() * n.grad;
    if (in(n, 2).requires_grad) in(n, 2).accumulate(n.grad.colwise().sum());
    if (xin.requires_grad) {
      Matrix<Scalar> dcol;
      dcol.noalias() = n.grad * w.value.transpose();
      col2im_add(dcol, geom, xin.grad_buffer());
    }
  });
}

template <typename Scalar>
Tensor<Scalar> conv_transpose1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                const Tensor<Scalar>& bias, Index stride, Index trim_left,
                                Index out_len) {
  const Index cout = bias.cols();
  if (weight.rows() != x.cols() || cout == 0 || weight.cols() % cout != 0) {
    throw ValidationError("conv_transpose1d: weight shape does not match input/bias");
  }
  const Index kernel = weight.cols() / cout;
  const Index t_in = x.rows();
  Matrix<Scalar> y;
  y.noalias() = x.value() * weight.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(out_len, cout);
  for (Index t = 0; t < t_in; ++t) {
    for (Index j = 0; j < kernel; ++j) {
      const Index r = t * stride + j - trim_left;
      if (r >= 0 && r < out_len) out.row(r) += y.row(t).segment(j * cout, cout);
    }
  }
  out.rowwise() += bias.value().row(0);
  return make_op<Scalar>(std::move(out), {x, weight, bias},
                         [stride, trim_left, kernel, cout, t_in](Node<Scalar>& n) {
    Matrix<Scalar> dy = Matrix<Scalar>::Zero(t_in, kernel * cout);
    const Index out_len = n.grad.rows();
    for (Index t = 0; t < t_in; ++t) {
      for (Index j = 0; j < kernel; ++j) {
        const Index r = t * stride + j - trim_left;
        if (r >= 0 && r < out_len) dy.row(t).segment(j * cout, cout) = n.grad.row(r);
      }
    }
    Node<Scalar>& xin = in(n, 0);
    Node<Scalar>& w = in(n, 1);
    if (xin.requires_grad) xin.grad_buffer().noalias() += dy * w.value.transpose();
    if (w.requires_grad) w.grad_buffer().noalias() += xin.value.transpose() * dy;
    if (in(n, 2).requires_grad) in(n, 2).accumulate(n.grad.colwise().sum());
  });
}

template <typename Scalar>
Tensor<Scalar> depthwise_conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                const Tensor<Scalar>& bias, Index dilation) {
  const Index kernel = weight.rows();
  const Index t = x.rows();
  if (weight.cols() != x.cols() || bias.cols() != x.cols() || kernel % 2 == 0) {
    throw ValidationError("depthwise_conv1d: weight must be [odd kernel x C]");
  }
  const Index half = kernel / 2;
  Matrix<Scalar> out(t, x.cols());
  out.rowwise() = bias.value().row(0);
  for (Index j = 0; j < kernel; ++j) {
    const Index off = (j - half) * dilation;
    const Index t0 = std::max<Index>(0, -off);
    const Index t1 = std::min<Index>(t, t - off);
    if (t1 <= t0) continue;
    out.middleRows(t0, t1 - t0).array() +=
        x.value().middleRows(t0 + off, t1 - t0).array().rowwise() * weight.value().row(j).array();
  }
  return make_op<Scalar>(std::move(out), {x, weight, bias}, [kernel, half, dilation, t](Node<Scalar>& n) {
    Node<Scalar>& xin = in(n, 0);
    Node<Scalar>& w = in(n, 1);
    for (Index j = 0; j < kernel; ++j) {
      const Index off = (j - half) * dilation;
      const Index t0 = std::max<Index>(0, -off);
      const Index t1 = std::min<Index>(t, t - off);
      if (t1 <= t0) continue;
      const auto g = n.grad.middleRows(t0, t1 - t0);
      if (xin.requires_grad) {
        xin.grad_buffer().middleRows(t0 + off, t1 - t0).array() += g.array().rowwise() * w.value.row(j).array();
      }
      if (w.requires_grad) {
        w.grad_buffer().row(j) +=
            (g.array() * xin.value.middleRows(t0 + off, t1 - t0).array()).matrix().colwise().sum();
      }
    }
    if (in(n, 2).requires_grad) in(n, 2).accumulate(n.grad.colwise().sum());
  });
}

template <typename Scalar>
Tensor<Scalar> weight_norm(const Tensor<Scalar>& v, const Tensor<Scalar>& g) {
  if (g.rows() != 1 || g.cols() != v.cols()) throw ValidationError("weight_norm: gain must be [1 x C_out]");
  RowVector<Scalar> norms = v.value().colwise().norm();
  for (Index j = 0; j < norms.size(); ++j) norms(j) = std::max(norms(j), Scalar(1e-12));
  RowVector<Scalar> scale = g.value().row(0).cwiseQuotient(norms);
  Matrix<Scalar> out = v.value().array().rowwise() * scale.array();
  return make_op<Scalar>(std::move(out), {v, g}, [norms, scale](Node<Scalar>& n) {
    Node<Scalar>& vin = in(n, 0);
    Node<Scalar>& gin = in(n, 1);
    // dot_j = sum_i dw_ij * v_ij
    RowVector<Scalar> dot = n.grad.cwiseProduct(vin.value).colwise().sum();
    if (gin.requires_grad) gin.accumulate(dot.cwiseQuotient(norms));
    if (vin.requires_grad) {
      RowVector<Scalar> k = scale.cwiseProduct(dot).cwiseQuotient(norms.cwiseProduct(norms));
      Matrix<Scalar> dv = n.grad.array().rowwise() * scale.array();
      dv -= (vin.value.array().rowwise() * k.array()).matrix();
      vin.accumulate(dv);
    }
  });
}

// ---- spectral ------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> stft(const Tensor<Scalar>& x, Index fft_size, Index hop, bool center) {
  if (x.cols() != 1) throw ValidationError("stft: expected a [N x 1] signal");
  if (fft_size < 2 || fft_size % 2 != 0 || hop < 1 || hop > fft_size) {
    throw ValidationError("stft: need even fft_size >= 2 and 1 <= hop <= fft_size");
  }
  const Index n = x.rows();
  const Index pad = center ? fft_size / 2 : 0;
  if (n < fft_size || (center && n <= pad)) {
    throw ValidationError("stft: signal of " + std::to_string(n) + " samples is shorter than one " +
                          std::to_string(fft_size) + "-sample frame");
  }
  const Index padded_len = n + 2 * pad;
  const Index frames = (padded_len - fft_size) / hop + 1;
  const Index bins = fft_size / 2 + 1;

  std::vector<Scalar> padded(static_cast<std::size_t>(padded_len));
  for (Index i = 0; i < padded_len; ++i) {
    Index src = i - pad;
    if (src < 0) src = -src;
    if (src >= n) src = 2 * (n - 1) - src;
    padded[static_cast<std::size_t>(i)] = x.value()(src, 0);
  }
  auto window = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(fft_size));
  for (Index i = 0; i < fft_size; ++i) {
    (*window)[static_cast<std::size_t>(i)] =
        Scalar(0.5) - Scalar(0.5) * std::cos(Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(i) / Scalar(fft_size));
  }

  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<Scalar> frame(static_cast<std::size_t>(fft_size));
  std::vector<std::complex<Scalar>> spec;
  Matrix<Scalar> out(frames * bins, 2);
  for (Index f = 0; f < frames; ++f) {
    for (Index i = 0; i < fft_size; ++i) {
      frame[static_cast<std::size_t>(i)] =
          padded[static_cast<std::size_t>(f * hop + i)] * (*window)[static_cast<std::size_t>(i)];
    }
    fft.fwd(spec, frame);
    for (Index k = 0; k < bins; ++k) {
      out(f * bins + k, 0) = spec[static_cast<std::size_t>(k)].real();
      out(f * bins + k, 1) = spec[static_cast<std::size_t>(k)].imag();
    }
  }

  return make_op<Scalar>(std::move(out), {x},
                         [window, fft_size, hop, pad, n, frames, bins, padded_len](Node<Scalar>& node) {
    // d re_k / d x_i = w_i cos(theta), d im_k / d x_i = -w_i sin(theta), so
    // dx_i = w_i * Re(sum_k (g_re + i g_im) e^{+i theta}), an unscaled
    // inverse transform of the one-sided gradient spectrum.
    Eigen::FFT<Scalar> inv;
    inv.SetFlag(Eigen::FFT<Scalar>::Unscaled);
    std::vector<std::complex<Scalar>> g(static_cast<std::size_t>(fft_size));
    std::vector<std::complex<Scalar>> time;
    std::vector<Scalar> dpadded(static_cast<std::size_t>(padded_len), Scalar(0));
    for (Index f = 0; f < frames; ++f) {
      std::fill(g.begin(), g.end(), std::complex<Scalar>(0, 0));
      for (Index k = 0; k < bins; ++k) {
        g[static_cast<std::size_t>(k)] = {node.grad(f * bins + k, 0), node.grad(f * bins + k, 1)};
      }
      inv.inv(time, g);
      for (Index i = 0; i < fft_size; ++i) {
        dpadded[static_cast<std::size_t>(f * hop + i)] +=
            (*window)[static_cast<std::size_t>(i)] * time[static_cast<std::size_t>(i)].real();
      }
    }
    Matrix<Scalar>& dx = in(node, 0).grad_buffer();
    for (Index i = 0; i < padded_len; ++i) {
      Index src = i - pad;
      if (src < 0) src = -src;
      if (src >= n) src = 2 * (n - 1) - src;
      dx(src, 0) += dpadded[static_cast<std::size_t>(i)];
    }
  });
}

template <typename Scalar>
Tensor<Scalar> complex_abs(const Tensor<Scalar>& z) {
  if (z.cols() != 2) throw ValidationError("complex_abs: expected [n x 2]");
  Matrix<Scalar> out = z.value().rowwise().norm();
  return make_op<Scalar>(std::move(out), {z}, [](Node<Scalar>& n) {
    Matrix<Scalar>& g = in(n, 0).grad_buffer();
    const Matrix<Scalar>& v = in(n, 0).value;
    for (Index r = 0; r < v.rows(); ++r) {
      const Scalar m = n.value(r, 0);
      if (m <= Scalar(0)) continue;
      const Scalar k = n.grad(r, 0) / m;
      g(r, 0) += k * v(r, 0);
      g(r, 1) += k * v(r, 1);
    }
  });
}

#define SAC_INSTANTIATE_AUTODIFF(S)                                                              \
  template class Tensor<S>;                                                                      \
  template Tensor<S> make_op<S>(Matrix<S>, std::vector<Tensor<S>>, std::function<void(Node<S>&)>); \
  template Tensor<S> operator+ <S>(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> operator- <S>(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> operator- <S>(const Tensor<S>&);                                            \
  template Tensor<S> operator* <S>(const Tensor<S>&, S);                                         \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> add_scalar<S>(const Tensor<S>&, S);                                         \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                              \
  template Tensor<S> add_bias<S>(const Tensor<S>&, const Tensor<S>&);                            \
  template Tensor<S> elu<S>(const Tensor<S>&, S);                                                \
  template Tensor<S> gelu<S>(const Tensor<S>&);                                                  \
  template Tensor<S> tanh<S>(const Tensor<S>&);                                                  \
  template Tensor<S> leaky_relu<S>(const Tensor<S>&, S);                                         \
  template Tensor<S> square<S>(const Tensor<S>&);                                                \
  template Tensor<S> log_eps<S>(const Tensor<S>&, S);                                            \
  template Tensor<S> layer_norm<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);     \
  template Tensor<S> concat_cols<S>(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> slice_rows<S>(const Tensor<S>&, Index, Index);                              \
  template Tensor<S> slice_cols<S>(const Tensor<S>&, Index, Index);                              \
  template Tensor<S> pad_rows<S>(const Tensor<S>&, Index, Index);                                \
  template Tensor<S> repeat_rows<S>(const Tensor<S>&, Index);                                    \
  template Tensor<S> reshape<S>(const Tensor<S>&, Index, Index);                                 \
  template Tensor<S> sum<S>(const Tensor<S>&);                                                   \
  template Tensor<S> mean<S>(const Tensor<S>&);                                                  \
  template Tensor<S> l1_loss<S>(const Tensor<S>&, const Tensor<S>&);                             \
  template Tensor<S> mse_loss<S>(const Tensor<S>&, const Tensor<S>&);                            \
  template Tensor<S> mean_rows<S>(const Tensor<S>&);                                             \
  template Tensor<S> std_rows<S>(const Tensor<S>&);                                              \
  template Tensor<S> gather_rows<S>(const Tensor<S>&, std::span<const int>);                     \
  template Tensor<S> straight_through<S>(const Tensor<S>&, const Tensor<S>&);                    \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Conv2dGeometry&, const Tensor<S>&,        \
                               const Tensor<S>&);                                                \
  template Tensor<S> conv_transpose1d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,   \
                                         Index, Index, Index);                                   \
  template Tensor<S> depthwise_conv1d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,   \
                                         Index);                                                 \
  template Tensor<S> weight_norm<S>(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> stft<S>(const Tensor<S>&, Index, Index, bool);                              \
  template Tensor<S> complex_abs<S>(const Tensor<S>&);

SAC_INSTANTIATE_AUTODIFF(float)
SAC_INSTANTIATE_AUTODIFF(double)

#undef SAC_INSTANTIATE_AUTODIFF

}  // namespace sac::ad
