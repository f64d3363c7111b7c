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

#ifndef SAC_COMMON_HPP_
#define SAC_COMMON_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sac {

// Activations are stored time-major: one row per frame (or spatial
// position), one column per channel.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

// Raised when caller-supplied data or configuration violates a contract.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a computation fails at run time (I/O, non-finite losses).
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSampleRate = 16000;
inline constexpr int kSemanticHopSamples = 320;      // 50 Hz feature rate
inline constexpr int kSemanticPoolFactor = 4;        // 50 Hz -> 12.5 Hz
inline constexpr int kSemanticTokenHopSamples = 1280;

}  // namespace sac

#endif  // SAC_COMMON_HPP_
