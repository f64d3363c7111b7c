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

#ifndef SAC_OBJECTIVES_HPP_
#define SAC_OBJECTIVES_HPP_

#include <string>
#include <utility>

#include "sac/config.hpp"
#include "sac/discriminators.hpp"
#include "sac/signal.hpp"

namespace sac {

// Per-term generator losses (unweighted) and their weighted total.
struct LossBreakdown {
  double recon = 0.0;
  double vq = 0.0;
  double adv = 0.0;
  double feat = 0.0;
  double sem = 0.0;
  double spk = 0.0;
  double total = 0.0;
};

// L1 on linear magnitudes plus L1 on log magnitudes for one resolution.
template <typename Scalar>
ad::Tensor<Scalar> spectral_distance(const ad::Tensor<Scalar>& linear_ref, const ad::Tensor<Scalar>& linear_est,
                                     const ad::Tensor<Scalar>& log_ref, const ad::Tensor<Scalar>& log_est);

// Mean over the configured FFT sizes (hop fft/4) of spectral_distance. The
// log branch is mel-warped when cfg.mel_on_log is set. Throws
// ValidationError on length mismatch.
template <typename Scalar>
ad::Tensor<Scalar> recon_loss(const ad::Tensor<Scalar>& reference, const ad::Tensor<Scalar>& estimate,
                              const ReconConfig& cfg, int sample_rate = kSampleRate);

// Least-squares GAN. Each score map is averaged, then the maps are averaged.
// Throws ValidationError on empty or mismatched lists.
template <typename Scalar>
ad::Tensor<Scalar> discriminator_loss(const DiscriminatorOutput<Scalar>& real, const DiscriminatorOutput<Scalar>& fake);
template <typename Scalar>
ad::Tensor<Scalar> generator_adversarial_loss(const DiscriminatorOutput<Scalar>& fake);
// (discriminator loss, generator adversarial loss) as plain numbers.
template <typename Scalar>
std::pair<double, double> adversarial_losses(const DiscriminatorOutput<Scalar>& real,
                                             const DiscriminatorOutput<Scalar>& fake);

// Mean over sub-discriminators of the mean over layers of the L1 distance
// between activations. Real activations are treated as constants.
template <typename Scalar>
ad::Tensor<Scalar> feature_matching(const DiscriminatorOutput<Scalar>& real, const DiscriminatorOutput<Scalar>& fake);

// Weighted sum of the six terms. Throws RuntimeError naming the first
// non-finite term.
double generator_total(const LossBreakdown& terms, const LossWeights& weights);

}  // namespace sac

#endif  // SAC_OBJECTIVES_HPP_
