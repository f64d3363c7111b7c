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

#include "sac/objectives.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace sac {

namespace {

template <typename Scalar>
const Matrix<Scalar>& cached_filterbank(int mel_bins, Index fft_size, int sample_rate) {
  static std::mutex mu;
  static std::map<std::tuple<int, Index, int>, Matrix<Scalar>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(mel_bins, fft_size, sample_rate);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, mel_filterbank<Scalar>(mel_bins, fft_size, sample_rate)).first;
  return it->second;
}

template <typename Scalar>
std::pair<ad::Tensor<Scalar>, ad::Tensor<Scalar>> linear_and_log(const ad::Tensor<Scalar>& x, Index fft,
                                                                  const ReconConfig& cfg, int sample_rate) {
  SpectrogramScale scale;
  scale.fft_size = fft;
  scale.hop = fft / 4;
  const Index frames = scale.frame_count(x.rows());
  auto mag = ad::reshape(ad::complex_abs(ad::stft(x, fft, scale.hop, true)), frames, fft / 2 + 1);
  auto warped = cfg.mel_on_log
                    ? ad::matmul(mag, ad::Tensor<Scalar>(cached_filterbank<Scalar>(cfg.mel_bins, fft, sample_rate)))
                    : mag;
  return {mag, ad::log_eps(warped, static_cast<Scalar>(kLogEpsilon))};
}

template <typename Scalar>
void check_structure(const DiscriminatorOutput<Scalar>& real, const DiscriminatorOutput<Scalar>& fake) {
  if (real.scores.empty() || fake.scores.empty()) throw ValidationError("discriminator output is empty");
  if (real.scores.size() != fake.scores.size()) {
    throw ValidationError("real and fake outputs have " + std::to_string(real.scores.size()) + " and " +
                          std::to_string(fake.scores.size()) + " score maps");
  }
}

}  // namespace

template <typename Scalar>
ad::Tensor<Scalar> spectral_distance(const ad::Tensor<Scalar>& linear_ref, const ad::Tensor<Scalar>& linear_est,
                                     const ad::Tensor<Scalar>& log_ref, const ad::Tensor<Scalar>& log_est) {
  return ad::l1_loss(linear_est, linear_ref) + ad::l1_loss(log_est, log_ref);
}

template <typename Scalar>
ad::Tensor<Scalar> recon_loss(const ad::Tensor<Scalar>& reference, const ad::Tensor<Scalar>& estimate,
                              const ReconConfig& cfg, int sample_rate) {
  if (reference.rows() != estimate.rows() || reference.cols() != 1 || estimate.cols() != 1) {
    throw ValidationError("reconstruction loss needs equal-length signals, got " + std::to_string(reference.rows()) +
                          " and " + std::to_string(estimate.rows()) + " samples");
  }
  cfg.validate();
  const auto ref = reference.detach();
  ad::Tensor<Scalar> total;
  for (int fft : cfg.ffts) {
    auto [lin_ref, log_ref] = linear_and_log(ref, fft, cfg, sample_rate);
    auto [lin_est, log_est] = linear_and_log(estimate, fft, cfg, sample_rate);
    auto term = spectral_distance(lin_ref, lin_est, log_ref, log_est);
    total = total.defined() ? total + term : term;
  }
  return total * (Scalar(1) / static_cast<Scalar>(cfg.ffts.size()));
}

template <typename Scalar>
ad::Tensor<Scalar> discriminator_loss(const DiscriminatorOutput<Scalar>& real, const DiscriminatorOutput<Scalar>& fake) {
  check_structure(real, fake);
  ad::Tensor<Scalar> total;
  for (std::size_t i = 0; i < real.scores.size(); ++i) {
    auto term = ad::mean(ad::square(ad::add_scalar(real.scores[i], Scalar(-1)))) + ad::mean(ad::square(fake.scores[i]));
    total = total.defined() ? total + term : term;
  }
  return total * (Scalar(1) / static_cast<Scalar>(real.scores.size()));
}

template <typename Scalar>
ad::Tensor<Scalar> generator_adversarial_loss(const DiscriminatorOutput<Scalar>& fake) {
  if (fake.scores.empty()) throw ValidationError("discriminator output is empty");
  ad::Tensor<Scalar> total;
  for (const auto& s : fake.scores) {
    auto term = ad::mean(ad::square(ad::add_scalar(s, Scalar(-1))));
    total = total.defined() ? total + term : term;
  }
  return total * (Scalar(1) / static_cast<Scalar>(fake.scores.size()));
}

template <typename Scalar>
std::pair<double, double> adversarial_losses(const DiscriminatorOutput<Scalar>& real,
                                             const DiscriminatorOutput<Scalar>& fake) {
  return {static_cast<double>(discriminator_loss(real, fake).item()),
          static_cast<double>(generator_adversarial_loss(fake).item())};
}

template <typename Scalar>
ad::Tensor<Scalar> feature_matching(const DiscriminatorOutput<Scalar>& real, const DiscriminatorOutput<Scalar>& fake) {
  if (real.features.empty() || real.features.size() != fake.features.size()) {
    throw ValidationError("feature lists differ: " + std::to_string(real.features.size()) + " vs " +
                          std::to_string(fake.features.size()) + " sub-discriminators");
  }
  ad::Tensor<Scalar> total;
  for (std::size_t d = 0; d < real.features.size(); ++d) {
    const auto& r = real.features[d];
    const auto& f = fake.features[d];
    if (r.empty() || r.size() != f.size()) {
      throw ValidationError("sub-discriminator " + std::to_string(d) + " has " + std::to_string(r.size()) + " vs " +
                            std::to_string(f.size()) + " feature layers");
    }
    ad::Tensor<Scalar> sub;
    for (std::size_t l = 0; l < r.size(); ++l) {
      if (r[l].rows() != f[l].rows() || r[l].cols() != f[l].cols()) {
        throw ValidationError("feature shape mismatch at sub-discriminator " + std::to_string(d) + ", layer " +
                              std::to_string(l));
      }
      auto term = ad::l1_loss(f[l], r[l].detach());
      sub = sub.defined() ? sub + term : term;
    }
    sub = sub * (Scalar(1) / static_cast<Scalar>(r.size()));
    total = total.defined() ? total + sub : sub;
  }
  return total * (Scalar(1) / static_cast<Scalar>(real.features.size()));
}

double generator_total(const LossBreakdown& t, const LossWeights& w) {
  const std::pair<const char*, double> terms[] = {{"recon", t.recon}, {"vq", t.vq},   {"adv", t.adv},
                                                  {"feat", t.feat},   {"sem", t.sem}, {"spk", t.spk}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) throw RuntimeError(std::string("non-finite loss term '") + name + "'");
  }
  return w.recon * t.recon + w.vq * t.vq + w.adv * t.adv + w.feat * t.feat + w.sem * t.sem + w.spk * t.spk;
}

#define SAC_INSTANTIATE_OBJECTIVES(S)                                                                          \
  template ad::Tensor<S> spectral_distance<S>(const ad::Tensor<S>&, const ad::Tensor<S>&, const ad::Tensor<S>&, \
                                              const ad::Tensor<S>&);                                           \
  template ad::Tensor<S> recon_loss<S>(const ad::Tensor<S>&, const ad::Tensor<S>&, const ReconConfig&, int);   \
  template ad::Tensor<S> discriminator_loss<S>(const DiscriminatorOutput<S>&, const DiscriminatorOutput<S>&);   \
  template ad::Tensor<S> generator_adversarial_loss<S>(const DiscriminatorOutput<S>&);                         \
  template std::pair<double, double> adversarial_losses<S>(const DiscriminatorOutput<S>&,                      \
                                                           const DiscriminatorOutput<S>&);                     \
  template ad::Tensor<S> feature_matching<S>(const DiscriminatorOutput<S>&, const DiscriminatorOutput<S>&);

SAC_INSTANTIATE_OBJECTIVES(float)
SAC_INSTANTIATE_OBJECTIVES(double)

#undef SAC_INSTANTIATE_OBJECTIVES

}  // namespace sac
