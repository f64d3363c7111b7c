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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "sac/discriminators.hpp"
#include "sac/objectives.hpp"
#include "test_util.hpp"

using namespace sac;
using namespace sac::testing;

namespace {

DiscriminatorConfig narrow_config() {
  DiscriminatorConfig c;
  c.width_scale = 0.0625;
  return c;
}

DiscriminatorOutput<double> constant_output(const std::vector<std::pair<Index, double>>& maps) {
  DiscriminatorOutput<double> out;
  for (const auto& [n, v] : maps) out.scores.emplace_back(MatD::Constant(n, 1, v));
  return out;
}

double nonzero_grad_count(const nn::ParamSet<double>& ps) {
  double count = 0;
  for (const auto& [name, t] : ps.items()) {
    if (t.has_grad() && !t.grad().isZero(0)) ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("period framing") {
  CHECK(period_frames(38400, 7) == 5486);
  for (Index n : {1, 6, 7, 8, 38400, 38401}) {
    for (int p : {2, 3, 5, 7, 11}) {
      const Index f = period_frames(n, p);
      CHECK(f * p >= n);
      CHECK(f * p - n < p);
    }
  }
}

TEST_CASE("discriminator structure and determinism") {
  const Discriminators<double> d(narrow_config(), 1);
  const TensorD w(random_matrix(4096, 1, 2, 0.1));
  const auto mpd = d.mpd(w);
  const auto spec = d.msstft(w);
  CHECK(mpd.scores.size() == 5);
  CHECK(spec.scores.size() == 3);
  const auto all = d(w);
  REQUIRE(all.scores.size() == 8);
  REQUIRE(all.features.size() == 8);
  for (const auto& f : all.features) CHECK(f.size() >= 1);
  CHECK(d(TensorD(random_matrix(6000, 1, 3))).scores.size() == 8);

  const auto again = d(w);
  for (std::size_t i = 0; i < all.scores.size(); ++i) CHECK(all.scores[i].value() == again.scores[i].value());
  const TensorD silence(MatD::Zero(4096, 1));
  const auto z1 = d(silence), z2 = d(silence);
  for (std::size_t i = 0; i < z1.scores.size(); ++i) {
    CHECK(z1.scores[i].value() == z2.scores[i].value());
    CHECK(z1.scores[i].value().allFinite());
  }
  CHECK(feature_matching(all, again).item() == 0.0);

  const Discriminators<double> same_seed(narrow_config(), 1);
  CHECK(same_seed(w).scores[0].value() == all.scores[0].value());
  CHECK_THROWS_AS(d.msstft(TensorD(MatD::Zero(2047, 1))), ValidationError);
  CHECK_THROWS_AS(d.mpd(TensorD(MatD::Zero(0, 1))), ValidationError);
  DiscriminatorConfig dup = narrow_config();
  dup.periods = {2, 2};
  CHECK_THROWS_AS(Discriminators<double>(dup, 1), ValidationError);
}

TEST_CASE("generator-side losses leave discriminator weights untouched") {
  const Discriminators<double> d(narrow_config(), 4);
  const auto params = d.parameters();
  const TensorD real(random_matrix(2048, 1, 5, 0.1));
  const TensorD fake(random_matrix(2048, 1, 6, 0.1), true);

  const auto r = d(real, true);
  const auto f = d(fake, true);
  (generator_adversarial_loss(f) + feature_matching(r, f)).backward();
  CHECK(nonzero_grad_count(params) == 0);
  CHECK(fake.has_grad());
  CHECK_FALSE(fake.grad().isZero(0));

  const auto rd = d(real);
  const auto fd = d(fake.detach());
  discriminator_loss(rd, fd).backward();
  CHECK(nonzero_grad_count(params) > 0);
}

TEST_CASE("spectral distance on a one-bin toy") {
  const double eps = kLogEpsilon;
  const TensorD two(MatD::Constant(1, 1, 2.0)), five(MatD::Constant(1, 1, 5.0));
  const TensorD log_two(MatD::Constant(1, 1, std::log(2.0 + eps)));
  const TensorD log_five(MatD::Constant(1, 1, std::log(5.0 + eps)));
  const double expect = 3.0 + std::abs(std::log(2.0 + eps) - std::log(5.0 + eps));
  CHECK(spectral_distance(two, five, log_two, log_five).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("reconstruction loss") {
  ReconConfig cfg;
  const TensorD x(random_matrix(4096, 1, 7, 0.1));
  CHECK(recon_loss(x, x, cfg).item() == 0.0);
  const TensorD z(MatD::Zero(4096, 1));
  CHECK(recon_loss(z, z, cfg).item() == 0.0);
  CHECK(recon_loss(x, TensorD(random_matrix(4096, 1, 8, 0.1)), cfg).item() > 0.0);
  CHECK_THROWS_AS(recon_loss(x, TensorD(MatD::Zero(4000, 1)), cfg), ValidationError);

  SUBCASE("gradient matches finite differences") {
    ReconConfig small;
    small.ffts = {64, 128};
    small.mel_bins = 16;
    const TensorD ref(random_matrix(200, 1, 9, 0.3));
    const double err = gradient_error([&](const std::vector<TensorD>& in) { return recon_loss(ref, in[0], small); },
                                      {random_matrix(200, 1, 10, 0.3)});
    CHECK(err < 1e-3);
  }
}

TEST_CASE("least-squares adversarial losses") {
  const auto [ld, ladv] = adversarial_losses(constant_output({{1, 0.5}}), constant_output({{1, 0.25}}));
  CHECK(ld == doctest::Approx(0.3125).epsilon(1e-15));
  CHECK(ladv == doctest::Approx(0.5625).epsilon(1e-15));

  const auto [ld_opt, ladv_opt] =
      adversarial_losses(constant_output({{5, 1.0}, {3, 1.0}}), constant_output({{5, 0.0}, {3, 0.0}}));
  CHECK(ld_opt == 0.0);
  CHECK(ladv_opt == 1.0);
  CHECK(adversarial_losses(constant_output({{4, 0.3}}), constant_output({{4, 1.0}})).second == 0.0);

  DiscriminatorOutput<double> real, fake;
  real.scores = {TensorD(random_matrix(7, 1, 11)), TensorD(random_matrix(3, 2, 12))};
  fake.scores = {TensorD(random_matrix(7, 1, 13)), TensorD(random_matrix(3, 2, 14))};
  double oracle_d = 0, oracle_g = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    const MatD& r = real.scores[i].value();
    const MatD& f = fake.scores[i].value();
    oracle_d += ((r.array() - 1).square().mean() + f.array().square().mean()) / 2;
    oracle_g += (f.array() - 1).square().mean() / 2;
  }
  CHECK(discriminator_loss(real, fake).item() == doctest::Approx(oracle_d).epsilon(1e-12));
  CHECK(generator_adversarial_loss(fake).item() == doctest::Approx(oracle_g).epsilon(1e-12));

  CHECK_THROWS_AS(adversarial_losses(DiscriminatorOutput<double>{}, fake), ValidationError);
  CHECK_THROWS_AS(adversarial_losses(constant_output({{1, 0.0}}), fake), ValidationError);
}

TEST_CASE("feature matching") {
  DiscriminatorOutput<double> a, b;
  a.features = {{TensorD(random_matrix(5, 3, 15)), TensorD(random_matrix(2, 4, 16))},
                {TensorD(random_matrix(9, 1, 17)), TensorD(random_matrix(6, 2, 18))}};
  b.features = {{TensorD(random_matrix(5, 3, 19)), TensorD(random_matrix(2, 4, 20))},
                {TensorD(random_matrix(9, 1, 21)), TensorD(random_matrix(6, 2, 22))}};
  double oracle = 0;
  for (std::size_t d = 0; d < 2; ++d) {
    double sub = 0;
    for (std::size_t l = 0; l < 2; ++l) {
      const MatD& x = a.features[d][l].value();
      const MatD& y = b.features[d][l].value();
      double acc = 0;
      for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < x.cols(); ++j) acc += std::abs(x(i, j) - y(i, j));
      }
      sub += acc / static_cast<double>(x.size());
    }
    oracle += sub / 2;
  }
  oracle /= 2;
  CHECK(feature_matching(a, b).item() == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(feature_matching(a, a).item() == 0.0);

  DiscriminatorOutput<double> one, shifted;
  one.features = {{TensorD(random_matrix(4, 4, 23))}};
  shifted.features = {{TensorD(MatD(one.features[0][0].value().array() + 1.0))}};
  CHECK(feature_matching(one, shifted).item() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(feature_matching(a, one), ValidationError);
  DiscriminatorOutput<double> wrong_shape;
  wrong_shape.features = {{TensorD(random_matrix(4, 3, 24))}};
  CHECK_THROWS_AS(feature_matching(one, wrong_shape), ValidationError);
}

TEST_CASE("weighted generator total") {
  const LossWeights w;
  CHECK(generator_total(LossBreakdown{}, w) == 0.0);
  LossBreakdown ones{1, 1, 1, 1, 1, 1, 0};
  CHECK(generator_total(ones, w) == 1029.0);

  LossBreakdown t{0.7, 0.02, 0.9, 0.3, 0.004, 0.05, 0};
  const double base = generator_total(t, w);
  CHECK(base == doctest::Approx(15 * 0.7 + 0.02 + 0.9 + 2 * 0.3 + 1000 * 0.004 + 10 * 0.05).epsilon(1e-15));
  LossWeights no_spk = w;
  no_spk.spk = 0;
  CHECK(base - generator_total(t, no_spk) == doctest::Approx(10 * 0.05).epsilon(1e-12));
  LossWeights doubled = w;
  doubled.recon *= 2;
  CHECK(generator_total(t, doubled) - base == doctest::Approx(15 * 0.7).epsilon(1e-12));

  LossBreakdown bad = t;
  bad.sem = std::numeric_limits<double>::quiet_NaN();
  try {
    generator_total(bad, w);
    FAIL("expected a non-finite error");
  } catch (const RuntimeError& e) {
    CHECK(std::string(e.what()).find("sem") != std::string::npos);
  }
  bad.sem = 0;
  bad.feat = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(generator_total(bad, w), RuntimeError);
}
