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
#include <random>
#include <set>

#include "sac/quantization.hpp"
#include "test_util.hpp"

using namespace sac;
using namespace sac::testing;

namespace {

std::vector<int> brute_force_nearest(const Matrix<float>& queries, const Matrix<float>& table) {
  std::vector<int> out;
  for (Index q = 0; q < queries.rows(); ++q) {
    float best = std::numeric_limits<float>::infinity();
    int arg = 0;
    for (Index k = 0; k < table.rows(); ++k) {
      float d = 0;
      for (Index c = 0; c < table.cols(); ++c) {
        const float diff = queries(q, c) - table(k, c);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = static_cast<int>(k);
      }
    }
    out.push_back(arg);
  }
  return out;
}

}  // namespace

TEST_CASE("quantize picks the nearest entry") {
  Matrix<float> entries(2, 2);
  entries << 0, 0, 1, 1;
  Codebook<float> cb(entries, false);
  Matrix<float> q(1, 2);
  q << 0.9f, 0.8f;
  CHECK(quantize(q, cb).indices[0] == 1);
  const auto exact = quantize(Matrix<float>(entries.row(0)), cb);
  CHECK(exact.indices[0] == 0);
  CHECK(exact.values == entries.row(0));
}

TEST_CASE("quantize ties go to the lowest index") {
  Matrix<float> entries(3, 1);
  entries << 1, -1, 1;
  Codebook<float> cb(entries, false);
  CHECK(quantize(Matrix<float>(Matrix<float>::Zero(1, 1)), cb).indices[0] == 0);
}

TEST_CASE("quantize matches a brute-force scan") {
  std::mt19937_64 rng(3);
  Codebook<float> cb(32, 8, rng, true);
  cb.entries().mutable_value() = random_matrix(32, 8, 4).cast<float>();
  const Matrix<float> queries = random_matrix(64, 8, 5).cast<float>();
  CHECK(quantize(queries, cb).indices == brute_force_nearest(queries, cb.entries().value()));
}

TEST_CASE("quantize rejects malformed latents") {
  std::mt19937_64 rng(1);
  Codebook<float> cb(4, 2, rng, true);
  CHECK_THROWS_AS(quantize(Matrix<float>(Matrix<float>::Zero(2, 3)), cb), ValidationError);
  Matrix<float> bad = Matrix<float>::Zero(2, 2);
  bad(1, 1) = NAN;
  CHECK_THROWS_AS(quantize(bad, cb), ValidationError);
}

TEST_CASE("codebook initialisation range") {
  std::mt19937_64 rng(2);
  Codebook<double> cb(16, 4, rng, true);
  CHECK(cb.entries().value().cwiseAbs().maxCoeff() <= 1.0 / 16);
  CHECK(cb.entries().requires_grad());
  CHECK(cb.usage().size() == 16);
  Codebook<double> frozen(16, 4, rng, false);
  CHECK_FALSE(frozen.entries().requires_grad());
}

TEST_CASE("straight-through through quantize matches finite differences") {
  Matrix<double> entries(2, 1);
  entries << -1.0, 1.0;
  Codebook<double> cb(entries, false);
  const MatD w = random_matrix(1, 1, 6);
  auto downstream = [&](const TensorD& z) {
    const auto q = quantize(z.value(), cb);
    return ad::sum(ad::mul(ad::square(ad::straight_through(z, TensorD(q.values))), TensorD(w)) + z * 0.5);
  };
  MatD z0(1, 1);
  z0 << 0.3;
  TensorD z(z0, true);
  downstream(z).backward();
  const double h = 1e-3;
  auto at = [&](double v) { return downstream(TensorD(MatD::Constant(1, 1, v))).item(); };
  const double zq = 1.0;
  const double analytic_identity_path = 2 * zq * w(0, 0) + 0.5;
  CHECK(z.grad()(0, 0) == doctest::Approx(analytic_identity_path).epsilon(1e-4));
  const double fd = (at(0.3 + h) - at(0.3 - h)) / (2 * h);
  CHECK(fd == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("vq_loss values and gradient split") {
  TensorD z(MatD::Zero(1, 1), true), zq(MatD::Constant(1, 1, 2.0), true);
  const TensorD loss = vq_loss(z, zq, 0.25, 4.0);
  CHECK(loss.item() == doctest::Approx(17.0));
  loss.backward();
  CHECK(z.grad()(0, 0) == doctest::Approx(2 * 0.25 * (0.0 - 2.0)));
  CHECK(zq.grad()(0, 0) == doctest::Approx(2 * 4.0 * (2.0 - 0.0)));
  const MatD same = random_matrix(3, 2, 7);
  CHECK(vq_loss(TensorD(same), TensorD(same), 0.25, 4.0).item() == 0.0);

  const MatD zv = random_matrix(4, 3, 8), table = random_matrix(5, 3, 9);
  const std::vector<int> idx{1, 4, 4, 0};
  TensorD tz(zv, true), tt(table, true);
  vq_loss(tz, ad::gather_rows(tt, std::span<const int>(idx)), 0.25, 4.0).backward();
  MatD zq_rows(4, 3);
  for (Index r = 0; r < 4; ++r) zq_rows.row(r) = table.row(idx[static_cast<std::size_t>(r)]);
  CHECK(tz.grad().isApprox(2 * 0.25 * (zv - zq_rows) / 12.0, 1e-12));
  const double err = gradient_error(
      [&](const std::vector<TensorD>& in) {
        return ad::mse_loss(TensorD(zv), ad::gather_rows(in[0], std::span<const int>(idx))) * 4.0;
      },
      {table});
  CHECK(err < 1e-6);
  TensorD tt_fd(table, true);
  ad::mse_loss(TensorD(zv), ad::gather_rows(tt_fd, std::span<const int>(idx))).backward();
  CHECK(tt.grad().isApprox(tt_fd.grad() * 4.0, 1e-12));
}

TEST_CASE("dead-code reinitialisation") {
  std::mt19937_64 rng(10);
  Codebook<float> cb(8, 2, rng, true);
  const Matrix<float> before = cb.entries().value();
  const Matrix<float> latents = random_matrix(8, 2, 11).cast<float>();
  CHECK(reinit_dead_codes(cb, latents, 5, 1) == 0);
  CHECK(cb.entries().value() == before);

  for (int s = 0; s < 5; ++s) cb.record_step(std::vector<int>{});
  CHECK(reinit_dead_codes(cb, latents, 5, 1) == 8);
  for (Index k = 0; k < 8; ++k) {
    bool found = false;
    for (Index r = 0; r < 8; ++r) found = found || cb.entries().value().row(k) == latents.row(r);
    CHECK(found);
  }
  for (auto u : cb.usage()) CHECK(u == 0);
  const auto q = quantize(latents, cb);
  int exact_hits = 0;
  for (std::size_t r = 0; r < q.indices.size(); ++r) {
    exact_hits += q.values.row(static_cast<Index>(r)) == latents.row(static_cast<Index>(r)) ? 1 : 0;
  }
  CHECK(std::set<int>(q.indices.begin(), q.indices.end()).size() >= 1);
  CHECK(exact_hits >= 1);
}

TEST_CASE("usage counters track idle steps") {
  std::mt19937_64 rng(12);
  Codebook<float> cb(4, 2, rng, true);
  cb.record_step(std::vector<int>{1, 1});
  cb.record_step(std::vector<int>{2});
  CHECK(cb.usage() == std::vector<std::int64_t>{2, 1, 0, 2});
  CHECK_THROWS_AS(cb.record_step(std::vector<int>{4}), ValidationError);
}

TEST_CASE("codebook statistics") {
  const std::vector<int> same(10, 3);
  auto s = codebook_stats(same, 8);
  CHECK(s.utilization == doctest::Approx(1.0 / 8));
  CHECK(s.perplexity == doctest::Approx(1.0));
  std::vector<int> uniform;
  for (int k = 0; k < 8; ++k) uniform.push_back(k);
  s = codebook_stats(uniform, 8);
  CHECK(s.utilization == 1.0);
  CHECK(s.perplexity == doctest::Approx(8.0));
  s = codebook_stats(std::vector<int>{0, 0, 1, 2}, 4);
  const double h = -(0.5 * std::log(0.5) + 2 * 0.25 * std::log(0.25));
  CHECK(s.perplexity == doctest::Approx(std::exp(h)));
  CHECK(s.perplexity == doctest::Approx(2.828).epsilon(1e-3));
  CHECK(s.utilization == 0.75);
  CHECK_THROWS_AS(codebook_stats(std::vector<int>{}, 4), ValidationError);
}
