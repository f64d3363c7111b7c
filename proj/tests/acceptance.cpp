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

// Acceptance suite: one pass/fail line per criterion. Pass criterion ids as
// arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sac/bitstream.hpp"
#include "sac/codec.hpp"
#include "sac/evaluation.hpp"
#include "sac/model.hpp"
#include "sac/objectives.hpp"
#include "sac/synthetic.hpp"
#include "sac/training.hpp"

using namespace sac;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

Matrix<double> gaussian(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ModelConfig desk_config(std::vector<int> strides) {
  ModelConfig c;
  c.acoustic_strides = std::move(strides);
  c.base_channels = 8;
  c.d_model = 32;
  c.d_code = 8;
  c.codebook_size_acoustic = 64;
  c.codebook_size_semantic = 64;
  c.d_sem = 16;
  c.semantic_channels = 16;
  c.speaker_hidden = 16;
  c.d_spk = 8;
  c.adapter_blocks = 1;
  c.prenet_blocks = 1;
  return c;
}

std::shared_ptr<const SemanticProvider> surrogate(const ModelConfig& c) {
  return std::make_shared<SurrogateSemanticProvider>(c.d_sem, c.semantic_channels, c.semantic_seed);
}

template <typename Scalar>
Codebook<Scalar> frozen_codebook(const ModelConfig& c, std::uint64_t seed) {
  return Codebook<Scalar>(gaussian(c.semantic_entries(), c.d_sem, seed).cast<Scalar>(), false);
}

// 1. Bitrates of the three published operating points.
Outcome bitrates() {
  ModelConfig high, low;
  high.acoustic_strides = {2, 4, 5, 8};
  low.acoustic_strides = {2, 2, 4, 5, 8};
  SacHeader semantic_only;
  semantic_only.acoustic_rate_centi_hz = 0;
  semantic_only.acoustic_codebook_size = 0;
  const double h = bitrate(high), l = bitrate(low), s = bitrate(semantic_only);
  return {h == 875.0 && l == 525.0 && s == 175.0, fmt("high %.1f, low %.1f, semantic-only %.1f bps", h, l, s)};
}

// 2. Token counts for 2.4 s of audio.
Outcome rate_arithmetic() {
  const Waveform w = synthesize_corpus(1, 2.4, 11).front().wave;
  std::ostringstream detail;
  bool pass = w.size() == 38400;
  for (const auto& [strides, expected] : std::vector<std::pair<std::vector<int>, std::size_t>>{
           {{2, 2, 4, 5, 8}, 60}, {{2, 4, 5, 8}, 120}}) {
    ModelConfig c = desk_config(strides);
    Codec codec(SacModel<float>(c, frozen_codebook<float>(c, 3)), surrogate(c));
    const SacStream s = codec.encode(w);
    pass = pass && s.semantic_tokens.size() == 30 && s.acoustic_tokens.size() == expected && c.reduction() ==
           static_cast<int>(38400 / expected);
    detail << "stride product " << c.reduction() << ": " << s.semantic_tokens.size() << " semantic + "
           << s.acoustic_tokens.size() << " acoustic; ";
  }
  std::string d = detail.str();
  d.resize(d.size() - 2);
  return {pass, d};
}

// 3. Nearest-entry lookup against an exhaustive scan.
Outcome quantizer_oracle() {
  long agree = 0, total = 0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const Matrix<float> entries = gaussian(64, 8, 100 + trial).cast<float>();
    const Matrix<float> queries = gaussian(100, 8, 200 + trial, 1.5).cast<float>();
    const Codebook<float> cb(entries, true);
    const auto q = quantize(queries, cb);
    for (Index i = 0; i < queries.rows(); ++i) {
      int best = 0;
      float best_d = std::numeric_limits<float>::infinity();
      for (Index k = 0; k < 64; ++k) {
        float d = 0.0f;
        for (Index j = 0; j < 8; ++j) {
          const float diff = queries(i, j) - entries(k, j);
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      agree += q.indices[static_cast<std::size_t>(i)] == best;
      ++total;
    }
  }
  return {agree == total && total == 1000, fmt("%.0f / %.0f queries agree", static_cast<double>(agree),
                                              static_cast<double>(total))};
}

// 4. Straight-through gradients and the frozen semantic path.
Outcome straight_through() {
  using T = ad::Tensor<double>;
  const ModelConfig c = desk_config({4, 4, 4, 5});
  SacModel<double> m(c, frozen_codebook<double>(c, 5));
  const SurrogateSemanticProvider provider(c.d_sem, c.semantic_channels, c.semantic_seed);
  Waveform w = synthesize_corpus(1, 0.08, 12).front().wave;
  const Matrix<double> semantic = provider.extract(w).cast<double>();
  const Matrix<double> x0 = w.samples.cast<double>();
  const Matrix<double> probe = gaussian(x0.rows(), 1, 13);

  T x(x0, true);
  const auto r = m.forward(x, semantic);
  const T loss = ad::sum(ad::mul(r.reconstruction, T(probe)));
  loss.backward();
  const Matrix<double> offset = r.acoustic.code.value() - r.acoustic.latent.value();
  const Matrix<double> adapted = r.semantic_adapted.value();
  const double quantisation_gap = offset.norm();

  // Straight-through is the identity on the code-space latent with the
  // quantisation offset held fixed at its forward value.
  auto frozen_offset = [&](const Matrix<double>& input) {
    const T z = m.projection.down(m.encoder(T(input)));
    const T fused = m.prenet(m.projection.up(z + T(offset)), T(adapted));
    return ad::sum(ad::mul(m.decoder(fused), T(probe))).item();
  };
  const double value_gap = std::abs(frozen_offset(x0) - loss.item());

  const double h = 1e-6;
  std::vector<double> numeric, analytic;
  std::mt19937_64 pick(14);
  for (int k = 0; k < 200; ++k) {
    const Index i = static_cast<Index>(pick() % static_cast<std::uint64_t>(x0.rows()));
    Matrix<double> up = x0, down = x0;
    up(i) += h;
    down(i) -= h;
    numeric.push_back((frozen_offset(up) - frozen_offset(down)) / (2 * h));
    analytic.push_back(x.grad()(i));
  }
  auto params = m.parameters();
  for (auto& [name, t] : params.items()) {
    if (name.rfind("encoder", 0) != 0 || !t.has_grad()) continue;
    for (int k = 0; k < 8; ++k) {
      const Index i = static_cast<Index>(pick() % static_cast<std::uint64_t>(t.value().size()));
      const double orig = t.value().data()[i];
      t.mutable_value().data()[i] = orig + h;
      const double f_up = frozen_offset(x0);
      t.mutable_value().data()[i] = orig - h;
      const double f_down = frozen_offset(x0);
      t.mutable_value().data()[i] = orig;
      numeric.push_back((f_up - f_down) / (2 * h));
      analytic.push_back(t.grad().data()[i]);
    }
  }
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff += (numeric[i] - analytic[i]) * (numeric[i] - analytic[i]);
    norm += numeric[i] * numeric[i];
  }
  const double rel = std::sqrt(diff / norm);

  const bool codebook_untouched = !m.semantic_codebook.entries().requires_grad() &&
                                  (!m.semantic_codebook.entries().has_grad() ||
                                   m.semantic_codebook.entries().grad().isZero(0));
  bool provider_untouched = true;
  const auto provider_params = provider.parameters();
  for (const auto& [name, t] : provider_params.items()) {
    provider_untouched = provider_untouched && (!t.has_grad() || t.grad().isZero(0));
  }
  const bool pass = rel < 1e-3 && value_gap < 1e-9 * std::max(1.0, std::abs(loss.item())) && quantisation_gap > 0 &&
                    codebook_untouched && provider_untouched;
  return {pass, fmt("relative error %.2e over %.0f coordinates, quantisation offset norm %.3g", rel,
                    static_cast<double>(numeric.size()), quantisation_gap) +
                    (codebook_untouched && provider_untouched ? ", semantic path gradient exactly 0"
                                                              : ", semantic path received gradient")};
}

// 5. Weighted generator objective.
Outcome objective_audit() {
  const LossWeights w;
  const LossBreakdown ones{1, 1, 1, 1, 1, 1, 0};
  const double total = generator_total(ones, w);
  bool exact = total == 1029.0;
  const LossBreakdown t{0.75, 0.125, 0.5, 0.25, 0.0625, 0.375, 0};
  const double base = generator_total(t, w);
  const std::pair<double LossWeights::*, double LossBreakdown::*> terms[] = {
      {&LossWeights::recon, &LossBreakdown::recon}, {&LossWeights::vq, &LossBreakdown::vq},
      {&LossWeights::adv, &LossBreakdown::adv},     {&LossWeights::feat, &LossBreakdown::feat},
      {&LossWeights::sem, &LossBreakdown::sem},     {&LossWeights::spk, &LossBreakdown::spk}};
  for (const auto& [weight, term] : terms) {
    LossWeights doubled = w;
    doubled.*weight *= 2;
    exact = exact && generator_total(t, doubled) - base == w.*weight * (t.*term);
  }
  return {exact, fmt("unit losses give %.1f; doubling each of 6 weights adds exactly its term", total)};
}

// 6. Masked decoding ignores the dropped stream.
Outcome disentanglement() {
  bool pass = true;
  long trials = 0;
  for (const auto& strides : {std::vector<int>{2, 2, 4, 5, 8}, std::vector<int>{2, 4, 5, 8}}) {
    const ModelConfig c = desk_config(strides);
    const Codec codec(SacModel<float>(c, frozen_codebook<float>(c, 7)), surrogate(c));
    const SacStream s = codec.encode(synthesize_corpus(1, 1.0, 21).front().wave);
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 5; ++trial, ++trials) {
      SacStream other_ac = s, other_sem = s;
      for (auto& t : other_ac.acoustic_tokens) t = static_cast<int>(rng() % 64);
      for (auto& t : other_sem.semantic_tokens) t = static_cast<int>(rng() % 64);
      pass = pass && codec.decode(s, ReconstructionPattern::kSemanticOnly).samples ==
                         codec.decode(other_ac, ReconstructionPattern::kSemanticOnly).samples;
      pass = pass && codec.decode(s, ReconstructionPattern::kAcousticOnly).samples ==
                         codec.decode(other_sem, ReconstructionPattern::kAcousticOnly).samples;
      pass = pass && codec.decode(s).samples != codec.decode(other_ac).samples;
    }
  }
  return {pass, fmt("%.0f substitutions per pattern over both rates, outputs bit-identical", static_cast<double>(trials))};
}

// 7. Toy training run.
RunConfig toy_config() {
  RunConfig cfg;
  auto& m = cfg.model;
  m.acoustic_strides = {2, 4, 5, 8};
  m.base_channels = 8;
  m.d_model = 64;
  m.d_sem = 32;
  m.codebook_size_acoustic = 64;
  m.codebook_size_semantic = 64;
  m.semantic_channels = 32;
  m.speaker_hidden = 64;
  m.d_spk = 32;
  cfg.disc.width_scale = 0.125;
  cfg.train.batch_size = 2;
  cfg.train.crop_s = 0.64;
  cfg.train.total_steps = 2000;
  cfg.train.dead_code_threshold = 20;
  return cfg;
}

Outcome toy_training() {
  const RunConfig cfg = toy_config();
  const auto corpus = synthesize_corpus(32, 1.5, 7, 4);
  const auto provider = surrogate(cfg.model);
  std::vector<Utterance> items;
  for (const auto& u : corpus) items.push_back({u.id, u.wave, {}});
  const Dataset data(std::move(items), provider);
  Trainer trainer(cfg, build_semantic_codebook(data, cfg.model.semantic_entries(), 1));
  const Batch held = data.batch(1'000'000, 8, cfg.train.crop_s, 99);

  const auto start = std::chrono::steady_clock::now();
  double recon_100 = 0.0;
  bool finite = true;
  for (long step = 0; step < cfg.train.total_steps; ++step) {
    const StepReport r = trainer.train_step(data.batch(step, cfg.train.batch_size, cfg.train.crop_s, cfg.train.seed));
    finite = finite && std::isfinite(r.losses.total) && std::isfinite(r.discriminator_loss);
    if (step == 100) recon_100 = trainer.evaluate(held).recon;
    if (step % 250 == 0) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "  toy step " << step << " recon " << r.losses.recon << " (" << elapsed << " s)\n";
    }
  }
  const double recon_end = trainer.evaluate(held).recon;

  // Utilisation over every frame of the corpus.
  std::vector<int> tokens;
  const auto& model = trainer.model();
  for (const auto& u : corpus) {
    const Waveform padded = pad_to_token_grid(u.wave);
    const auto enc = model.encoder(ad::Tensor<float>(Matrix<float>(padded.samples)));
    const auto q = quantize(model.projection.down(enc).value(), model.acoustic_codebook);
    tokens.insert(tokens.end(), q.indices.begin(), q.indices.end());
  }
  const CodebookStats stats = codebook_stats(tokens, cfg.model.codebook_size_acoustic);
  const bool pass = finite && recon_end < 0.5 * recon_100 && stats.utilization > 0.5;
  return {pass, fmt("held-out recon %.4f at step 100, %.4f at step 2000 (ratio %.3f", recon_100, recon_end,
                    recon_end / recon_100) +
                    fmt(", limit 0.5); corpus codebook utilization %.1f%%, perplexity %.1f", 100 * stats.utilization,
                        stats.perplexity) +
                    (finite ? "" : "; non-finite loss seen")};
}

// 8. Resuming from a checkpoint reproduces the next step.
Outcome checkpoint_determinism() {
  RunConfig cfg;
  cfg.model = desk_config({2, 2, 4, 5, 8});
  cfg.disc.width_scale = 0.125;
  cfg.train.batch_size = 2;
  cfg.train.crop_s = 0.64;
  cfg.train.warmup_steps = 3;
  const auto corpus = synthesize_corpus(6, 1.0, 31);
  std::vector<Utterance> items;
  for (const auto& u : corpus) items.push_back({u.id, u.wave, {}});
  const Dataset data(std::move(items), surrogate(cfg.model));
  const auto batch = [&](long step) { return data.batch(step, 2, cfg.train.crop_s, cfg.train.seed); };
  Trainer a(cfg, build_semantic_codebook(data, cfg.model.semantic_entries(), 2));
  for (long step = 0; step < 5; ++step) a.train_step(batch(step));
  const auto path = std::filesystem::temp_directory_path() / "sac_acceptance_ckpt.bin";
  a.save_checkpoint(path);
  const StepReport straight = a.train_step(batch(5));
  Trainer b = Trainer::load_checkpoint(path);
  const StepReport resumed = b.train_step(batch(5));
  std::filesystem::remove(path);
  const LossBreakdown& x = straight.losses;
  const LossBreakdown& y = resumed.losses;
  const bool pass = straight.adversarial && x.recon == y.recon && x.vq == y.vq && x.adv == y.adv &&
                    x.feat == y.feat && x.sem == y.sem && x.spk == y.spk && x.total == y.total &&
                    straight.discriminator_loss == resumed.discriminator_loss;
  return {pass, fmt("step 5 total %.9g uninterrupted vs %.9g resumed (adversarial step)", x.total, y.total)};
}

// 9. Intelligibility score sanity.
Outcome stoi_sanity() {
  const Waveform ref = synthesize_corpus(1, 3.0, 41).front().wave;
  const double self = stoi(ref, ref);
  const double signal = ref.samples.cast<double>().squaredNorm();
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd noise(ref.size());
  for (Index i = 0; i < noise.size(); ++i) noise(i) = n(rng);
  std::vector<double> scores;
  for (double snr : {30.0, 20.0, 10.0, 0.0}) {
    Waveform deg = ref;
    const double gain = std::sqrt(signal / noise.squaredNorm() * std::pow(10.0, -snr / 10.0));
    deg.samples += (gain * noise).cast<float>();
    scores.push_back(stoi(ref, deg));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < scores.size(); ++i) monotone = monotone && scores[i] <= scores[i - 1];
  return {self >= 0.999 && monotone,
          fmt("self %.6f; 30/20 dB %.4f/%.4f", self, scores[0], scores[1]) +
              fmt(", 10/0 dB %.4f/%.4f", scores[2], scores[3])};
}

// 10. Speaker pooling and loss.
Outcome speaker_pooling() {
  using T = ad::Tensor<double>;
  const Matrix<double> f = gaussian(120, 48, 51);
  const Matrix<double> pooled = speaker_features(T(f)).value();
  std::vector<Index> order(120);
  std::iota(order.begin(), order.end(), 0);
  bool invariant = true;
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    Matrix<double> shuffled(120, 48);
    for (Index t = 0; t < 120; ++t) shuffled.row(t) = f.row(order[static_cast<std::size_t>(t)]);
    invariant = invariant && speaker_features(T(shuffled)).value() == pooled;
  }
  const ModelConfig c = desk_config({2, 4, 5, 8});
  const SacModel<double> m(c, frozen_codebook<double>(c, 53));
  const Matrix<double> prediction = m.speaker_projector(T(gaussian(50, c.d_fuse(), 54))).value();
  const double zero_loss = ad::mse_loss(T(prediction), T(prediction)).item();
  return {invariant && zero_loss == 0.0, fmt("20 permutations bit-identical, loss at equality %.1f", zero_loss)};
}

// 11. Container fuzzing.
Outcome bitstream_fuzz() {
  std::mt19937_64 rng(61);
  long ok = 0;
  for (int i = 0; i < 10000; ++i) {
    SacStream s;
    auto& h = s.header;
    h.sample_rate = static_cast<std::uint32_t>(rng());
    h.semantic_rate_centi_hz = static_cast<std::uint32_t>(rng());
    h.acoustic_rate_centi_hz = static_cast<std::uint32_t>(rng());
    h.semantic_codebook_size = 1 + static_cast<std::uint32_t>(rng() % 70000);
    h.acoustic_codebook_size = 1 + static_cast<std::uint32_t>(rng() % 70000);
    h.semantic_frames = static_cast<std::uint32_t>(rng() % 64);
    h.acoustic_frames = static_cast<std::uint32_t>(rng() % 256);
    h.original_length = static_cast<std::uint32_t>(rng());
    for (std::uint32_t k = 0; k < h.semantic_frames; ++k) {
      s.semantic_tokens.push_back(static_cast<int>(rng() % h.semantic_codebook_size));
    }
    for (std::uint32_t k = 0; k < h.acoustic_frames; ++k) {
      s.acoustic_tokens.push_back(static_cast<int>(rng() % h.acoustic_codebook_size));
    }
    const auto bytes = serialize(s);
    ok += bytes.size() == kSacHeaderBytes + (payload_bits(h) + 7) / 8 && deserialize(bytes) == s;
  }
  return {ok == 10000, fmt("%.0f / 10000 round trips lossless", static_cast<double>(ok))};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "bitrate reproduction", bitrates},
      {2, "rate arithmetic", rate_arithmetic},
      {3, "quantizer oracle equivalence", quantizer_oracle},
      {4, "straight-through correctness", straight_through},
      {5, "weighted objective audit", objective_audit},
      {6, "disentanglement mechanics", disentanglement},
      {7, "toy training smoke", toy_training},
      {8, "checkpoint determinism", checkpoint_determinism},
      {9, "STOI sanity", stoi_sanity},
      {10, "speaker pooling invariance", speaker_pooling},
      {11, "bitstream fuzz", bitstream_fuzz},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s  %2d  %-30s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
