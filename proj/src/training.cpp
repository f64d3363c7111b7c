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

#include "sac/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace sac {

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t p : parts) {
    h ^= p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    std::uint64_t z = h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    h = z ^ (z >> 31);
  }
  return h;
}

double learning_rate(double lr0, double decay, long step) {
  return lr0 * std::pow(decay, static_cast<double>(step));
}

template <typename Scalar>
double clip_grad_norm(nn::ParamSet<Scalar>& params, double max_norm) {
  const double norm = params.grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const auto scale = static_cast<Scalar>(max_norm / norm);
    for (auto& [name, t] : params.items()) {
      if (t.has_grad()) t.mutable_grad() *= scale;
    }
  }
  return norm;
}

template <typename Scalar>
AdamW<Scalar>::AdamW(const nn::ParamSet<Scalar>& params, double beta1, double beta2, double weight_decay, double eps)
    : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {
  for (const auto& [name, t] : params.items()) {
    first_moment.push_back(Matrix<Scalar>::Zero(t.rows(), t.cols()));
    second_moment.push_back(Matrix<Scalar>::Zero(t.rows(), t.cols()));
  }
}

template <typename Scalar>
void AdamW<Scalar>::step(nn::ParamSet<Scalar>& params, double lr) {
  if (params.size() != first_moment.size()) throw RuntimeError("optimizer state does not match parameter set");
  ++steps;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps));
  const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const auto step_size = static_cast<Scalar>(lr / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto eps = static_cast<Scalar>(eps_);
  const auto decay = static_cast<Scalar>(1.0 - lr * weight_decay_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params.items()[i].second;
    if (!t.has_grad()) continue;
    const auto& g = t.grad();
    auto& m = first_moment[i];
    auto& v = second_moment[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    auto& p = t.mutable_value();
    p *= decay;
    p.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + eps);
  }
}

template <typename Scalar>
Ema<Scalar>::Ema(const nn::ParamSet<Scalar>& params) {
  for (const auto& [name, t] : params.items()) shadow.push_back(t.value());
}

template <typename Scalar>
void Ema<Scalar>::update(const nn::ParamSet<Scalar>& params, double decay) {
  const auto d = static_cast<Scalar>(decay);
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    shadow[i] = d * shadow[i] + (Scalar(1) - d) * params.items()[i].second.value();
  }
}

template <typename Scalar>
void Ema<Scalar>::copy_to(nn::ParamSet<Scalar>& params) const {
  if (params.size() != shadow.size()) throw RuntimeError("EMA state does not match parameter set");
  for (std::size_t i = 0; i < shadow.size(); ++i) params.items()[i].second.mutable_value() = shadow[i];
}

// ---- data ------------------------------------------------------------------

int num_workers() {
  const char* env = std::getenv("SAC_NUM_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ValidationError("SAC_NUM_WORKERS must be a positive integer, got '" +
                                                   std::string(env) + "'");
  return static_cast<int>(std::min<long>(n, 64));
}

Dataset::Dataset(std::vector<Utterance> items, std::shared_ptr<const SemanticProvider> provider)
    : items_(std::move(items)), provider_(std::move(provider)) {
  if (items_.empty()) throw ValidationError("dataset is empty");
  if (!provider_) throw ValidationError("dataset needs a semantic provider");
}

Batch Dataset::batch(long step, int batch_size, double crop_s, std::uint64_t seed) const {
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  const auto crop = static_cast<Index>(std::llround(crop_s * kSampleRate));
  if (crop < kSemanticTokenHopSamples || crop % kSemanticTokenHopSamples != 0) {
    throw ValidationError("crop length must be a positive multiple of 80 ms");
  }
  const auto n = static_cast<long>(items_.size());
  Batch b;
  b.ids.resize(batch_size);
  b.crops.resize(batch_size);
  b.semantic.resize(batch_size);
  b.padded.resize(batch_size);
  b.offsets.resize(batch_size);

  auto fill = [&](int slot) {
    const long position = step * batch_size + slot;
    const long epoch = position / n;
    std::vector<long> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0L);
    std::mt19937_64 perm_rng(derive_seed({seed, static_cast<std::uint64_t>(epoch), 0x0e90c4ULL}));
    std::shuffle(order.begin(), order.end(), perm_rng);
    const auto& u = items_[static_cast<std::size_t>(order[static_cast<std::size_t>(position % n)])];

    Waveform w;
    w.sample_rate = u.wave.sample_rate;
    Index offset = 0;
    bool padded = false;
    if (u.wave.size() >= crop) {
      const Index slots = (u.wave.size() - crop) / kSemanticHopSamples;
      std::mt19937_64 rng(derive_seed({seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(slot)}));
      offset = std::uniform_int_distribution<Index>(0, slots)(rng) * kSemanticHopSamples;
      w.samples = u.wave.samples.segment(offset, crop);
    } else {
      padded = true;
      w.samples = Eigen::VectorXf::Zero(crop);
      w.samples.head(u.wave.size()) = u.wave.samples;
    }
    Matrix<float> sem;
    if (u.semantic.size() > 0) {
      const Index rows = crop / kSemanticHopSamples;
      sem = Matrix<float>::Zero(rows, u.semantic.cols());
      const Index first = offset / kSemanticHopSamples;
      const Index take = std::clamp<Index>(u.semantic.rows() - first, 0, rows);
      sem.topRows(take) = u.semantic.middleRows(first, take);
    } else {
      sem = provider_->extract(w, u.id);
    }
    b.ids[slot] = u.id;
    b.crops[slot] = std::move(w);
    b.semantic[slot] = std::move(sem);
    b.padded[slot] = padded;
    b.offsets[slot] = offset;
  };

  const int workers = std::min(num_workers(), batch_size);
  if (workers <= 1) {
    for (int s = 0; s < batch_size; ++s) fill(s);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int s = w; s < batch_size; s += workers) fill(s);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return b;
}

Dataset build_dataset(const std::filesystem::path& manifest, std::shared_ptr<const SemanticProvider> provider,
                      std::ostream* warnings) {
  std::ifstream is(manifest);
  if (!is) throw ValidationError("cannot open manifest " + manifest.string());
  std::ostream& warn = warnings ? *warnings : std::cerr;
  std::vector<Utterance> items;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string wav, feats;
    if (!(ss >> wav) || wav.front() == '#') continue;
    ss >> feats;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_relative() ? manifest.parent_path() / fp : fp;
    };
    try {
      Utterance u;
      u.wave = read_wav(resolve(wav));
      u.id = std::filesystem::path(wav).stem().string();
      if (!feats.empty()) {
        FeatureRecord rec = read_feature_record(resolve(feats));
        u.id = rec.utterance_id;
        u.semantic = std::move(rec.features);
      }
      items.push_back(std::move(u));
    } catch (const std::exception& e) {
      warn << "warning: skipping " << wav << ": " << e.what() << "\n";
    }
  }
  if (items.empty()) throw ValidationError("manifest " + manifest.string() + " lists no readable audio");
  return Dataset(std::move(items), std::move(provider));
}

Codebook<float> build_semantic_codebook(const Dataset& data, Index entries, std::uint64_t seed) {
  std::vector<Matrix<float>> pooled;
  Index rows = 0;
  for (const auto& u : data.items()) {
    Matrix<float> feats = u.semantic.size() > 0 ? u.semantic : data.provider().extract(u.wave, u.id);
    const Index usable = feats.rows() - feats.rows() % kSemanticPoolFactor;
    if (usable == 0) continue;
    pooled.push_back(pool_to_semantic_rate<float>(feats.topRows(usable)));
    rows += pooled.back().rows();
  }
  if (rows == 0) throw ValidationError("no utterance is long enough to fit the semantic codebook");
  Matrix<float> all(rows, pooled.front().cols());
  Index r = 0;
  for (const auto& p : pooled) {
    all.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return Codebook<float>(kmeans(all, entries, seed), /*trainable=*/false);
}

// ---- training ----------------------------------------------------------------

namespace {

ad::Tensor<float> as_column(const Waveform& w) { return ad::Tensor<float>(Matrix<float>(w.samples)); }

void copy_values(const nn::ParamSet<float>& from, nn::ParamSet<float>& to) {
  if (from.size() != to.size()) throw RuntimeError("parameter sets differ in size");
  for (std::size_t i = 0; i < from.size(); ++i) to.items()[i].second.mutable_value() = from.items()[i].second.value();
}

std::size_t param_index(const nn::ParamSet<float>& ps, const std::string& name) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps.items()[i].first == name) return i;
  }
  throw RuntimeError("no parameter named " + name);
}

struct GeneratorLosses {
  LossBreakdown values;
  ad::Tensor<float> total;
};

GeneratorLosses generator_losses(const RunConfig& cfg, const ForwardResult<float>& r, const ad::Tensor<float>& x,
                                 const Matrix<float>& semantic, const Matrix<float>& speaker,
                                 const Discriminators<float>* disc) {
  const auto& w = cfg.weights;
  auto recon = recon_loss(x, r.reconstruction, cfg.recon);
  auto vq = vq_loss(r.acoustic.latent, r.acoustic.code, w.commit, w.codebook);
  auto sem = ad::mse_loss(r.semantic_prediction, ad::Tensor<float>(semantic));
  auto spk = ad::mse_loss(r.speaker_prediction, ad::Tensor<float>(speaker));
  GeneratorLosses out;
  out.values.recon = recon.item();
  out.values.vq = vq.item();
  out.values.sem = sem.item();
  out.values.spk = spk.item();
  out.total = recon * static_cast<float>(w.recon) + vq * static_cast<float>(w.vq) + sem * static_cast<float>(w.sem) +
              spk * static_cast<float>(w.spk);
  if (disc) {
    auto fake = (*disc)(r.reconstruction, /*frozen=*/true);
    auto real = (*disc)(x, /*frozen=*/true);
    auto adv = generator_adversarial_loss(fake);
    auto feat = feature_matching(real, fake);
    out.values.adv = adv.item();
    out.values.feat = feat.item();
    out.total = out.total + adv * static_cast<float>(w.adv) + feat * static_cast<float>(w.feat);
  }
  out.values.total = generator_total(out.values, w);
  return out;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& v, double scale) {
  acc.recon += scale * v.recon;
  acc.vq += scale * v.vq;
  acc.adv += scale * v.adv;
  acc.feat += scale * v.feat;
  acc.sem += scale * v.sem;
  acc.spk += scale * v.spk;
}

void check_batch(const Batch& batch) {
  if (batch.crops.empty()) throw ValidationError("empty batch");
  for (const auto& c : batch.crops) {
    if (c.size() != batch.crops.front().size()) throw ValidationError("batch crops differ in length");
  }
  if (batch.semantic.size() != batch.crops.size()) throw ValidationError("batch is missing semantic features");
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, Codebook<float> semantic_codebook)
    : config_(cfg),
      model_(cfg.model, std::move(semantic_codebook)),
      disc_(cfg.disc, derive_seed({cfg.model.model_seed, 0xd15cULL})),
      speaker_(cfg.model.d_spk, cfg.model.speaker_seed) {
  cfg.validate();
  const auto g = model_.parameters();
  const auto d = disc_.parameters();
  opt_g_ = AdamW<float>(g, cfg.train.beta1, cfg.train.beta2, cfg.train.weight_decay);
  opt_d_ = AdamW<float>(d, cfg.train.beta1, cfg.train.beta2, cfg.train.weight_decay);
  ema_ = Ema<float>(g);
}

StepReport Trainer::train_step(const Batch& batch) {
  check_batch(batch);
  const auto& tc = config_.train;
  const auto n = static_cast<Index>(batch.crops.size());
  const float inv_n = 1.0f / static_cast<float>(n);
  StepReport rep;
  rep.step = step_;
  rep.lr = learning_rate(tc.lr_g, tc.lr_decay, step_);
  rep.adversarial = step_ >= tc.warmup_steps;

  std::vector<ad::Tensor<float>> xs;
  std::vector<ForwardResult<float>> fw;
  for (Index b = 0; b < n; ++b) {
    xs.push_back(as_column(batch.crops[static_cast<std::size_t>(b)]));
    fw.push_back(model_.forward(xs.back(), batch.semantic[static_cast<std::size_t>(b)].cast<float>()));
  }

  if (rep.adversarial) {
    auto dparams = disc_.parameters();
    dparams.zero_grad();
    for (Index b = 0; b < n; ++b) {
      const auto& x = xs[static_cast<std::size_t>(b)];
      auto ld = discriminator_loss(disc_(x), disc_(fw[static_cast<std::size_t>(b)].reconstruction.detach()));
      if (!std::isfinite(ld.item())) throw RuntimeError("non-finite loss term 'discriminator'");
      rep.discriminator_loss += ld.item() * inv_n;
      (ld * inv_n).backward();
    }
    clip_grad_norm(dparams, tc.grad_clip);
    opt_d_.step(dparams, learning_rate(tc.lr_d, tc.lr_decay, step_));
  }

  auto gparams = model_.parameters();
  gparams.zero_grad();
  std::vector<int> tokens;
  Matrix<float> latents(0, config_.model.d_code);
  for (Index b = 0; b < n; ++b) {
    auto& r = fw[static_cast<std::size_t>(b)];
    const auto& crop = batch.crops[static_cast<std::size_t>(b)];
    auto losses = generator_losses(config_, r, xs[static_cast<std::size_t>(b)],
                                   batch.semantic[static_cast<std::size_t>(b)], speaker_.embed(crop),
                                   rep.adversarial ? &disc_ : nullptr);
    (losses.total * inv_n).backward();
    accumulate(rep.losses, losses.values, 1.0 / static_cast<double>(n));
    tokens.insert(tokens.end(), r.acoustic.tokens.begin(), r.acoustic.tokens.end());
    const auto& z = r.acoustic.latent.value();
    latents.conservativeResize(latents.rows() + z.rows(), Eigen::NoChange);
    latents.bottomRows(z.rows()) = z;
    r = ForwardResult<float>();
  }
  rep.losses.total = generator_total(rep.losses, config_.weights);

  rep.grad_norm = clip_grad_norm(gparams, tc.grad_clip);
  opt_g_.step(gparams, rep.lr);
  ema_.update(gparams, tc.ema_decay);

  auto& cb = model_.acoustic_codebook;
  cb.record_step(tokens);
  rep.acoustic_codes = codebook_stats(tokens, cb.size());
  std::vector<Index> dead;
  for (Index k = 0; k < cb.size(); ++k) {
    if (cb.usage()[static_cast<std::size_t>(k)] >= tc.dead_code_threshold) dead.push_back(k);
  }
  if (!dead.empty()) {
    rep.reinitialized = reinit_dead_codes(cb, latents, tc.dead_code_threshold, derive_seed({tc.seed, static_cast<std::uint64_t>(step_), 0xdeadULL}));
    // A reinitialised entry starts a fresh history: its EMA copy and
    // optimizer moments follow the new value.
    const std::size_t idx = param_index(gparams, "acoustic_codebook");
    for (Index k : dead) {
      ema_.shadow[idx].row(k) = cb.entries().value().row(k);
      opt_g_.first_moment[idx].row(k).setZero();
      opt_g_.second_moment[idx].row(k).setZero();
    }
  }
  ++step_;
  return rep;
}

LossBreakdown Trainer::evaluate(const Batch& batch) const {
  check_batch(batch);
  const bool adversarial = step_ >= config_.train.warmup_steps;
  LossBreakdown acc;
  const double scale = 1.0 / static_cast<double>(batch.crops.size());
  for (std::size_t b = 0; b < batch.crops.size(); ++b) {
    auto x = as_column(batch.crops[b]);
    auto r = model_.forward(x, batch.semantic[b]);
    auto losses = generator_losses(config_, r, x, batch.semantic[b], speaker_.embed(batch.crops[b]),
                                   adversarial ? &disc_ : nullptr);
    accumulate(acc, losses.values, scale);
  }
  acc.total = generator_total(acc, config_.weights);
  return acc;
}

SacModel<float> clone_model(const SacModel<float>& model) {
  Codebook<float> sem(Matrix<float>(model.semantic_codebook.entries().value()), /*trainable=*/false);
  SacModel<float> copy(model.config(), std::move(sem));
  auto dst = copy.parameters();
  copy_values(model.parameters(), dst);
  copy.acoustic_codebook.usage() = model.acoustic_codebook.usage();
  return copy;
}

SacModel<float> Trainer::ema_model() const {
  SacModel<float> copy = clone_model(model_);
  auto dst = copy.parameters();
  ema_.copy_to(dst);
  return copy;
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'A', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u32(std::uint32_t v) { bytes(v, 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void matrix(const Matrix<float>& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, m.data() + i, 4);
      u32(bits);
    }
  }

 private:
  void bytes(std::uint64_t v, int n) {
    char b[8];
    for (int i = 0; i < n; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(b, n);
  }
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string origin) : is_(is), origin_(std::move(origin)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  std::string str() {
    std::string s(u32(), '\0');
    if (!is_.read(s.data(), static_cast<std::streamsize>(s.size()))) fail();
    return s;
  }
  Matrix<float> matrix() {
    const auto rows = u32();
    const auto cols = u32();
    Matrix<float> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
      const std::uint32_t bits = u32();
      std::memcpy(m.data() + i, &bits, 4);
    }
    return m;
  }
  [[noreturn]] void fail() const { throw RuntimeError(origin_ + ": truncated checkpoint"); }

 private:
  std::uint64_t bytes(int n) {
    unsigned char b[8];
    if (!is_.read(reinterpret_cast<char*>(b), n)) fail();
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::istream& is_;
  std::string origin_;
};

using Section = std::vector<std::pair<std::string, Matrix<float>>>;

Section named(const nn::ParamSet<float>& ps) {
  Section s;
  for (const auto& [name, t] : ps.items()) s.emplace_back(name, t.value());
  return s;
}

Section named(const nn::ParamSet<float>& ps, const std::vector<Matrix<float>>& values) {
  Section s;
  for (std::size_t i = 0; i < ps.size(); ++i) s.emplace_back(ps.items()[i].first, values[i]);
  return s;
}

std::vector<Matrix<float>> ordered(const Section& section, const nn::ParamSet<float>& ps, const std::string& what) {
  if (section.size() != ps.size()) {
    throw RuntimeError("checkpoint section '" + what + "' holds " + std::to_string(section.size()) +
                       " tensors, model expects " + std::to_string(ps.size()));
  }
  std::vector<Matrix<float>> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& [name, t] = ps.items()[i];
    if (section[i].first != name || section[i].second.rows() != t.rows() || section[i].second.cols() != t.cols()) {
      throw RuntimeError("checkpoint section '" + what + "' entry '" + section[i].first + "' does not match '" + name +
                         "' [" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]");
    }
    out.push_back(section[i].second);
  }
  return out;
}

struct CheckpointData {
  std::string config_text;
  std::uint64_t config_hash = 0;
  long step = 0;
  long opt_g_steps = 0;
  long opt_d_steps = 0;
  std::vector<std::int64_t> usage;
  std::map<std::string, Section> sections;

  const Section& section(const std::string& name) const {
    auto it = sections.find(name);
    if (it == sections.end()) throw RuntimeError("checkpoint has no section '" + name + "'");
    return it->second;
  }
};

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw RuntimeError(path.string() + ": not a checkpoint");
  }
  Reader r(is, path.string());
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw RuntimeError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointData d;
  d.config_text = r.str();
  d.config_hash = r.u64();
  d.step = static_cast<long>(r.u64());
  d.opt_g_steps = static_cast<long>(r.u64());
  d.opt_d_steps = static_cast<long>(r.u64());
  d.usage.resize(r.u32());
  for (auto& u : d.usage) u = static_cast<std::int64_t>(r.u64());
  const auto sections = r.u32();
  for (std::uint32_t s = 0; s < sections; ++s) {
    const auto name = r.str();
    Section sec(r.u32());
    for (auto& [tname, m] : sec) {
      tname = r.str();
      m = r.matrix();
    }
    d.sections.emplace(name, std::move(sec));
  }
  if (fnv1a64(d.config_text) != d.config_hash) throw RuntimeError(path.string() + ": config hash mismatch");
  return d;
}

Codebook<float> semantic_codebook_from(const CheckpointData& d) {
  const auto& sec = d.section("semantic_codebook");
  if (sec.size() != 1) throw RuntimeError("checkpoint semantic codebook section is malformed");
  return Codebook<float>(sec.front().second, /*trainable=*/false);
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw RuntimeError("cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic, 4);
    Writer w(os);
    w.u32(kCheckpointVersion);
    const auto text = config_.serialize();
    w.str(text);
    w.u64(fnv1a64(text));
    w.u64(static_cast<std::uint64_t>(step_));
    w.u64(static_cast<std::uint64_t>(opt_g_.steps));
    w.u64(static_cast<std::uint64_t>(opt_d_.steps));
    const auto& usage = model_.acoustic_codebook.usage();
    w.u32(static_cast<std::uint32_t>(usage.size()));
    for (auto u : usage) w.u64(static_cast<std::uint64_t>(u));

    const auto g = model_.parameters();
    const auto d = disc_.parameters();
    const std::pair<std::string, Section> sections[] = {
        {"generator", named(g)},
        {"discriminator", named(d)},
        {"ema", named(g, ema_.shadow)},
        {"adam_g_m", named(g, opt_g_.first_moment)},
        {"adam_g_v", named(g, opt_g_.second_moment)},
        {"adam_d_m", named(d, opt_d_.first_moment)},
        {"adam_d_v", named(d, opt_d_.second_moment)},
        {"semantic_codebook", Section{{"entries", model_.semantic_codebook.entries().value()}}},
    };
    w.u32(static_cast<std::uint32_t>(std::size(sections)));
    for (const auto& [name, sec] : sections) {
      w.str(name);
      w.u32(static_cast<std::uint32_t>(sec.size()));
      for (const auto& [tname, m] : sec) {
        w.str(tname);
        w.matrix(m);
      }
    }
    if (!os) throw RuntimeError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& path) {
  const auto d = read_checkpoint(path);
  Trainer t(RunConfig::parse(d.config_text), semantic_codebook_from(d));
  auto g = t.model_.parameters();
  auto disc = t.disc_.parameters();
  const auto gv = ordered(d.section("generator"), g, "generator");
  for (std::size_t i = 0; i < g.size(); ++i) g.items()[i].second.mutable_value() = gv[i];
  const auto dv = ordered(d.section("discriminator"), disc, "discriminator");
  for (std::size_t i = 0; i < disc.size(); ++i) disc.items()[i].second.mutable_value() = dv[i];
  t.ema_.shadow = ordered(d.section("ema"), g, "ema");
  t.opt_g_.first_moment = ordered(d.section("adam_g_m"), g, "adam_g_m");
  t.opt_g_.second_moment = ordered(d.section("adam_g_v"), g, "adam_g_v");
  t.opt_d_.first_moment = ordered(d.section("adam_d_m"), disc, "adam_d_m");
  t.opt_d_.second_moment = ordered(d.section("adam_d_v"), disc, "adam_d_v");
  t.opt_g_.steps = d.opt_g_steps;
  t.opt_d_.steps = d.opt_d_steps;
  if (d.usage.size() != static_cast<std::size_t>(t.model_.acoustic_codebook.size())) {
    throw RuntimeError("checkpoint usage counters do not match the acoustic codebook");
  }
  t.model_.acoustic_codebook.usage() = d.usage;
  t.step_ = d.step;
  return t;
}

InferenceBundle load_inference_model(const std::filesystem::path& checkpoint) {
  const auto d = read_checkpoint(checkpoint);
  auto cfg = RunConfig::parse(d.config_text);
  SacModel<float> model(cfg.model, semantic_codebook_from(d));
  auto g = model.parameters();
  const auto ema = ordered(d.section("ema"), g, "ema");
  for (std::size_t i = 0; i < g.size(); ++i) g.items()[i].second.mutable_value() = ema[i];
  return {std::move(cfg), std::move(model)};
}

std::string step_report_json(const StepReport& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["adversarial"] = r.adversarial;
  j["recon"] = r.losses.recon;
  j["vq"] = r.losses.vq;
  j["adv"] = r.losses.adv;
  j["feat"] = r.losses.feat;
  j["sem"] = r.losses.sem;
  j["spk"] = r.losses.spk;
  j["total"] = r.losses.total;
  j["d_loss"] = r.discriminator_loss;
  j["grad_norm"] = r.grad_norm;
  j["acoustic_utilization"] = r.acoustic_codes.utilization;
  j["acoustic_perplexity"] = r.acoustic_codes.perplexity;
  j["reinitialized"] = r.reinitialized;
  return j.dump();
}

void run_training(const RunConfig& cfg, const Dataset& data, Codebook<float> semantic_codebook,
                  const TrainOptions& options) {
  cfg.validate();
  std::filesystem::create_directories(options.out_dir);
  Trainer trainer = options.resume ? Trainer::load_checkpoint(*options.resume)
                                   : Trainer(cfg, std::move(semantic_codebook));
  if (options.resume && trainer.config().hash() != cfg.hash()) {
    throw ValidationError("resume checkpoint was written with a different configuration");
  }
  const auto log_path = options.out_dir / "train_log.jsonl";
  std::ofstream log(log_path, options.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw RuntimeError("cannot write " + log_path.string());
  nlohmann::json header;
  header["event"] = "start";
  header["step"] = trainer.step();
  header["config_hash"] = std::to_string(cfg.hash());
  header["ablations"] = options.ablations;
  header["lambda_sem"] = cfg.weights.sem;
  header["lambda_spk"] = cfg.weights.spk;
  header["utterances"] = data.size();
  log << header.dump() << "\n" << std::flush;

  const auto& tc = cfg.train;
  while (trainer.step() < tc.total_steps) {
    const auto batch = data.batch(trainer.step(), tc.batch_size, tc.crop_s, tc.seed);
    const auto report = trainer.train_step(batch);
    log << step_report_json(report) << "\n" << std::flush;
    if (options.on_step) options.on_step(report);
    if (tc.checkpoint_every > 0 && trainer.step() % tc.checkpoint_every == 0) {
      trainer.save_checkpoint(options.out_dir / ("ckpt_" + std::to_string(trainer.step()) + ".bin"));
    }
  }
  trainer.save_checkpoint(options.out_dir / "final.bin");
  nlohmann::json footer;
  footer["event"] = "final";
  footer["step"] = trainer.step();
  footer["checkpoint"] = "final.bin";
  footer["inference_weights"] = "ema";
  log << footer.dump() << "\n";
}

template double clip_grad_norm<float>(nn::ParamSet<float>&, double);
template double clip_grad_norm<double>(nn::ParamSet<double>&, double);
template class AdamW<float>;
template class AdamW<double>;
template class Ema<float>;
template class Ema<double>;

}  // namespace sac
