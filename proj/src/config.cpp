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

#include "sac/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include "sac/common.hpp"

namespace sac {

namespace {

using FieldRef = std::variant<int*, long*, std::uint64_t*, double*, bool*, std::vector<int>*>;

struct Field {
  const char* key;
  std::function<FieldRef(RunConfig&)> ref;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"acoustic_strides", [](RunConfig& c) -> FieldRef { return &c.model.acoustic_strides; }},
      {"base_channels", [](RunConfig& c) -> FieldRef { return &c.model.base_channels; }},
      {"d_model", [](RunConfig& c) -> FieldRef { return &c.model.d_model; }},
      {"d_code", [](RunConfig& c) -> FieldRef { return &c.model.d_code; }},
      {"codebook_size_acoustic", [](RunConfig& c) -> FieldRef { return &c.model.codebook_size_acoustic; }},
      {"codebook_size_semantic", [](RunConfig& c) -> FieldRef { return &c.model.codebook_size_semantic; }},
      {"semantic_codebook_cap", [](RunConfig& c) -> FieldRef { return &c.model.semantic_codebook_cap; }},
      {"d_sem", [](RunConfig& c) -> FieldRef { return &c.model.d_sem; }},
      {"semantic_channels", [](RunConfig& c) -> FieldRef { return &c.model.semantic_channels; }},
      {"adapter_blocks", [](RunConfig& c) -> FieldRef { return &c.model.adapter_blocks; }},
      {"adapter_kernel", [](RunConfig& c) -> FieldRef { return &c.model.adapter_kernel; }},
      {"prenet_blocks", [](RunConfig& c) -> FieldRef { return &c.model.prenet_blocks; }},
      {"prenet_kernel", [](RunConfig& c) -> FieldRef { return &c.model.prenet_kernel; }},
      {"residual_units", [](RunConfig& c) -> FieldRef { return &c.model.residual_units; }},
      {"residual_kernel", [](RunConfig& c) -> FieldRef { return &c.model.residual_kernel; }},
      {"semantic_head_kernel", [](RunConfig& c) -> FieldRef { return &c.model.semantic_head_kernel; }},
      {"speaker_hidden", [](RunConfig& c) -> FieldRef { return &c.model.speaker_hidden; }},
      {"d_spk", [](RunConfig& c) -> FieldRef { return &c.model.d_spk; }},
      {"model_seed", [](RunConfig& c) -> FieldRef { return &c.model.model_seed; }},
      {"semantic_seed", [](RunConfig& c) -> FieldRef { return &c.model.semantic_seed; }},
      {"speaker_seed", [](RunConfig& c) -> FieldRef { return &c.model.speaker_seed; }},
      {"disc_periods", [](RunConfig& c) -> FieldRef { return &c.disc.periods; }},
      {"disc_stft_ffts", [](RunConfig& c) -> FieldRef { return &c.disc.stft_ffts; }},
      {"disc_width_scale", [](RunConfig& c) -> FieldRef { return &c.disc.width_scale; }},
      {"recon_ffts", [](RunConfig& c) -> FieldRef { return &c.recon.ffts; }},
      {"recon_mel_bins", [](RunConfig& c) -> FieldRef { return &c.recon.mel_bins; }},
      {"mel_on_log", [](RunConfig& c) -> FieldRef { return &c.recon.mel_on_log; }},
      {"lambda_recon", [](RunConfig& c) -> FieldRef { return &c.weights.recon; }},
      {"lambda_vq", [](RunConfig& c) -> FieldRef { return &c.weights.vq; }},
      {"lambda_adv", [](RunConfig& c) -> FieldRef { return &c.weights.adv; }},
      {"lambda_feat", [](RunConfig& c) -> FieldRef { return &c.weights.feat; }},
      {"lambda_sem", [](RunConfig& c) -> FieldRef { return &c.weights.sem; }},
      {"lambda_spk", [](RunConfig& c) -> FieldRef { return &c.weights.spk; }},
      {"commit_weight", [](RunConfig& c) -> FieldRef { return &c.weights.commit; }},
      {"codebook_weight", [](RunConfig& c) -> FieldRef { return &c.weights.codebook; }},
      {"lr_g", [](RunConfig& c) -> FieldRef { return &c.train.lr_g; }},
      {"lr_d", [](RunConfig& c) -> FieldRef { return &c.train.lr_d; }},
      {"beta1", [](RunConfig& c) -> FieldRef { return &c.train.beta1; }},
      {"beta2", [](RunConfig& c) -> FieldRef { return &c.train.beta2; }},
      {"weight_decay", [](RunConfig& c) -> FieldRef { return &c.train.weight_decay; }},
      {"lr_decay", [](RunConfig& c) -> FieldRef { return &c.train.lr_decay; }},
      {"warmup_steps", [](RunConfig& c) -> FieldRef { return &c.train.warmup_steps; }},
      {"ema_decay", [](RunConfig& c) -> FieldRef { return &c.train.ema_decay; }},
      {"batch_size", [](RunConfig& c) -> FieldRef { return &c.train.batch_size; }},
      {"crop_s", [](RunConfig& c) -> FieldRef { return &c.train.crop_s; }},
      {"total_steps", [](RunConfig& c) -> FieldRef { return &c.train.total_steps; }},
      {"seed", [](RunConfig& c) -> FieldRef { return &c.train.seed; }},
      {"dead_code_threshold", [](RunConfig& c) -> FieldRef { return &c.train.dead_code_threshold; }},
      {"grad_clip", [](RunConfig& c) -> FieldRef { return &c.train.grad_clip; }},
      {"checkpoint_every", [](RunConfig& c) -> FieldRef { return &c.train.checkpoint_every; }},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size();
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Assign {
  const std::string& text;
  bool operator()(int* p) const { return parse_number(text, *p); }
  bool operator()(long* p) const { return parse_number(text, *p); }
  bool operator()(std::uint64_t* p) const { return parse_number(text, *p); }
  bool operator()(double* p) const { return parse_double(text, *p); }
  bool operator()(bool* p) const {
    if (text == "true" || text == "1") {
      *p = true;
    } else if (text == "false" || text == "0") {
      *p = false;
    } else {
      return false;
    }
    return true;
  }
  bool operator()(std::vector<int>* p) const {
    std::vector<int> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      int v = 0;
      if (!parse_number(trim(item), v)) return false;
      values.push_back(v);
    }
    if (values.empty()) return false;
    *p = std::move(values);
    return true;
  }
};

struct Render {
  std::string operator()(int* p) const { return std::to_string(*p); }
  std::string operator()(long* p) const { return std::to_string(*p); }
  std::string operator()(std::uint64_t* p) const { return std::to_string(*p); }
  std::string operator()(double* p) const { return format_double(*p); }
  std::string operator()(bool* p) const { return *p ? "true" : "false"; }
  std::string operator()(std::vector<int>* p) const {
    std::string out;
    for (std::size_t i = 0; i < p->size(); ++i) {
      if (i) out += ',';
      out += std::to_string((*p)[i]);
    }
    return out;
  }
};

void require(bool ok, std::vector<std::string>& errors, const std::string& message) {
  if (!ok) errors.push_back(message);
}

void throw_if_any(const std::vector<std::string>& errors) {
  if (errors.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ValidationError(msg);
}

}  // namespace

int ModelConfig::reduction() const {
  int r = 1;
  for (int s : acoustic_strides) r *= s;
  return r;
}

double ModelConfig::acoustic_rate_hz() const { return static_cast<double>(kSampleRate) / reduction(); }

int ModelConfig::acoustic_centi_hz() const { return kSampleRate * 100 / reduction(); }

int ModelConfig::adapter_factor() const { return kSemanticTokenHopSamples / reduction(); }

int ModelConfig::prenet_factor() const { return reduction() / kSemanticHopSamples; }

int ModelConfig::semantic_entries() const { return std::min(codebook_size_semantic, semantic_codebook_cap); }

void ModelConfig::validate() const {
  std::vector<std::string> errors;
  for (int s : acoustic_strides) require(s >= 1, errors, "acoustic_strides must be positive");
  const int r = reduction();
  require(r == 640 || r == 320, errors,
          "product of acoustic_strides must be 640 (25 Hz) or 320 (50 Hz), got " + std::to_string(r));
  require(base_channels >= 1, errors, "base_channels must be >= 1");
  require(d_code >= 1 && d_code < d_model, errors, "d_code must satisfy 1 <= d_code < d_model");
  require(codebook_size_acoustic >= 2, errors, "codebook_size_acoustic must be >= 2");
  require(codebook_size_semantic >= 2, errors, "codebook_size_semantic must be >= 2");
  require(semantic_codebook_cap >= 2, errors, "semantic_codebook_cap must be >= 2");
  require(d_sem >= 1 && semantic_channels >= 1, errors, "d_sem and semantic_channels must be >= 1");
  require(adapter_blocks >= 0 && prenet_blocks >= 0, errors, "block counts must be >= 0");
  require(adapter_kernel % 2 == 1 && prenet_kernel % 2 == 1, errors, "ConvNeXt kernels must be odd");
  require(residual_units >= 0, errors, "residual_units must be >= 0");
  require(residual_kernel % 2 == 1 && semantic_head_kernel % 2 == 1, errors, "conv kernels must be odd");
  require(speaker_hidden >= 1 && d_spk >= 1, errors, "speaker widths must be >= 1");
  throw_if_any(errors);
}

void DiscriminatorConfig::validate() const {
  std::vector<std::string> errors;
  require(!periods.empty(), errors, "disc_periods must not be empty");
  for (std::size_t i = 0; i < periods.size(); ++i) {
    require(periods[i] >= 1, errors, "disc_periods must be positive");
    for (std::size_t j = 0; j < i; ++j) require(periods[i] != periods[j], errors, "disc_periods must be distinct");
  }
  require(!stft_ffts.empty(), errors, "disc_stft_ffts must not be empty");
  for (int f : stft_ffts) require(f >= 16 && f % 4 == 0, errors, "disc_stft_ffts must be multiples of 4, >= 16");
  require(width_scale > 0.0, errors, "disc_width_scale must be > 0");
  throw_if_any(errors);
}

void ReconConfig::validate() const {
  std::vector<std::string> errors;
  require(!ffts.empty(), errors, "recon_ffts must not be empty");
  for (int f : ffts) {
    require(f >= 16 && f % 4 == 0, errors, "recon_ffts must be multiples of 4, >= 16");
    require(mel_bins <= f / 2 + 1, errors, "recon_mel_bins exceeds fft_size/2+1 for fft " + std::to_string(f));
  }
  require(mel_bins >= 0, errors, "recon_mel_bins must be >= 0");
  throw_if_any(errors);
}

void LossWeights::validate() const {
  std::vector<std::string> errors;
  for (double w : {recon, vq, adv, feat, sem, spk, commit, codebook}) {
    require(w >= 0.0 && std::isfinite(w), errors, "loss weights must be finite and >= 0");
  }
  throw_if_any(errors);
}

void TrainConfig::validate() const {
  std::vector<std::string> errors;
  require(lr_g > 0 && lr_d > 0, errors, "learning rates must be > 0");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, errors, "betas must lie in [0, 1)");
  require(weight_decay >= 0, errors, "weight_decay must be >= 0");
  require(lr_decay > 0 && lr_decay <= 1, errors, "lr_decay must satisfy 0 < gamma <= 1");
  require(warmup_steps >= 0, errors, "warmup_steps must be >= 0");
  require(ema_decay >= 0 && ema_decay < 1, errors, "ema_decay must satisfy 0 <= d < 1");
  require(batch_size >= 1, errors, "batch_size must be >= 1");
  require(crop_s > 0, errors, "crop_s must be > 0");
  require(total_steps >= 0, errors, "total_steps must be >= 0");
  require(dead_code_threshold >= 1, errors, "dead_code_threshold must be >= 1");
  require(grad_clip > 0, errors, "grad_clip must be > 0");
  require(checkpoint_every >= 1, errors, "checkpoint_every must be >= 1");
  throw_if_any(errors);
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  auto collect = [&errors](auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      std::string msg = e.what();
      std::stringstream ss(msg);
      std::string line;
      while (std::getline(ss, line)) {
        if (line.rfind("  - ", 0) == 0) errors.push_back(line.substr(4));
      }
    }
  };
  collect([&] { model.validate(); });
  collect([&] { disc.validate(); });
  collect([&] { recon.validate(); });
  collect([&] { weights.validate(); });
  collect([&] { train.validate(); });
  const long crop_samples = std::lround(train.crop_s * kSampleRate);
  require(crop_samples % kSemanticTokenHopSamples == 0, errors,
          "crop_s must be a multiple of 0.08 s so both token streams align");
  throw_if_any(errors);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      if (!std::visit(Assign{value}, f.ref(*this))) {
        throw ValidationError("invalid value '" + value + "' for key '" + key + "'");
      }
      return;
    }
  }
  throw ValidationError("unknown configuration key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::vector<std::string> errors;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  throw_if_any(errors);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  RunConfig copy = *this;
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += std::visit(Render{}, f.ref(copy));
    out += '\n';
  }
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(serialize()); }

}  // namespace sac
