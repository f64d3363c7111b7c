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

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sac/bitstream.hpp"
#include "sac/codec.hpp"
#include "sac/config.hpp"
#include "sac/evaluation.hpp"
#include "sac/synthetic.hpp"
#include "sac/training.hpp"

namespace fs = std::filesystem;
using namespace sac;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

void make_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::shared_ptr<const SemanticProvider> surrogate_provider(const ModelConfig& m) {
  return std::make_shared<SurrogateSemanticProvider>(m.d_sem, m.semantic_channels, m.semantic_seed);
}

// Provider for a single utterance: a feature record when given, otherwise
// the surrogate encoder.
std::pair<std::shared_ptr<const SemanticProvider>, std::string> provider_for(const ModelConfig& m,
                                                                             const std::string& features) {
  if (features.empty()) return {surrogate_provider(m), ""};
  auto p = std::make_shared<PrecomputedSemanticProvider>();
  auto rec = read_feature_record(features);
  std::string id = rec.utterance_id;
  p->add(std::move(rec));
  return {p, id};
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  make_parent(path);
  std::ofstream os(path);
  if (!os) throw RuntimeError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

std::map<std::string, int> read_labels(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open labels file " + path.string());
  std::map<std::string, int> labels;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string id;
    int label = 0;
    if (!(ss >> id) || id.front() == '#') continue;
    if (!(ss >> label)) throw ValidationError("labels line '" + line + "' has no integer label");
    labels[id] = label;
  }
  return labels;
}

std::vector<fs::path> wav_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- commands ------------------------------------------------------------------

struct TrainArgs {
  std::string config, manifest, out, resume;
  std::vector<std::string> ablate;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  for (const auto& ab : a.ablate) {
    if (ab == "no_spk") {
      cfg.weights.spk = 0.0;
    } else if (ab == "no_sem") {
      cfg.weights.sem = 0.0;
    } else {
      throw ValidationError("unknown ablation '" + ab + "' (expected no_spk or no_sem)");
    }
  }
  cfg.validate();
  if (!fs::exists(a.manifest)) throw ValidationError("manifest not found: " + a.manifest);
  auto provider = surrogate_provider(cfg.model);
  const Dataset data = build_dataset(a.manifest, provider);
  std::cerr << "training on " << data.size() << " utterances for " << cfg.train.total_steps << " steps\n";
  Codebook<float> semantic;
  if (a.resume.empty()) semantic = build_semantic_codebook(data, cfg.model.semantic_entries(), cfg.train.seed);
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.ablations = a.ablate;
  if (!a.resume.empty()) opts.resume = fs::path(a.resume);
  opts.on_step = [&](const StepReport& r) {
    if (r.step % 100 == 0) {
      std::cerr << "step " << r.step << " total " << r.losses.total << " recon " << r.losses.recon << "\n";
    }
  };
  run_training(cfg, data, std::move(semantic), opts);
  std::cerr << "wrote " << (fs::path(a.out) / "final.bin").string() << "\n";
  return 0;
}

int cmd_encode(const std::string& checkpoint, const std::string& in, const std::string& out,
               const std::string& features) {
  auto bundle = load_inference_model(checkpoint);
  auto [provider, id] = provider_for(bundle.config.model, features);
  Codec codec(std::move(bundle.model), provider);
  const auto stream = codec.encode(read_wav(in), id);
  make_parent(out);
  write_stream(out, stream);
  std::cout << "encoded " << stream.header.semantic_frames << " semantic + " << stream.header.acoustic_frames
            << " acoustic tokens, " << bitrate(stream) << " bps\n";
  return 0;
}

int cmd_decode(const std::string& checkpoint, const std::string& in, const std::string& out,
               const std::string& pattern_text) {
  const auto pattern = parse_pattern(pattern_text);
  auto bundle = load_inference_model(checkpoint);
  Codec codec(std::move(bundle.model), surrogate_provider(bundle.config.model));
  const auto wave = codec.decode(read_stream(in), pattern);
  make_parent(out);
  write_wav(out, wave);
  std::cout << "decoded " << wave.size() << " samples (" << pattern_name(pattern) << ")\n";
  return 0;
}

int cmd_eval(const std::string& ref_dir, const std::string& deg_dir, const std::string& out_dir,
             const std::string& external, const std::string& checkpoint) {
  fs::create_directories(out_dir);
  std::optional<InferenceBundle> bundle;
  if (!checkpoint.empty()) bundle = load_inference_model(checkpoint);
  const ModelConfig model_cfg = bundle ? bundle.value().config.model : ModelConfig{};
  const SpeakerEncoder speaker(model_cfg.d_spk, model_cfg.speaker_seed);
  std::optional<Codec> codec;
  if (bundle) codec.emplace(std::move(bundle->model), surrogate_provider(model_cfg));

  std::vector<EvalReport> reports;
  for (const auto& ref_path : wav_files(ref_dir)) {
    const fs::path deg_path = fs::path(deg_dir) / ref_path.filename();
    if (!fs::exists(deg_path)) {
      std::cerr << "warning: no counterpart for " << ref_path.filename().string() << "\n";
      continue;
    }
    const Waveform ref = read_wav(ref_path), deg = read_wav(deg_path);
    EvalReport r;
    r.utterance_id = ref_path.stem().string();
    r.stoi = std::clamp(stoi(ref, deg), 0.0, 1.0);
    r.log_spectral_distance_db = log_spectral_distance(ref, deg);
    const Matrix<float> a = speaker.embed(ref), b = speaker.embed(deg);
    r.speaker_cosine = cosine_similarity(a.row(0).transpose(), b.row(0).transpose());
    if (codec) {
      const auto s = codec->encode(ref);
      r.semantic_codes = codebook_stats(s.semantic_tokens, codec->model().semantic_codebook.size());
      r.acoustic_codes = codebook_stats(s.acoustic_tokens, codec->model().acoustic_codebook.size());
    }
    reports.push_back(std::move(r));
  }
  if (reports.empty()) throw ValidationError("no (reference, degraded) pairs found");
  if (!external.empty()) {
    std::ifstream is(external);
    if (!is) throw ValidationError("cannot open external metrics " + external);
    merge_external(reports, nlohmann::json::parse(is));
  }
  for (const auto& r : reports) {
    r.validate();
    write_json(fs::path(out_dir) / (r.utterance_id + ".json"), r.to_json());
  }
  const auto agg = aggregate(reports);
  write_json(fs::path(out_dir) / "aggregate.json", agg.to_json());
  std::cout << "pairs " << reports.size() << " stoi " << agg.stoi << " lsd_db " << agg.log_spectral_distance_db
            << "\n";
  return 0;
}

int cmd_probe(const std::string& checkpoint, const std::string& manifest, const std::string& labels_path,
              const std::string& stream, const std::string& out, std::uint64_t seed) {
  if (stream != "semantic" && stream != "acoustic" && stream != "both") {
    throw ValidationError("--stream must be semantic, acoustic or both");
  }
  auto bundle = load_inference_model(checkpoint);
  const auto& m = bundle.model;
  auto provider = surrogate_provider(bundle.config.model);
  const Dataset data = build_dataset(manifest, provider);
  const auto labels = read_labels(labels_path);

  ProbeTask task;
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& u : data.items()) {
    auto it = labels.find(u.id);
    if (it == labels.end()) throw ValidationError("no label for utterance '" + u.id + "'");
    const Waveform padded = pad_to_token_grid(u.wave);
    Eigen::RowVectorXd sem, ac;
    if (stream != "acoustic") {
      sem = average_pool(u.semantic.size() > 0 ? u.semantic : provider->extract(u.wave, u.id));
    }
    if (stream != "semantic") {
      ac = average_pool(m.encoder(ad::Tensor<float>(Matrix<float>(padded.samples))).value());
    }
    Eigen::RowVectorXd row(sem.size() + ac.size());
    row << sem, ac;
    rows.push_back(std::move(row));
    task.labels.push_back(it->second);
  }
  task.features.resize(static_cast<Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) task.features.row(static_cast<Index>(i)) = rows[i];
  task.num_classes = *std::max_element(task.labels.begin(), task.labels.end()) + 1;
  const auto result = probe_linear(task, seed);
  nlohmann::json j{{"stream", stream},
                   {"feature_dim", task.features.cols()},
                   {"accuracy", result.accuracy},
                   {"train_accuracy", result.train_accuracy},
                   {"train_items", result.train_items},
                   {"test_items", result.test_items},
                   {"iterations", result.iterations},
                   {"seed", seed}};
  if (!out.empty()) write_json(out, j);
  std::cout << "accuracy " << result.accuracy << "\n";
  return 0;
}

int cmd_analyze(const std::string& checkpoint, const std::string& in, const std::string& out,
                const std::string& wav_dir) {
  auto bundle = load_inference_model(checkpoint);
  Codec codec(std::move(bundle.model), surrogate_provider(bundle.config.model));
  const Waveform original = read_wav(in);
  const auto stream = codec.encode(original);
  std::vector<std::pair<std::string, Waveform>> rows{{"original", original}};
  for (auto p : {ReconstructionPattern::kFull, ReconstructionPattern::kSemanticOnly,
                 ReconstructionPattern::kAcousticOnly}) {
    rows.emplace_back(std::string(pattern_name(p)), codec.decode(stream, p));
    if (!wav_dir.empty()) {
      fs::create_directories(wav_dir);
      write_wav(fs::path(wav_dir) / (std::string(pattern_name(p)) + ".wav"), rows.back().second);
    }
  }
  make_parent(out);
  emit_mel_figure(rows, out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_synth(const std::string& out, int count, double duration, std::uint64_t seed, int voices) {
  const auto manifest = write_corpus(synthesize_corpus(count, duration, seed, voices), out);
  std::cout << "wrote " << manifest.string() << "\n";
  return 0;
}

int cmd_extract(const std::string& config, const std::string& manifest, const std::string& out) {
  const RunConfig cfg = config.empty() ? RunConfig{} : RunConfig::load(config);
  auto provider = surrogate_provider(cfg.model);
  const Dataset data = build_dataset(manifest, provider);
  fs::create_directories(out);
  std::ofstream list(fs::path(out) / "features.txt");
  if (!list) throw RuntimeError("cannot write feature manifest in " + out);
  for (const auto& u : data.items()) {
    FeatureRecord rec{u.id, provider->extract(u.wave, u.id), {}};
    const auto path = fs::path(out) / (u.id + ".feat");
    write_feature_record(path, rec);
    list << u.id << " " << path.filename().string() << "\n";
  }
  std::cout << "wrote " << data.size() << " feature records\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAC dual-stream speech codec"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { seed = s, seed_given = true; }, "Random seed")
      ->expected(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", train.config, "Key-value config file");
  t->add_option("--manifest", train.manifest, "Manifest of WAV files")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--ablate", train.ablate, "no_spk and/or no_sem");
  t->add_option("--resume", train.resume, "Checkpoint to resume from");

  std::string checkpoint, in, out, pattern = "full", features;
  auto* enc = app.add_subcommand("encode", "WAV to .sac");
  enc->add_option("--checkpoint", checkpoint)->required();
  enc->add_option("--in", in)->required();
  enc->add_option("--out", out)->required();
  enc->add_option("--features", features, "Precomputed semantic feature record");

  auto* dec = app.add_subcommand("decode", ".sac to WAV");
  dec->add_option("--checkpoint", checkpoint)->required();
  dec->add_option("--in", in)->required();
  dec->add_option("--out", out)->required();
  dec->add_option("--pattern", pattern, "full, semantic-only or acoustic-only");

  std::string ref_dir, deg_dir, external;
  auto* ev = app.add_subcommand("eval", "Metrics over (reference, degraded) WAV pairs");
  ev->add_option("--ref-dir", ref_dir)->required();
  ev->add_option("--deg-dir", deg_dir)->required();
  ev->add_option("--out-dir", out)->required();
  ev->add_option("--external", external, "JSON of external metrics keyed by utterance id");
  ev->add_option("--checkpoint", checkpoint, "Adds codebook statistics");

  std::string manifest, labels, stream = "both";
  auto* pr = app.add_subcommand("probe", "Linear probe on pooled stream features");
  pr->add_option("--checkpoint", checkpoint)->required();
  pr->add_option("--manifest", manifest)->required();
  pr->add_option("--labels", labels, "Lines of '<utterance_id> <class>'")->required();
  pr->add_option("--stream", stream, "semantic, acoustic or both");
  pr->add_option("--out", out, "JSON result");

  std::string wav_dir;
  auto* an = app.add_subcommand("analyze", "Mel figure of the three reconstruction patterns");
  an->add_option("--checkpoint", checkpoint)->required();
  an->add_option("--in", in)->required();
  an->add_option("--out", out, "PNG path")->required();
  an->add_option("--wav-dir", wav_dir, "Also write the decoded WAVs here");

  int count = 32, voices = 4;
  double duration = 1.5;
  auto* sy = app.add_subcommand("synth", "Write a synthetic corpus");
  sy->add_option("--out", out)->required();
  sy->add_option("--count", count);
  sy->add_option("--duration", duration);
  sy->add_option("--voices", voices);

  std::string config;
  auto* ex = app.add_subcommand("extract-features", "Precompute semantic feature records");
  ex->add_option("--config", config);
  ex->add_option("--manifest", manifest)->required();
  ex->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*t) {
      if (seed_given) train.seed = seed;
      return cmd_train(train);
    }
    if (*enc) return cmd_encode(checkpoint, in, out, features);
    if (*dec) return cmd_decode(checkpoint, in, out, pattern);
    if (*ev) return cmd_eval(ref_dir, deg_dir, out, external, checkpoint);
    if (*pr) return cmd_probe(checkpoint, manifest, labels, stream, out, seed);
    if (*an) return cmd_analyze(checkpoint, in, out, wav_dir);
    if (*sy) return cmd_synth(out, count, duration, seed, voices);
    if (*ex) return cmd_extract(config, manifest, out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
