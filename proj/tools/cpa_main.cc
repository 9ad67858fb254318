// cpa: train, align, recognize, synth and validate-model commands.
//
// Exit codes: 0 success, 1 bad arguments or unreadable/malformed input,
// 2 numerical failure inside the solver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpa/align.h"
#include "cpa/config.h"
#include "cpa/error.h"
#include "cpa/image.h"
#include "cpa/learn.h"
#include "cpa/model_io.h"
#include "cpa/recognize.h"
#include "cpa/synth.h"

namespace fs = std::filesystem;

namespace cpa {
namespace {

// Every key a config file may hold, read in one place so that a single
// file can drive all commands and misspelled keys are reported.
struct Options {
  LearnSettings learn;
  std::string manifest;
  std::string gallery;
  bool holistic = false;
  SynthScenario scenario;
};

std::string Resolve(const Config& cfg, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(cfg.origin()).parent_path() / path).string();
}

Options ReadOptions(const std::string& path) {
  const Config cfg = path.empty() ? Config::Parse("") : Config::Load(path);
  Options o;
  o.learn = LearnFromConfig(cfg);
  o.manifest = Resolve(cfg, cfg.GetString("manifest", ""));
  o.gallery = Resolve(cfg, cfg.GetString("gallery", ""));
  o.holistic = cfg.GetBool("holistic", false);

  SynthScenario& s = o.scenario;
  s.seed = uint64_t(cfg.GetInt("synth.seed", int(s.seed)));
  s.subjects = cfg.GetInt("synth.subjects", s.subjects);
  s.illum_modes = cfg.GetInt("synth.illum_modes", s.illum_modes);
  s.gallery_per_subject = cfg.GetInt("synth.gallery_per_subject", s.gallery_per_subject);
  s.probes_per_subject = cfg.GetInt("synth.probes_per_subject", s.probes_per_subject);
  s.training_images = cfg.GetInt("synth.training_images", s.training_images);
  s.training_subjects = cfg.GetInt("synth.training_subjects", s.training_subjects);
  s.max_shift = cfg.GetDouble("synth.max_shift", s.max_shift);
  s.max_rotation = cfg.GetDouble("synth.max_rotation", s.max_rotation);
  s.max_log_scale = cfg.GetDouble("synth.max_log_scale", s.max_log_scale);
  s.part_jitter = cfg.GetDouble("synth.part_jitter", s.part_jitter);
  s.part_rotation = cfg.GetDouble("synth.part_rotation", s.part_rotation);
  s.part_log_scale = cfg.GetDouble("synth.part_log_scale", s.part_log_scale);
  s.landmark_noise = cfg.GetDouble("synth.landmark_noise", s.landmark_noise);
  s.occlusion_ratio = cfg.GetDouble("synth.occlusion_ratio", s.occlusion_ratio);
  s.noise_sigma = cfg.GetDouble("synth.noise_sigma", s.noise_sigma);
  s.perturb_training = cfg.GetBool("synth.perturb_training", s.perturb_training);
  s.image_width = cfg.GetInt("synth.image_width", s.image_width);
  s.image_height = cfg.GetInt("synth.image_height", s.image_height);
  s.frame_offset.u = s.frame_offset.v = cfg.GetDouble("synth.frame_offset", s.frame_offset.u);
  if (cfg.GetBool("synth.blobs_only", false)) {
    for (auto& p : s.constellation) p.texture = PartTexture::kBlobs;
  }

  const std::vector<std::string> unused = cfg.Unused();
  if (!unused.empty()) {
    std::string keys;
    for (const auto& k : unused) keys += (keys.empty() ? "" : ", ") + k;
    throw IoError(cfg.origin() + ": unknown config keys: " + keys);
  }
  return o;
}

InitHint ParseInit(const std::string& spec, const Rect& canonical) {
  if (spec.empty() || spec == "none") return InitHint::None();
  const auto eq = spec.find('=');
  const std::string kind = spec.substr(0, eq), arg = eq == std::string::npos ? "" : spec.substr(eq + 1);
  if (kind == "landmarks" && !arg.empty()) return InitHint::Landmarks(ReadLandmarks(arg));
  if (kind == "box") {
    if (arg == "canonical") return InitHint::Box(canonical);
    Rect r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(arg);
    if (in >> r.x >> c1 >> r.y >> c2 >> r.width >> c3 >> r.height && c1 == ',' && c2 == ',' &&
        c3 == ',' && in.peek() == EOF && r.width > 0 && r.height > 0) {
      return InitHint::Box(r);
    }
  }
  throw IoError("bad --init '" + spec + "': expected box=x,y,w,h, box=canonical, landmarks=<file> or none");
}

void WriteText(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out || !(out << text << '\n')) throw IoError("cannot write " + path);
}

PartDomain FrameDomain(const Rect& canonical) {
  return HolisticModel(canonical, Eigen::MatrixXd::Zero(1, 1), 1.0, 0.0).domains[0];
}

// Whole-frame crops of a registered set, for holistic pre-alignment.
Eigen::MatrixXd HolisticDictionary(const TrainingSet& ts) {
  const PartDomain dom = FrameDomain(ts.canonical);
  Eigen::MatrixXd d(dom.size(), ts.size());
  for (int k = 0; k < ts.size(); ++k) {
    d.col(k) = NormalizeIntensity(WarpPart(ts.images[k], ts.init_sigma[k], dom));
  }
  return d;
}

int Train(const std::string& config, const std::string& out) {
  const Options o = ReadOptions(config);
  if (o.manifest.empty()) throw IoError("config sets no training manifest");
  if (out.empty()) throw IoError("train needs --out");
  const Manifest manifest = Manifest::Load(o.manifest);

  MixtureSpec spec;
  std::vector<TrainingSet> sets;
  for (int c = 0; c < manifest.component_count(); ++c) {
    std::vector<bool> mask(manifest.domains.size(), false);
    const auto& parts = c < int(manifest.components.size()) ? manifest.components[c] : manifest.components[0];
    for (int i : parts) mask[i] = true;
    spec.availability.push_back(mask);
    sets.push_back(LoadTrainingSet(manifest, c));
  }
  const std::vector<const TreeConfig*> trees(sets.size(), nullptr);
  MixtureCpaModel mix = LearnMixture(sets, spec, trees, o.learn);
  const TrainingSet* registered = &sets[0];

  TrainingSet gallery;
  if (!o.gallery.empty()) {
    if (mix.components.size() != 1) throw IoError("a gallery needs a single-component model");
    gallery = LoadTrainingSet(Manifest::Load(o.gallery), 0);
    const LearnedModel fit = FitDictionariesFixedShape(gallery, mix.components[0].model.shape, o.learn);
    mix.components[0].model = fit.model;
    mix.labels = fit.labels;
    registered = &gallery;
  }

  ModelContainer mc = ModelContainer::FromMixture(mix, o.learn, manifest.part_names);
  if (o.holistic) mc.holistic = HolisticDictionary(*registered);
  SaveModel(mc, out);
  std::fprintf(stderr, "wrote %s: %zu parts, %zu components, %lld columns\n", out.c_str(),
               mc.domains.size(), mc.components.size(),
               mc.components[0].dictionaries.empty() ? 0LL
                                                     : (long long)mc.components[0].dictionaries[0].cols());
  return 0;
}

struct ProbeArgs {
  std::string config, model, image, init, out, overlay, method = "ns";
  int component = 0;
  int prune = 20;
  bool holistic_init = false;
  bool no_timings = false;
};

int AlignCommand(const ProbeArgs& a) {
  const Options o = ReadOptions(a.config);
  const ModelContainer mc = LoadModel(a.model);
  const CpaModel model = mc.ComponentModel(a.component);
  const Image y = ReadPgm(a.image);
  const InitHint hint = ParseInit(a.init, mc.canonical);

  AlignmentResult r;
  if (a.holistic_init) {
    if (mc.holistic.size() == 0) throw IoError(a.model + " holds no holistic dictionary");
    const CpaModel h = HolisticModel(mc.canonical, mc.holistic, mc.lambda_hat, mc.eta_hat);
    const AlignmentResult hr = Align(y, h, hint, o.learn.alm);
    AlignmentState start = Initialize(y, model, InitHint::None());
    start.sigma = hr.Combined()[0];
    r = AlignFrom(y, model, start, o.learn.alm);
  } else {
    r = Align(y, model, hint, o.learn.alm);
  }
  WriteText(a.out, AlignmentJson(r));
  if (!a.overlay.empty()) WriteOverlay(a.overlay, y, model, r);
  return 0;
}

int RecognizeCommand(const ProbeArgs& a) {
  const Options o = ReadOptions(a.config);
  const ModelContainer mc = LoadModel(a.model);
  const GalleryModel gallery = mc.Gallery(a.component);
  const Image y = ReadPgm(a.image);
  RecognizeSettings s;
  s.alm = o.learn.alm;
  s.prune = a.prune;
  s.method = a.method;
  s.hint = ParseInit(a.init, mc.canonical);
  RecognitionReport rep = Recognize(y, gallery, s);
  if (a.no_timings) rep.align_ms = rep.classify_ms = 0.0;
  WriteText(a.out, RecognitionJson(rep));
  return 0;
}

int SynthCommand(const std::string& config, const std::string& out, const int64_t* seed) {
  if (out.empty()) throw IoError("synth needs --out");
  Options o = ReadOptions(config);
  if (seed) o.scenario.seed = uint64_t(*seed);
  o.scenario.Validate();
  const SynthData data = Generate(o.scenario);
  const std::string manifest = WriteScenario(data, o.scenario, out);

  std::ostringstream toml;
  toml << "# training config for the scenario with seed " << o.scenario.seed << "\n";
  toml << "manifest = \"" << fs::path(manifest).filename().string() << "\"\n";
  if (data.gallery.size() > 0) toml << "gallery = \"gallery.manifest\"\n";
  WriteText((fs::path(out) / "train.toml").string(), toml.str());
  std::fprintf(stderr, "wrote %s: %d training, %d gallery, %zu probes\n", out.c_str(),
               data.training.size(), data.gallery.size(), data.probes.size());
  return 0;
}

int ValidateCommand(const std::string& dir) {
  const ModelContainer mc = LoadModel(dir);
  mc.Validate();
  nlohmann::json doc;
  doc["parts"] = mc.domains.size();
  doc["components"] = mc.components.size();
  doc["columns"] = mc.labels.size();
  std::vector<std::string> subjects;
  for (const auto& s : mc.Gallery(0).subjects) subjects.push_back(s.label);
  doc["subjects"] = subjects;
  doc["holistic"] = mc.holistic.size() > 0;
  std::cout << doc.dump(1) << '\n';
  return 0;
}

int Run(int argc, char** argv) {
  CLI::App app{"Constrained part-based alignment and recognition"};
  app.require_subcommand(1);

  std::string config, out;
  auto* train = app.add_subcommand("train", "learn a model from a training manifest");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--out", out, "model directory")->required();

  ProbeArgs pa;
  const auto probe_options = [&](CLI::App* c) {
    c->add_option("--config", pa.config, "config file (solver settings)");
    c->add_option("--model", pa.model, "model directory")->required();
    c->add_option("--image", pa.image, "probe PGM")->required();
    c->add_option("--init", pa.init, "box=x,y,w,h | box=canonical | landmarks=<file> | none");
    c->add_option("--component", pa.component, "mixture component")->check(CLI::NonNegativeNumber);
    c->add_option("--out", pa.out, "report JSON (default stdout)");
  };
  auto* align = app.add_subcommand("align", "align one image");
  probe_options(align);
  align->add_option("--overlay", pa.overlay, "PPM with fitted part boxes");
  align->add_flag("--holistic-init", pa.holistic_init, "pre-align with the holistic dictionary");

  auto* recognize = app.add_subcommand("recognize", "identify one probe");
  probe_options(recognize);
  recognize->add_option("--prune", pa.prune, "pruning target P")->check(CLI::PositiveNumber);
  recognize->add_option("--method", pa.method, "part classifier")
      ->check(CLI::IsMember({"ns", "src-lite"}));
  recognize->add_flag("--no-timings", pa.no_timings, "report zero timings");

  int64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic scenario");
  synth->add_option("--config", config, "config file (synth.* keys)");
  auto* seed_opt = synth->add_option("--seed", seed, "scenario seed");
  synth->add_option("--out", out, "output directory")->required();

  std::string model_dir;
  auto* validate = app.add_subcommand("validate-model", "load and check a model directory");
  validate->add_option("--model", model_dir, "model directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train) return Train(config, out);
    if (*align) return AlignCommand(pa);
    if (*recognize) return RecognizeCommand(pa);
    if (*synth) return SynthCommand(config, out, *seed_opt ? &seed : nullptr);
    if (*validate) return ValidateCommand(model_dir);
  } catch (const SolverError& e) {
    std::fprintf(stderr, "cpa: solver error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cpa: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace
}  // namespace cpa

int main(int argc, char** argv) { return cpa::Run(argc, argv); }
