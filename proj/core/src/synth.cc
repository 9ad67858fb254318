#include "cpa/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "cpa/error.h"

namespace cpa {

const std::vector<PartSpec>& FrontalPartTable() {
  static const std::vector<PartSpec> table = {
      {"Center of R-eyebrow", 0.4, 0.2, 24, 16},    {"Center of L-eyebrow", 0.4, 0.2, 24, 16},
      {"Outer corner of R-eye", 0.53, 0.4, 32, 32}, {"Center of R-eye", 0.4, 0.2, 24, 16},
      {"Inner corner of R-eye", 0.58, 0.44, 35, 35}, {"Inner corner of L-eye", 0.58, 0.44, 35, 35},
      {"Center of L-eye", 0.4, 0.2, 24, 16},        {"Outer corner of L-eye", 0.53, 0.4, 32, 32},
      {"R-wing of nose", 0.27, 0.4, 16, 32},        {"L-wing of nose", 0.27, 0.4, 16, 32},
      {"Apex nasi", 0.53, 0.28, 32, 22},            {"Philtrum", 1.07, 0.44, 64, 35},
      {"R-corner of mouth", 0.32, 0.24, 19, 19},    {"L-corner of mouth", 0.32, 0.24, 19, 19},
      {"Mouth center", 0.67, 0.28, 40, 22},         {"Center of underlip", 0.53, 0.2, 32, 16},
      {"Bottom of jaw", 0.53, 0.28, 32, 22},        {"R-ear", 0.4, 0.4, 24, 32},
  };
  return table;
}

std::vector<SynthPart> DefaultConstellation() {
  // Column centers 16 and 44, row centers 10..70: 4 px gaps between parts.
  // Parts 5 and 6 carry stripes and hang tightly below their parents.
  const double us[2] = {16.0, 44.0};
  const double vs[4] = {10.0, 30.0, 50.0, 70.0};
  const int parents[8] = {0, 0, 1, 2, 3, 4, 0, 0};
  const double jitter[8] = {0.6, 0.6, 0.35, 0.35, 0.05, 0.05, 0.6, 0.6};
  std::vector<SynthPart> parts;
  for (int i = 0; i < 8; ++i) {
    SynthPart p;
    p.domain.part_id = i + 1;
    p.domain.center = {us[i % 2], vs[i / 2]};
    p.domain.width = 24;
    p.domain.height = 16;
    p.texture = (i == 4 || i == 5) ? PartTexture::kStripes : PartTexture::kBlobs;
    p.parent = parents[i];
    p.jitter = jitter[i];
    parts.push_back(p);
  }
  return parts;
}

std::vector<PartDomain> Domains(const std::vector<SynthPart>& parts) {
  std::vector<PartDomain> d;
  for (const auto& p : parts) d.push_back(p.domain);
  return d;
}

void SynthScenario::Validate() const {
  if (subjects < 1 || illum_modes < 1 || illum_modes > 7 || gallery_per_subject < 0 ||
      probes_per_subject < 0 || training_images < 0 || training_subjects < 1 ||
      training_subjects > subjects) {
    throw Error("synth scenario: invalid counts");
  }
  for (double r : {max_shift, max_rotation, max_log_scale, part_jitter, part_rotation,
                   part_log_scale, landmark_noise, noise_sigma}) {
    if (!(r >= 0.0)) throw Error("synth scenario: ranges must be nonnegative");
  }
  if (!(occlusion_ratio >= 0.0 && occlusion_ratio <= 0.6)) {
    throw Error("synth scenario: occlusion_ratio must lie in [0, 0.6]");
  }
  if (constellation.empty()) throw Error("synth scenario: empty constellation");
  TreeConfig tree;
  for (const auto& p : constellation) tree.parent.push_back(p.parent);
  tree.Validate();
}

namespace {

constexpr double kMargin = 2.0;  // px of ownership beyond each part box
constexpr double kPad = 16.0;    // texture raster padding around the frame

// Subject-specific random streams are derived from the scenario seed.
std::mt19937_64 Stream(uint64_t seed, uint64_t a, uint64_t b) {
  std::seed_seq seq{uint32_t(seed), uint32_t(seed >> 32), uint32_t(a), uint32_t(b)};
  return std::mt19937_64(seq);
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double ChebyshevOutside(Point p, const PartDomain& d) {
  const double du = std::abs(p.u - d.center.u) - 0.5 * (d.width - 1);
  const double dv = std::abs(p.v - d.center.v) - 0.5 * (d.height - 1);
  return std::max({du, dv, 0.0});
}

}  // namespace

SynthRenderer::SynthRenderer(const SynthScenario& scenario, int subject) : scenario_(&scenario) {
  auto rng = Stream(scenario.seed, 1, uint64_t(subject));
  const Rect& c = scenario.canonical;
  origin_u_ = c.x - kPad;
  origin_v_ = c.y - kPad;
  raster_w_ = int((c.width + 2 * kPad) / step_) + 1;
  raster_h_ = int((c.height + 2 * kPad) / step_) + 1;

  struct Blob {
    double u, v, r, a;
  };
  std::vector<Blob> blobs;
  const double area = (c.width + 2 * kPad) * (c.height + 2 * kPad);
  const int count = int(area / 25.0);
  for (int k = 0; k < count; ++k) {
    blobs.push_back({Uniform(rng, origin_u_, origin_u_ + c.width + 2 * kPad),
                     Uniform(rng, origin_v_, origin_v_ + c.height + 2 * kPad),
                     Uniform(rng, 2.0, 4.0), Uniform(rng, -1.0, 1.0)});
  }
  std::vector<double> field(size_t(raster_w_) * raster_h_, 0.0);
  for (const Blob& b : blobs) {
    const double reach = 4.0 * b.r;
    const int i0 = std::max(0, int((b.u - reach - origin_u_) / step_));
    const int i1 = std::min(raster_w_ - 1, int((b.u + reach - origin_u_) / step_) + 1);
    const int j0 = std::max(0, int((b.v - reach - origin_v_) / step_));
    const int j1 = std::min(raster_h_ - 1, int((b.v + reach - origin_v_) / step_) + 1);
    const double inv = 1.0 / (2.0 * b.r * b.r);
    for (int j = j0; j <= j1; ++j) {
      const double dv = origin_v_ + j * step_ - b.v;
      for (int i = i0; i <= i1; ++i) {
        const double du = origin_u_ + i * step_ - b.u;
        field[size_t(j) * raster_w_ + i] += b.a * std::exp(-(du * du + dv * dv) * inv);
      }
    }
  }
  raster_.resize(field.size());
  for (size_t k = 0; k < field.size(); ++k) raster_[k] = 0.5 + 0.45 * std::tanh(2.5 * field[k]);

  for (size_t i = 0; i < scenario.constellation.size(); ++i) {
    stripe_freq_.push_back(Uniform(rng, 1.0 / 9.0, 1.0 / 6.0));
    stripe_phase_.push_back(Uniform(rng, 0.0, 2.0 * std::numbers::pi));
  }
}

double SynthRenderer::Texture(Point p, int part) const {
  const double fu = std::clamp((p.u - origin_u_) / step_, 0.0, double(raster_w_ - 1));
  const double fv = std::clamp((p.v - origin_v_) / step_, 0.0, double(raster_h_ - 1));
  const int i0 = std::min(int(fu), raster_w_ - 2), j0 = std::min(int(fv), raster_h_ - 2);
  const double a = fu - i0, b = fv - j0;
  const auto at = [&](int i, int j) { return raster_[size_t(j) * raster_w_ + i]; };
  const double blob = (1 - b) * ((1 - a) * at(i0, j0) + a * at(i0 + 1, j0)) +
                      b * ((1 - a) * at(i0, j0 + 1) + a * at(i0 + 1, j0 + 1));
  if (part < 0 || scenario_->constellation[part].texture == PartTexture::kBlobs) return blob;
  // Horizontal stripes: strong structure along v, faint detail along u.
  const double stripe =
      std::sin(2.0 * std::numbers::pi * stripe_freq_[part] * p.v + stripe_phase_[part]);
  return 0.5 + 0.3 * stripe + 0.02 * (blob - 0.5);
}

double SynthRenderer::Illumination(Point p, const std::vector<double>& illum) const {
  const Rect& c = scenario_->canonical;
  const double x = (p.u - (c.x + 0.5 * c.width)) / (0.5 * c.width);
  const double y = (p.v - (c.y + 0.5 * c.height)) / (0.5 * c.height);
  const double modes[7] = {1.0, x, y, x * y, x * x - 0.5, y * y - 0.5,
                           std::cos(std::numbers::pi * x) * std::cos(0.5 * std::numbers::pi * y)};
  double total = 0;
  for (size_t j = 0; j < illum.size() && j < 7; ++j) total += illum[j] * modes[j];
  return total;
}

double SynthRenderer::Appearance(Point p, const std::vector<double>& illum) const {
  return Texture(p, -1) * Illumination(p, illum);
}

Image SynthRenderer::Render(const AlignmentState& state, const std::vector<double>& illum) const {
  const auto& parts = scenario_->constellation;
  const SimTransform inv_sigma = Invert(state.sigma);
  std::vector<SimTransform> inv_nu;
  for (const auto& n : state.nu) inv_nu.push_back(Invert(n));
  Image img(scenario_->image_width, scenario_->image_height);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const Point q = Apply(inv_sigma, {double(u), double(v)});
      int owner = -1;
      double best = kMargin;
      Point p = q;
      for (size_t i = 0; i < parts.size(); ++i) {
        const Point pi = Apply(inv_nu[i], q);
        const double d = ChebyshevOutside(pi, parts[i].domain);
        if (d <= best && (owner < 0 || d < best)) {
          best = d;
          owner = int(i);
          p = pi;
        }
      }
      img.at(u, v) = std::clamp(Texture(p, owner) * Illumination(p, illum), 0.0, 1.0);
    }
  }
  return img;
}

namespace {

std::vector<double> RandomIllumination(std::mt19937_64& rng, int modes) {
  std::vector<double> c(modes);
  c[0] = Uniform(rng, 0.7, 0.9);
  for (int j = 1; j < modes; ++j) c[j] = Uniform(rng, -0.04, 0.04);
  return c;
}

// Part offsets drawn along the constellation tree.
TransformSet RandomParts(std::mt19937_64& rng, const SynthScenario& sc) {
  const auto& parts = sc.constellation;
  TreeConfig tree;
  for (const auto& p : parts) tree.parent.push_back(p.parent);
  TransformSet nu(parts.size());
  for (int i : tree.TopologicalOrder()) {
    const double j = parts[i].jitter * sc.part_jitter;
    Vec4 d(Uniform(rng, -j, j), Uniform(rng, -j, j),
           sc.part_log_scale > 0 ? Uniform(rng, -sc.part_log_scale, sc.part_log_scale) : 0.0,
           sc.part_rotation > 0 ? Uniform(rng, -sc.part_rotation, sc.part_rotation) : 0.0);
    const int p = tree.ParentPart(i);
    if (p >= 0) d += nu[p].AsVector();
    nu[i] = SimTransform::FromVector(d);
  }
  return nu;
}

SimTransform NominalSigma(const SynthScenario& sc) {
  return SimTransform::Translation(sc.frame_offset.u, sc.frame_offset.v);
}

// Rotation and scaling about the frame center, then a shift.
SimTransform RandomSigma(std::mt19937_64& rng, const SynthScenario& sc) {
  const double sh = sc.max_shift;
  const double du = sh > 0 ? Uniform(rng, -sh, sh) : 0.0;
  const double dv = sh > 0 ? Uniform(rng, -sh, sh) : 0.0;
  const double th = sc.max_rotation > 0 ? Uniform(rng, -sc.max_rotation, sc.max_rotation) : 0.0;
  const double s = sc.max_log_scale > 0 ? Uniform(rng, -sc.max_log_scale, sc.max_log_scale) : 0.0;
  const Point c0 = sc.canonical.Center();
  const SimTransform about = Compose(SimTransform::Translation(c0.u, c0.v),
                                     Compose(SimTransform{0, 0, s, th},
                                             SimTransform::Translation(-c0.u, -c0.v)));
  return Compose(SimTransform::Translation(sc.frame_offset.u + du, sc.frame_offset.v + dv), about);
}

std::vector<Point> TrueLandmarks(const AlignmentState& st, const SynthScenario& sc,
                                 std::mt19937_64& rng, double noise) {
  std::vector<Point> out;
  for (size_t i = 0; i < sc.constellation.size(); ++i) {
    Point p = Apply(Compose(st.sigma, st.nu[i]), sc.constellation[i].domain.center);
    if (noise > 0) {
      p.u += Uniform(rng, -noise, noise);
      p.v += Uniform(rng, -noise, noise);
    }
    out.push_back(p);
  }
  return out;
}

void Occlude(Image& img, const AlignmentState& st, const SynthScenario& sc, std::mt19937_64& rng) {
  const Rect& c = sc.canonical;
  const double side = std::sqrt(sc.occlusion_ratio * c.width * c.height);
  const double x0 = c.x + Uniform(rng, 0.0, std::max(c.width - side, 0.0));
  const double y0 = c.y + Uniform(rng, 0.0, std::max(c.height - side, 0.0));
  const double value = Uniform(rng, 0.0, 1.0);
  const SimTransform inv = Invert(st.sigma);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const Point q = Apply(inv, {double(u), double(v)});
      if (q.u >= x0 && q.u < x0 + side && q.v >= y0 && q.v < y0 + side) img.at(u, v) = value;
    }
  }
}

std::string SubjectLabel(int s) {
  std::ostringstream os;
  os << 's' << std::setw(2) << std::setfill('0') << s;
  return os.str();
}

}  // namespace

SynthData Generate(const SynthScenario& sc) {
  sc.Validate();
  std::vector<SynthRenderer> renderers;
  for (int s = 0; s < sc.subjects; ++s) renderers.emplace_back(sc, s);
  const std::vector<PartDomain> domains = Domains(sc.constellation);
  const TransformSet rest(sc.constellation.size());

  SynthData data;
  {
    auto rng = Stream(sc.seed, 2, 0);
    std::vector<Image> images;
    std::vector<std::vector<Point>> landmarks;
    std::vector<std::string> labels;
    for (int k = 0; k < sc.training_images; ++k) {
      const int s = k % sc.training_subjects;
      AlignmentState st{NominalSigma(sc), rest};
      if (sc.perturb_training) st = {RandomSigma(rng, sc), RandomParts(rng, sc)};
      const auto illum = RandomIllumination(rng, sc.illum_modes);
      images.push_back(renderers[s].Render(st, illum));
      landmarks.push_back(TrueLandmarks(st, sc, rng, sc.landmark_noise));
      labels.push_back(SubjectLabel(s));
      data.training_truth.push_back(st);
    }
    data.training = TrainingSet::FromLandmarks(sc.canonical, domains, std::move(images), landmarks);
    data.training.labels = std::move(labels);
  }
  {
    auto rng = Stream(sc.seed, 3, 0);
    data.gallery.canonical = sc.canonical;
    data.gallery.domains = domains;
    for (int s = 0; s < sc.subjects; ++s) {
      for (int k = 0; k < sc.gallery_per_subject; ++k) {
        const AlignmentState st{NominalSigma(sc), rest};
        data.gallery.images.push_back(renderers[s].Render(st, RandomIllumination(rng, sc.illum_modes)));
        data.gallery.init_sigma.push_back(st.sigma);
        data.gallery.init_nu.push_back(st.nu);
        data.gallery.labels.push_back(SubjectLabel(s));
      }
    }
  }
  {
    auto rng = Stream(sc.seed, 4, 0);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int s = 0; s < sc.subjects; ++s) {
      for (int k = 0; k < sc.probes_per_subject; ++k) {
        SynthProbe probe;
        probe.label = SubjectLabel(s);
        probe.truth = {RandomSigma(rng, sc), RandomParts(rng, sc)};
        probe.image = renderers[s].Render(probe.truth, RandomIllumination(rng, sc.illum_modes));
        if (sc.occlusion_ratio > 0) Occlude(probe.image, probe.truth, sc, rng);
        if (sc.noise_sigma > 0) {
          for (double& x : probe.image.data) {
            x = std::clamp(x + sc.noise_sigma * noise(rng), 0.0, 1.0);
          }
        }
        probe.landmarks = TrueLandmarks(probe.truth, sc, rng, 0.0);
        probe.box = {sc.frame_offset.u + sc.canonical.x, sc.frame_offset.v + sc.canonical.y,
                     sc.canonical.width, sc.canonical.height};
        data.probes.push_back(std::move(probe));
      }
    }
  }
  return data;
}

RecoveryMetrics ScoreRecovery(const TransformSet& estimate, const TransformSet& truth,
                              const std::vector<PartDomain>& domains) {
  if (estimate.size() != truth.size() || truth.size() != domains.size()) {
    throw Error("recovery: part count mismatch");
  }
  RecoveryMetrics m;
  if (truth.size() < 2) return m;
  const SimTransform ge = Invert(estimate[0]), gt = Invert(truth[0]);
  double t2 = 0, r2 = 0, s2 = 0;
  for (size_t i = 1; i < truth.size(); ++i) {
    const SimTransform e = Compose(ge, estimate[i]);
    const SimTransform t = Compose(gt, truth[i]);
    const Point pe = Apply(e, domains[i].center), pt = Apply(t, domains[i].center);
    t2 += (pe.u - pt.u) * (pe.u - pt.u) + (pe.v - pt.v) * (pe.v - pt.v);
    r2 += (e.theta - t.theta) * (e.theta - t.theta);
    s2 += (e.s - t.s) * (e.s - t.s);
  }
  const double n = double(truth.size() - 1);
  m.translation_rms = std::sqrt(t2 / n);
  m.rotation_rms = std::sqrt(r2 / n);
  m.scale_rms = std::sqrt(s2 / n);
  return m;
}

TreeShapeModel GeneratorShapeModel(const SynthScenario& sc, int samples) {
  auto rng = Stream(sc.seed, 5, 0);
  TreeShapeModel model;
  for (const auto& p : sc.constellation) model.config.parent.push_back(p.parent);
  std::vector<TransformSet> draws;
  for (int k = 0; k < samples; ++k) draws.push_back(RandomParts(rng, sc));
  for (int i = 0; i < model.parts(); ++i) {
    std::vector<Vec4> diffs;
    for (const auto& nu : draws) diffs.push_back(NuDelta(nu, model.config, i));
    model.z.push_back(MlEstimate(diffs));
  }
  return model;
}

std::string WriteScenario(const SynthData& data, const SynthScenario& sc, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "gallery");
  fs::create_directories(fs::path(dir) / "probes");
  const auto write_landmarks = [](const std::string& path, const std::vector<Point>& pts) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << std::setprecision(17);
    for (const auto& p : pts) out << p.u << ' ' << p.v << '\n';
  };
  const auto centers = [&](const AlignmentState& st) {
    std::vector<Point> pts;
    for (size_t i = 0; i < sc.constellation.size(); ++i) {
      pts.push_back(Apply(Compose(st.sigma, st.nu[i]), sc.constellation[i].domain.center));
    }
    return pts;
  };

  const std::string manifest = (fs::path(dir) / "train.manifest").string();
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest);
  out << std::setprecision(17);
  out << "# synthetic scenario, seed " << sc.seed << "\n";
  out << "canonical " << sc.canonical.width << ' ' << sc.canonical.height << "\n";
  for (const auto& p : sc.constellation) {
    out << "part " << p.domain.part_id << " p" << p.domain.part_id << ' ' << p.domain.width << ' '
        << p.domain.height << ' ' << p.domain.center.u << ' ' << p.domain.center.v << "\n";
  }
  for (int k = 0; k < data.training.size(); ++k) {
    std::ostringstream name;
    name << "train/" << std::setw(4) << std::setfill('0') << k;
    WritePgm((fs::path(dir) / (name.str() + ".pgm")).string(), data.training.images[k]);
    write_landmarks((fs::path(dir) / (name.str() + ".lmk")).string(),
                    centers(data.training_truth[k]));
    out << "image " << name.str() << ".pgm " << name.str() << ".lmk 0 " << data.training.labels[k]
        << "\n";
  }

  const std::string gallery = (fs::path(dir) / "gallery.manifest").string();
  std::ofstream gout(gallery);
  if (!gout) throw IoError("cannot write " + gallery);
  gout << std::setprecision(17);
  gout << "canonical " << sc.canonical.width << ' ' << sc.canonical.height << "\n";
  for (const auto& p : sc.constellation) {
    gout << "part " << p.domain.part_id << " p" << p.domain.part_id << ' ' << p.domain.width << ' '
         << p.domain.height << ' ' << p.domain.center.u << ' ' << p.domain.center.v << "\n";
  }
  for (int k = 0; k < data.gallery.size(); ++k) {
    std::ostringstream name;
    name << "gallery/" << std::setw(4) << std::setfill('0') << k;
    WritePgm((fs::path(dir) / (name.str() + ".pgm")).string(), data.gallery.images[k]);
    AlignmentState st{data.gallery.init_sigma[k], data.gallery.init_nu[k]};
    write_landmarks((fs::path(dir) / (name.str() + ".lmk")).string(), centers(st));
    gout << "image " << name.str() << ".pgm " << name.str() << ".lmk 0 " << data.gallery.labels[k]
         << "\n";
  }

  std::ofstream pout(fs::path(dir) / "probes.txt");
  if (!pout) throw IoError("cannot write probe list");
  pout << std::setprecision(17);
  pout << "# path label box_x box_y box_w box_h sigma(tu tv s theta) nu(tu tv s theta)...\n";
  for (size_t k = 0; k < data.probes.size(); ++k) {
    const SynthProbe& pr = data.probes[k];
    std::ostringstream name;
    name << "probes/" << std::setw(4) << std::setfill('0') << k;
    WritePgm((fs::path(dir) / (name.str() + ".pgm")).string(), pr.image);
    write_landmarks((fs::path(dir) / (name.str() + ".lmk")).string(), pr.landmarks);
    pout << name.str() << ".pgm " << pr.label << ' ' << pr.box.x << ' ' << pr.box.y << ' '
         << pr.box.width << ' ' << pr.box.height;
    const auto put = [&](const SimTransform& t) {
      pout << ' ' << t.tu << ' ' << t.tv << ' ' << t.s << ' ' << t.theta;
    };
    put(pr.truth.sigma);
    for (const auto& n : pr.truth.nu) put(n);
    pout << "\n";
  }
  return manifest;
}

}  // namespace cpa
