// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpa/align.h"
#include "cpa/learn.h"
#include "cpa/model_io.h"
#include "cpa/recognize.h"
#include "cpa/shape_model.h"
#include "cpa/solver.h"
#include "cpa/synth.h"
#include "test_support.h"

namespace cpa {
namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Format(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string Format(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

// 1. Proximal operators.
Outcome ProximalOperators() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> x(-5, 5), a(0, 3);
  int mismatches = 0;
  for (int k = 0; k < 100000; ++k) {
    const double v = x(rng), alpha = a(rng);
    const double expect = v > alpha ? v - alpha : (v < -alpha ? v + alpha : 0.0);
    mismatches += SoftThreshold(v, alpha) != expect;
  }
  double worst = 0;
  std::uniform_int_distribution<int> dim(1, 8);
  std::normal_distribution<double> g;
  for (int k = 0; k < 100; ++k) {
    Eigen::MatrixXd m(dim(rng), dim(rng));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    const double alpha = 0.05 + a(rng) * 0.5;
    worst = std::max(worst, (SvdShrink(m, alpha) - test::NuclearProxByFactorization(m, alpha)).norm());
  }
  const double sec = Seconds(t0);
  return {mismatches == 0 && worst <= 1e-6 && sec < 10,
          Format("soft-threshold mismatches %d/100000, svd-shrink max Frobenius error %.2e, %.1fs",
                 mismatches, worst, sec)};
}

// 2. Derivatives against finite differences.
Outcome Derivatives() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst_j = 0, worst_coarse = 0, worst_g = 0;
  for (int k = 0; k < 50; ++k) {
    const Image img = test::SmoothImage(70, 80, 1000 + k);
    PartDomain dom;
    dom.part_id = 1;
    dom.width = 12 + k % 13;
    dom.height = 8 + k % 9;
    dom.center = {35 + 5 * u(rng), 40 + 5 * u(rng)};
    const SimTransform t{3 * u(rng), 3 * u(rng), 0.05 * u(rng), 0.1 * u(rng)};
    // The bilinear warp has kinks on pixel lines; a step of 1e-4 straddles
    // one at a handful of samples, so the check uses a finer step and the
    // coarse figure is reported alongside.
    worst_j = std::max(worst_j, test::JacobianRelativeError(img, t, dom, 1e-7));
    worst_coarse = std::max(worst_coarse, test::JacobianRelativeError(img, t, dom, 1e-4));

    const int m = 1 + k % 8;
    const TreeShapeModel model = test::RandomShapeModel(rng, m);
    worst_g = std::max(worst_g, test::GradientRelativeError(test::RandomTransforms(rng, m, 1.0), model));
  }
  const double sec = Seconds(t0);
  return {worst_j <= 1e-3 && worst_g <= 1e-6 && sec < 30,
          Format("warp Jacobian max rel error %.2e (step 1e-7; %.2e at step 1e-4), shape gradient max "
                 "rel error %.2e, %.1fs",
                 worst_j, worst_coarse, worst_g, sec)};
}

// 3. Tree-sparse delta system.
Outcome DeltaSystem() {
  std::mt19937_64 rng(303);
  double worst_rel = 0, worst_grad = 0;
  for (int k = 0; k < 100; ++k) {
    const int m = 1 + k % 8;
    const TreeShapeModel model = test::RandomShapeModel(rng, m);
    BlockSystem sys;
    for (int i = 0; i < m; ++i) sys.g_blocks.push_back(test::RandomSpd(rng, 0.1, 5.0));
    sys.q = Mat4X::Random(4, m);
    sys.model = &model;
    sys.eta = 0.05 + 0.1 * (k % 7);
    const TransformSet nu = test::RandomTransforms(rng, m, 1.0);
    const Mat4X d = SolveDeltaSystem(sys, nu);
    Eigen::MatrixXd w;
    Eigen::VectorXd c;
    AssembleDeltaSystem(sys, nu, &w, &c);
    const Eigen::VectorXd dense = w.fullPivLu().solve(c);
    const Eigen::Map<const Eigen::VectorXd> flat(d.data(), d.size());
    worst_rel = std::max(worst_rel, (flat - dense).norm() / dense.norm());
    TransformSet moved(m);
    for (int i = 0; i < m; ++i) moved[i] = SimTransform::FromVector(nu[i].AsVector() + d.col(i));
    const Mat4X grad = ShapeCostGradient(moved, model);
    for (int i = 0; i < m; ++i) {
      const Vec4 r = sys.g_blocks[i] * d.col(i) - sys.q.col(i) + sys.eta * grad.col(i);
      worst_grad = std::max(worst_grad, r.norm());
    }
  }
  return {worst_rel <= 1e-10 && worst_grad <= 1e-8,
          Format("max rel error vs dense %.2e, max subproblem gradient %.2e", worst_rel, worst_grad)};
}

// Random tree model with face-like spreads: scale and angle offsets about
// ten times tighter than translations (in px).
TreeShapeModel FaceLikeShapeModel(std::mt19937_64& rng, int m) {
  TreeShapeModel model = test::RandomShapeModel(rng, m, 0.5, 3.0);
  const Vec4 d(1, 1, 10, 10);
  for (auto& z : model.z) {
    z.mu.tail<2>() *= 0.1;
    z.lambda = d.asDiagonal() * z.lambda * d.asDiagonal();
  }
  return model;
}

// 4. Holistic re-split.
Outcome HolisticSplit() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst_zeta = 0, worst_increase = -1e300, worst_grid = 0;
  for (int k = 0; k < 100; ++k) {
    const int m = 1 + k % 8;
    const TreeShapeModel model = FaceLikeShapeModel(rng, m);
    const TransformSet nu = test::RandomTransforms(rng, m, 1.5);
    const SimTransform sigma{8 + u(rng), 8 + u(rng), 0.05 * u(rng), 0.05 * u(rng)};
    const HolisticResult r = HolisticStep(sigma, nu, model);
    worst_increase = std::max(worst_increase, r.cost_after - r.cost_before);
    for (int i = 0; i < m; ++i) {
      const Vec4 a = Compose(sigma, nu[i]).AsVector(), b = Compose(r.sigma, r.nu[i]).AsVector();
      worst_zeta = std::max(worst_zeta, (a - b).cwiseAbs().maxCoeff());
    }
    const double grid = test::HolisticGridMinimum(sigma, nu, model, 3.0, 0.4, 5);
    worst_grid = std::max(worst_grid, std::abs(r.cost_after - grid));
  }
  return {worst_zeta <= 1e-8 && worst_increase <= 0.0 && worst_grid <= 1e-3,
          Format("max zeta change %.2e, max cost increase %.2e, max |g - grid| %.2e", worst_zeta,
                 worst_increase, worst_grid)};
}

// 5. MAP closed forms.
Outcome MapClosedForms() {
  std::mt19937_64 rng(505);
  double worst_empty = 0;
  for (int k = 0; k < 20; ++k) {
    EdgeGaussian g;
    g.mu = Vec4::Random();
    g.lambda = test::RandomSpd(rng, 0.5, 40);
    const EdgeGaussian map = MapEstimate({}, PriorFromGaussian(g, 0.25, 60));
    worst_empty = std::max({worst_empty, (map.mu - g.mu).norm(),
                            (map.lambda - g.lambda).norm() / g.lambda.norm()});
  }

  // Samples whose mean and population covariance equal the seeding Gaussian.
  const Mat4 sigma = test::RandomSpd(rng, 0.1, 2.0);
  const Eigen::SelfAdjointEigenSolver<Mat4> es(sigma);
  const Vec4 mu(1, 2, 0.1, -0.1);
  std::vector<Vec4> agree;
  for (int c = 0; c < 4; ++c) {
    const Vec4 axis = es.eigenvectors().col(c) * std::sqrt(es.eigenvalues()[c] * 4.0);
    agree.push_back(mu + axis);
    agree.push_back(mu - axis);
  }
  EdgeGaussian seed;
  seed.mu = mu;
  seed.lambda = sigma.inverse();
  const EdgeGaussian collapsed = MapEstimate(agree, PriorFromGaussian(seed, 1.0, 8));
  const double collapse = std::max((collapsed.mu - mu).norm(),
                                   (collapsed.lambda - seed.lambda).norm() / seed.lambda.norm());

  std::normal_distribution<double> gauss;
  EdgeGaussian away;
  away.mu = Vec4(1, 1, 0, 0);
  away.lambda = 4 * Mat4::Identity();
  std::vector<Vec4> all;
  for (int k = 0; k < 5120; ++k) {
    all.push_back(Vec4(gauss(rng), 0.5 * gauss(rng), 0.1 * gauss(rng), 0.2 * gauss(rng)));
  }
  bool monotone = true;
  double previous = 1e300;
  std::string gaps;
  for (int n : {20, 80, 320, 1280, 5120}) {
    const std::vector<Vec4> s(all.begin(), all.begin() + n);
    const EdgeGaussian map = MapEstimate(s, PriorFromGaussian(away, 1.0, 10));
    const EdgeGaussian ml = MlEstimate(s);
    const double gap = (map.lambda - ml.lambda).norm() / ml.lambda.norm();
    monotone = monotone && gap < previous;
    previous = gap;
    gaps += Format(" %.3g", gap);
  }
  return {worst_empty <= 1e-10 && collapse <= 1e-10 && monotone,
          Format("n=0 error %.2e, agreeing-data error %.2e, precision gaps%s", worst_empty, collapse,
                 gaps.c_str())};
}

// 6. Tree configuration learning.
Outcome TreeLearning() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g;
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + trial % 4;
    const Mat4X base = Mat4X::Random(4, m);
    std::vector<TransformSet> samples;
    for (int k = 0; k < 40; ++k) {
      TransformSet nu(m);
      const double shared = g(rng);
      for (int i = 0; i < m; ++i) {
        Vec4 p;
        for (int c = 0; c < 4; ++c) p[c] = base(c, i) * shared + 0.3 * g(rng);
        nu[i] = SimTransform::FromVector(p);
      }
      samples.push_back(nu);
    }
    const double vartheta = trial % 2 ? 0.25 : 0.0;
    const Eigen::MatrixXd scores = EdgeScores(samples, vartheta);
    const TreeConfig tree = LearnTreeConfig(samples, vartheta);
    worst = std::max(worst, test::TreeCost(scores, tree) - test::BruteForceArborescenceCost(scores));
  }

  std::vector<TransformSet> chain;
  for (int k = 0; k < 200; ++k) {
    TransformSet nu(3);
    Vec4 acc = Vec4::Zero();
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 4; ++c) acc[c] += 0.05 * (c < 2 ? 1.0 : 0.1) * g(rng);
      nu[i] = SimTransform::FromVector(acc);
    }
    chain.push_back(nu);
  }
  const bool planted = LearnTreeConfig(chain, 0.25).parent == std::vector<int>{0, 1, 2};
  return {worst <= 1e-9 && planted,
          Format("max cost above exhaustive optimum %.2e, planted chain %s", worst,
                 planted ? "recovered" : "missed")};
}

// 7. Part alignment recovery and the eta = 0 drift.
Outcome AlignmentRecovery() {
  const auto t0 = Clock::now();
  SynthScenario sc;
  sc.seed = 11;
  sc.training_images = 0;
  sc.probes_per_subject = 10;
  sc.noise_sigma = 0.01;
  const SynthData d = Generate(sc);
  const auto doms = Domains(sc.constellation);
  const TreeShapeModel shape = GeneratorShapeModel(sc);
  int good = 0;
  double drift2 = 0;
  std::vector<double> rms;
  for (const auto& p : d.probes) {
    const int s = std::stoi(p.label.substr(1));
    CpaModel m = test::SubjectModel(d, sc, s, shape);
    const TransformSet truth = test::TruthCombined(p.truth);
    const AlignmentResult r = Align(p.image, m, InitHint::Box(p.box), AlmSettings{});
    const double e = ScoreRecovery(r.Combined(), truth, doms).translation_rms;
    rms.push_back(e);
    good += e <= 0.25;
    m.SetWeights(kDefaultLambdaHat, 0.0);
    const AlignmentResult r0 = Align(p.image, m, InitHint::Box(p.box), AlmSettings{});
    const double e0 = ScoreRecovery(r0.Combined(), truth, doms).translation_rms;
    drift2 += e0 * e0;
  }
  const int n = int(d.probes.size());
  const double drift = std::sqrt(drift2 / n);
  std::sort(rms.begin(), rms.end());
  return {good * 100 >= 95 * n && drift > 1.0,
          Format("%d/%d probes within 0.25 px (median %.3f), eta=0 RMS over probes %.2f px, %.0fs", good,
                 n, rms[n / 2], drift, Seconds(t0))};
}

// Centered relative part-center error against ground truth (the learned
// frame is defined up to a constant offset per part).
double CenteredRms(const std::vector<AlignmentState>& est, const std::vector<AlignmentState>& truth,
                   const std::vector<PartDomain>& doms) {
  const int n = int(est.size()), m = int(doms.size());
  double total = 0;
  for (int i = 1; i < m; ++i) {
    std::vector<Point> err(n);
    Point mean{0, 0};
    for (int k = 0; k < n; ++k) {
      const auto rel = [&](const AlignmentState& s) {
        const Point a = Apply(Compose(s.sigma, s.nu[i]), doms[i].center);
        const Point b = Apply(Compose(s.sigma, s.nu[0]), doms[0].center);
        return Point{a.u - b.u, a.v - b.v};
      };
      const Point e = rel(est[k]), t = rel(truth[k]);
      err[k] = {e.u - t.u, e.v - t.v};
      mean.u += err[k].u / n;
      mean.v += err[k].v / n;
    }
    for (const auto& e : err) total += (e.u - mean.u) * (e.u - mean.u) + (e.v - mean.v) * (e.v - mean.v);
  }
  return std::sqrt(total / (n * (m - 1)));
}

// 8. Dictionary learning recovery and the covariance-collapse contrast.
Outcome LearningStability() {
  SynthScenario sc;
  sc.seed = 21;
  sc.subjects = 1;
  sc.illum_modes = 1;
  sc.gallery_per_subject = 0;
  sc.probes_per_subject = 0;
  sc.training_images = 60;
  sc.max_shift = 3;
  sc.max_rotation = 5 * std::numbers::pi / 180;
  sc.max_log_scale = std::log(1.05);
  sc.part_rotation = 0.08;
  sc.part_log_scale = 0.08;
  sc.landmark_noise = 1.0;
  for (auto& p : sc.constellation) p.texture = PartTexture::kBlobs;
  const SynthData d = Generate(sc);
  const auto doms = Domains(sc.constellation);

  const auto run = [&](double vartheta, double* sec) {
    LearnSettings ls;
    ls.eta_hat = 0.002;
    ls.vartheta = vartheta;
    ls.max_rounds = 10;
    const auto t0 = Clock::now();
    LearnedModel lm = LearnModel(d.training, nullptr, ls);
    *sec = Seconds(t0);
    return lm;
  };
  double sec_prior = 0, sec_ml = 0;
  const LearnedModel prior = run(0.25, &sec_prior);
  const LearnedModel ml = run(0.0, &sec_ml);
  const auto& tp = prior.trace.mean_log_cov_det;
  const auto& tm = ml.trace.mean_log_cov_det;
  const double band = *std::max_element(tp.begin(), tp.end()) - *std::min_element(tp.begin(), tp.end());
  const double drop = tm.front() - *std::min_element(tm.begin(), tm.end());
  const double rms = CenteredRms(prior.fit.states, d.training_truth, doms);
  return {rms <= 0.5 && band <= 2.0 && drop >= 5.0 && std::max(sec_prior, sec_ml) < 300,
          Format("re-aligned rms %.2f px; vartheta=0.25 ln|cov| range %.2f over %zu values; vartheta=0 "
                 "drop %.2f (%.2f -> %.2f); %.0fs and %.0fs",
                 rms, band, tp.size(), drop, tm.front(), tm.back(), sec_prior, sec_ml)};
}

GalleryModel MakeGallery(const SynthData& d, const SynthScenario& sc) {
  GalleryModel g;
  g.canonical = sc.canonical;
  g.domains = Domains(sc.constellation);
  g.shape = GeneratorShapeModel(sc);
  for (int s = 0; s < sc.subjects; ++s) {
    const CpaModel m = test::SubjectModel(d, sc, s, g.shape);
    g.subjects.push_back({d.gallery.labels[s * sc.gallery_per_subject], m.dictionaries});
  }
  return g;
}

bool PruneBracketHolds(const RecognitionReport& rep, int target) {
  const PruneResult p = Prune(rep.per_subject_residuals, target);
  const int n = int(rep.per_subject_residuals.rows());
  if (int(rep.pruned_set.size()) != int(p.pruned.size()) || rep.depth != p.depth) return false;
  if (n < target) return int(p.pruned.size()) == n;
  const bool lower = p.depth == 1 || int(p.sets[p.depth - 2].size()) < target;
  return lower && int(p.pruned.size()) >= target;
}

// 9. End-to-end recognition.
Outcome Recognition() {
  const auto t0 = Clock::now();
  SynthScenario clean;
  clean.seed = 41;
  clean.training_images = 0;
  clean.probes_per_subject = 3;
  clean.max_shift = 0;
  clean.part_jitter = 0;
  SynthScenario perturbed = clean;
  perturbed.max_shift = 3;
  perturbed.part_jitter = 1;
  perturbed.occlusion_ratio = 0.1;

  int ok_clean = 0, ok_pert = 0, bracket = 0, runs = 0;
  int n_clean = 0, n_pert = 0;
  for (int pass = 0; pass < 2; ++pass) {
    const SynthScenario& sc = pass == 0 ? clean : perturbed;
    const SynthData d = Generate(sc);
    const GalleryModel g = MakeGallery(d, sc);
    for (const auto& p : d.probes) {
      RecognizeSettings rs;
      rs.prune = 3;
      rs.hint = InitHint::Box(p.box);
      const RecognitionReport rep = Recognize(p.image, g, rs);
      (pass == 0 ? ok_clean : ok_pert) += rep.identity == p.label;
      (pass == 0 ? n_clean : n_pert) += 1;
      bracket += PruneBracketHolds(rep, rs.prune);
      ++runs;
    }
  }
  const double sec = Seconds(t0);
  return {ok_clean == n_clean && ok_pert * 100 >= 95 * n_pert && bracket == runs && sec < 600,
          Format("clean %d/%d, perturbed+occluded %d/%d, pruning bracket %d/%d, %.0fs", ok_clean, n_clean,
                 ok_pert, n_pert, bracket, runs, sec)};
}

bool BitEqual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

// 10. Determinism and serialization.
Outcome Determinism() {
  SynthScenario sc;
  sc.seed = 51;
  sc.subjects = 3;
  sc.gallery_per_subject = 5;
  sc.probes_per_subject = 1;
  sc.training_images = 20;
  sc.occlusion_ratio = 0.1;
  sc.constellation.resize(4);
  const SynthData a = Generate(sc), b = Generate(sc);
  bool same_data = true;
  for (size_t k = 0; k < a.probes.size(); ++k) same_data = same_data && a.probes[k].image.data == b.probes[k].image.data;
  for (size_t k = 0; k < a.training.images.size(); ++k) {
    same_data = same_data && a.training.images[k].data == b.training.images[k].data;
  }

  LearnSettings ls;
  ls.max_rounds = 2;
  const auto learn = [&](const SynthData& d) {
    MixtureSpec spec;
    spec.availability = {std::vector<bool>(4, true)};
    return ModelContainer::FromMixture(LearnMixture({d.training}, spec, {nullptr}, ls), ls);
  };
  const ModelContainer ma = learn(a), mb = learn(b);
  bool same_model = true;
  for (size_t i = 0; i < ma.components[0].dictionaries.size(); ++i) {
    same_model = same_model && BitEqual(ma.components[0].dictionaries[i], mb.components[0].dictionaries[i]);
  }

  const GalleryModel g = MakeGallery(a, sc);
  std::string ra, rb;
  for (int k = 0; k < 2; ++k) {
    const SynthData& d = k == 0 ? a : b;
    RecognizeSettings rs;
    rs.prune = 2;
    rs.hint = InitHint::Box(d.probes[0].box);
    RecognitionReport rep = Recognize(d.probes[0].image, g, rs);
    rep.align_ms = rep.classify_ms = 0;
    (k == 0 ? ra : rb) = RecognitionJson(rep);
  }
  const bool same_report = ra == rb;

  const auto dir = std::filesystem::temp_directory_path() / "cpa_acceptance_model";
  std::filesystem::remove_all(dir);
  SaveModel(ma, (dir / "m").string());
  const ModelContainer back = LoadModel((dir / "m").string());
  bool exact = back.components.size() == ma.components.size();
  for (size_t c = 0; exact && c < ma.components.size(); ++c) {
    const auto& x = ma.components[c];
    const auto& y = back.components[c];
    exact = x.mask == y.mask && x.shape.config.parent == y.shape.config.parent;
    for (size_t i = 0; exact && i < x.dictionaries.size(); ++i) exact = BitEqual(x.dictionaries[i], y.dictionaries[i]);
    for (int i = 0; exact && i < x.shape.parts(); ++i) {
      exact = BitEqual(x.shape.z[i].mu, y.shape.z[i].mu) && BitEqual(x.shape.z[i].lambda, y.shape.z[i].lambda);
    }
  }
  SaveModel(back, (dir / "again").string());
  for (const auto& entry : std::filesystem::directory_iterator(dir / "m")) {
    exact = exact && FileChecksum(entry.path().string()) ==
                         FileChecksum((dir / "again" / entry.path().filename()).string());
  }
  std::filesystem::remove_all(dir);
  return {same_data && same_model && same_report && exact,
          Format("data %s, learned model %s, recognition report %s, save/load %s",
                 same_data ? "identical" : "differs", same_model ? "identical" : "differs",
                 same_report ? "identical" : "differs", exact ? "bit-exact" : "not exact")};
}

}  // namespace
}  // namespace cpa

// Optional arguments select criteria by number.
int main(int argc, char** argv) {
  using cpa::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"proximal operators", cpa::ProximalOperators},
      {"derivatives", cpa::Derivatives},
      {"delta system", cpa::DeltaSystem},
      {"holistic split", cpa::HolisticSplit},
      {"MAP closed forms", cpa::MapClosedForms},
      {"tree learning", cpa::TreeLearning},
      {"part alignment recovery", cpa::AlignmentRecovery},
      {"dictionary learning stability", cpa::LearningStability},
      {"end-to-end recognition", cpa::Recognition},
      {"determinism and serialization", cpa::Determinism},
  };
  int failed = 0;
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= int(criteria.size())) selected[k - 1] = true;
  }
  for (size_t k = 0; k < criteria.size(); ++k) {
    if (!selected[k]) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu (%s): %s - %s\n", k + 1, criteria[k].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
