#include <cmath>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "cpa/error.h"
#include "cpa/synth.h"
#include "test_support.h"

namespace cpa {
namespace {

SynthScenario Small(uint64_t seed) {
  SynthScenario sc;
  sc.seed = seed;
  sc.subjects = 2;
  sc.illum_modes = 3;
  sc.gallery_per_subject = 5;
  sc.probes_per_subject = 2;
  sc.training_images = 4;
  sc.training_subjects = 2;
  sc.landmark_noise = 0.5;
  sc.noise_sigma = 0.01;
  sc.occlusion_ratio = 0.1;
  return sc;
}

TEST(Synth, SameSeedIsBitIdentical) {
  const SynthData a = Generate(Small(5)), b = Generate(Small(5));
  ASSERT_EQ(a.probes.size(), b.probes.size());
  for (size_t k = 0; k < a.probes.size(); ++k) {
    EXPECT_EQ(a.probes[k].image.data, b.probes[k].image.data);
    EXPECT_EQ(a.probes[k].truth.sigma.AsVector(), b.probes[k].truth.sigma.AsVector());
  }
  for (size_t k = 0; k < a.training.images.size(); ++k) {
    EXPECT_EQ(a.training.images[k].data, b.training.images[k].data);
    EXPECT_EQ(a.training.init_sigma[k].AsVector(), b.training.init_sigma[k].AsVector());
  }
  for (size_t k = 0; k < a.gallery.images.size(); ++k) {
    EXPECT_EQ(a.gallery.images[k].data, b.gallery.images[k].data);
  }
  const SynthData c = Generate(Small(6));
  EXPECT_NE(a.probes[0].image.data, c.probes[0].image.data);
}

TEST(Synth, ZeroRangesGiveTheCanonicalConstellation) {
  SynthScenario sc = Small(7);
  sc.max_shift = 0;
  sc.part_jitter = 0;
  sc.landmark_noise = 0;
  const SynthData d = Generate(sc);
  for (const auto& p : d.probes) {
    EXPECT_EQ(p.truth.sigma.AsVector(), SimTransform::Translation(8, 8).AsVector());
    for (const auto& nu : p.truth.nu) EXPECT_EQ(nu.AsVector(), Vec4::Zero());
    const auto domains = Domains(sc.constellation);
    for (size_t i = 0; i < domains.size(); ++i) {
      EXPECT_DOUBLE_EQ(p.landmarks[i].u, domains[i].center.u + 8);
      EXPECT_DOUBLE_EQ(p.landmarks[i].v, domains[i].center.v + 8);
    }
  }
}

TEST(Synth, OcclusionIsOneUniformSquare) {
  SynthScenario clean = Small(9);
  clean.noise_sigma = 0;
  clean.occlusion_ratio = 0;
  SynthScenario occluded = clean;
  occluded.occlusion_ratio = 0.2;
  const SynthData da = Generate(clean), db = Generate(occluded);
  const Image& a = da.probes[0].image;
  const Image& b = db.probes[0].image;
  int changed = 0;
  double value = -1;
  bool uniform = true;
  for (size_t k = 0; k < a.data.size(); ++k) {
    if (a.data[k] == b.data[k]) continue;
    ++changed;
    if (value < 0) value = b.data[k];
    uniform = uniform && b.data[k] == value;
  }
  EXPECT_TRUE(uniform);
  // About 0.2 of the 60 x 80 frame, up to a pixel boundary row per side.
  const double area = 0.2 * 60 * 80, side = std::sqrt(area);
  EXPECT_NEAR(changed, area, 4 * side + 4);
}

TEST(Synth, GalleryPartsHaveIlluminationRank) {
  SynthScenario sc = Small(10);
  sc.illum_modes = 2;
  sc.gallery_per_subject = 6;
  const SynthData d = Generate(sc);
  const auto shape = GeneratorShapeModel(sc);
  for (int s = 0; s < sc.subjects; ++s) {
    const CpaModel m = test::SubjectModel(d, sc, s, shape);
    for (const auto& dict : m.dictionaries) {
      const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(dict).singularValues();
      EXPECT_LT(sv[2], 1e-10 * sv[0]);
    }
  }
}

TEST(Synth, ValidateRejectsBadScenarios) {
  SynthScenario sc;
  sc.occlusion_ratio = 0.7;
  EXPECT_THROW(Generate(sc), Error);
  sc = SynthScenario{};
  sc.max_shift = -1;
  EXPECT_THROW(sc.Validate(), Error);
  sc = SynthScenario{};
  sc.training_subjects = 11;
  EXPECT_THROW(sc.Validate(), Error);
  sc = SynthScenario{};
  sc.constellation[0].parent = 1;
  EXPECT_THROW(sc.Validate(), Error);
}

std::vector<PartDomain> ThreeDomains() {
  return {PartDomain{1, {10, 20}, 8, 8}, PartDomain{2, {40, 20}, 8, 8}, PartDomain{3, {25, 60}, 8, 8}};
}

TEST(ScoreRecovery, ZeroForTruthAndGaugeInvariant) {
  const auto doms = ThreeDomains();
  const TransformSet truth = {{1, 2, 0.01, 0.02}, {-1, 0.5, 0, -0.03}, {0.3, 0.3, 0.02, 0}};
  const RecoveryMetrics same = ScoreRecovery(truth, truth, doms);
  EXPECT_EQ(same.translation_rms, 0);
  EXPECT_EQ(same.rotation_rms, 0);
  EXPECT_EQ(same.scale_rms, 0);

  const TransformSet flat = {{1, 2, 0, 0}, {-1, 0.5, 0, 0}, {0.3, 0.3, 0, 0}};
  TransformSet shifted = flat;
  for (auto& t : shifted) t.tu += 1;
  EXPECT_LT(ScoreRecovery(shifted, flat, doms).translation_rms, 1e-12);
  EXPECT_THROW(ScoreRecovery(flat, {flat[0]}, doms), Error);
}

TEST(ScoreRecovery, MatchesHandComputation) {
  // Pure translations: zeta_1^-1 o zeta_i moves each center by t_i - t_1.
  // truth t = (0,0) (1,0) (0,2); estimate t = (0.5,0) (1,1) (0.5,2.5), and
  // estimate part 3 rotated by 0.1 about the canonical origin.
  const auto doms = ThreeDomains();
  const TransformSet truth = {{0, 0, 0, 0}, {1, 0, 0, 0}, {0, 2, 0, 0}};
  const TransformSet est = {{0.5, 0, 0, 0}, {1, 1, 0, 0}, {0.5, 2.5, 0.05, 0.1}};
  const RecoveryMetrics m = ScoreRecovery(est, truth, doms);
  // Part 2: estimate offset (0.5, 1) vs truth (1, 0): error^2 = 0.25 + 1.
  // Part 3: estimate maps c = (25, 60) to e^0.05 R(0.1) c + (0, 2.5); truth
  // maps it to c + (0, 2).
  const double k = std::exp(0.05), cs = std::cos(0.1), sn = std::sin(0.1);
  const double eu = k * (cs * 25 - sn * 60) + 0.0 - 25, ev = k * (sn * 25 + cs * 60) + 2.5 - 62;
  const double t2 = 1.25 + eu * eu + ev * ev;
  EXPECT_NEAR(m.translation_rms, std::sqrt(t2 / 2), 1e-12);
  EXPECT_NEAR(m.rotation_rms, std::sqrt(0.01 / 2), 1e-12);
  EXPECT_NEAR(m.scale_rms, std::sqrt(0.0025 / 2), 1e-12);
}

}  // namespace
}  // namespace cpa
