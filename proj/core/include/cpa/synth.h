#ifndef CPA_SYNTH_H_
#define CPA_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "cpa/align.h"
#include "cpa/geometry.h"
#include "cpa/image.h"
#include "cpa/learn.h"

namespace cpa {

// One row of the frontal part table: landmark name, size relative to the
// outer-eye-corner distance, and absolute size in the 60 x 80 frame.
struct PartSpec {
  std::string name;
  double rel_width = 0.0;
  double rel_height = 0.0;
  int width = 0;
  int height = 0;
};
const std::vector<PartSpec>& FrontalPartTable();

enum class PartTexture { kBlobs, kStripes };

// Synthetic constellation part: its canonical domain, how it is textured,
// and how its ground-truth offset is drawn (relative to `parent`, a node id).
struct SynthPart {
  PartDomain domain;
  PartTexture texture = PartTexture::kBlobs;
  int parent = 0;
  double jitter = 1.0;  // translation range (px) relative to the parent
};

// Eight 24 x 16 parts on a 2 x 4 grid of the 60 x 80 frame.
std::vector<SynthPart> DefaultConstellation();
std::vector<PartDomain> Domains(const std::vector<SynthPart>& parts);

struct SynthScenario {
  uint64_t seed = 1;
  int subjects = 10;
  int illum_modes = 7;
  int gallery_per_subject = 7;
  int probes_per_subject = 3;
  int training_images = 60;
  int training_subjects = 1;  // training images cycle through these subjects

  // Holistic perturbation of probes (and training images).
  double max_shift = 3.0;       // px, per coordinate
  double max_rotation = 0.0;    // rad
  double max_log_scale = 0.0;
  // Per-part translation jitter scale (multiplies SynthPart::jitter) and
  // optional per-part rotation / log-scale ranges.
  double part_jitter = 1.0;
  double part_rotation = 0.0;
  double part_log_scale = 0.0;
  double landmark_noise = 0.0;  // px, uniform per coordinate

  double occlusion_ratio = 0.0;  // fraction of the canonical face area
  double noise_sigma = 0.0;      // additive Gaussian noise on probes
  bool perturb_training = true;

  Rect canonical{0.0, 0.0, 60.0, 80.0};
  int image_width = 76;
  int image_height = 96;
  Point frame_offset{8.0, 8.0};
  std::vector<SynthPart> constellation = DefaultConstellation();

  void Validate() const;
};

struct SynthProbe {
  Image image;
  std::string label;
  AlignmentState truth;
  std::vector<Point> landmarks;  // true part centers in image coordinates
  Rect box;                      // nominal face box (unperturbed frame)
};

struct SynthData {
  TrainingSet training;  // perturbed, initialized from landmarks
  std::vector<AlignmentState> training_truth;
  TrainingSet gallery;   // perfectly aligned, labeled by subject
  std::vector<SynthProbe> probes;
};

// Deterministic for a fixed scenario (including seed).
SynthData Generate(const SynthScenario& scenario);

// Renders one subject under a given state and illumination coefficients.
// Exposed for tests; Generate uses the same renderer.
class SynthRenderer {
 public:
  SynthRenderer(const SynthScenario& scenario, int subject);
  Image Render(const AlignmentState& state, const std::vector<double>& illum) const;
  // Canonical appearance (texture times illumination) at point p.
  double Appearance(Point p, const std::vector<double>& illum) const;

 private:
  double Texture(Point p, int part) const;  // part < 0: background
  double Illumination(Point p, const std::vector<double>& illum) const;

  const SynthScenario* scenario_;
  std::vector<double> raster_;  // blob texture sampled on a fine grid
  double origin_u_ = 0.0, origin_v_ = 0.0, step_ = 0.25;
  int raster_w_ = 0, raster_h_ = 0;
  std::vector<double> stripe_freq_, stripe_phase_;
};

struct RecoveryMetrics {
  double translation_rms = 0.0;  // px, at part centers
  double rotation_rms = 0.0;     // rad
  double scale_rms = 0.0;        // log-scale
};

// Compares combined deformations in the frame of part 1: each zeta_i is
// replaced by zeta_1^-1 o zeta_i, and errors are taken over parts 2..m.
RecoveryMetrics ScoreRecovery(const TransformSet& estimate, const TransformSet& truth,
                              const std::vector<PartDomain>& domains);

// Ground-truth shape model of the constellation (tree from the
// constellation's parents, edges fitted to sampled jitter).
TreeShapeModel GeneratorShapeModel(const SynthScenario& scenario, int samples = 200);

// Writes images and a training manifest under dir; returns the manifest path.
std::string WriteScenario(const SynthData& data, const SynthScenario& scenario,
                          const std::string& dir);

}  // namespace cpa

#endif  // CPA_SYNTH_H_
