#ifndef CPA_LEARN_H_
#define CPA_LEARN_H_

#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpa/align.h"
#include "cpa/geometry.h"
#include "cpa/image.h"
#include "cpa/shape_model.h"
#include "cpa/solver.h"

namespace cpa {

// Training (or gallery) images with their initial deformations. Part
// specs cover all m parts of the part table.
struct TrainingSet {
  Rect canonical{0.0, 0.0, 60.0, 80.0};
  std::vector<PartDomain> domains;
  std::vector<Image> images;
  std::vector<SimTransform> init_sigma;
  std::vector<TransformSet> init_nu;
  std::vector<std::string> labels;  // optional subject label per image

  int size() const { return int(images.size()); }
  void Validate() const;
  // Per-image initial states from landmarks (one per part per image).
  static TrainingSet FromLandmarks(const Rect& canonical, std::vector<PartDomain> domains,
                                   std::vector<Image> images,
                                   const std::vector<std::vector<Point>>& landmarks);
};

struct LearnSettings {
  AlmSettings alm;
  double lambda_hat = kDefaultLambdaHat;
  double eta_hat = kDefaultEtaHat;
  double vartheta = kDefaultVartheta;  // 0: plain ML shape updates, no prior
  bool freeze_sigma = true;            // sigma is known from annotations
  int heuristic_iters = 5;             // eta = 0 warm-up linearizations
  int max_rounds = 30;
  double round_tol = 1e-4;

  void Validate() const;
};

// Result of batch dictionary learning for one component.
struct DictionaryFit {
  std::vector<Eigen::MatrixXd> dictionaries;  // unit columns, per part
  std::vector<Eigen::MatrixXd> low_rank;      // A
  std::vector<Eigen::MatrixXd> sparse;        // E
  std::vector<AlignmentState> states;         // per image
  int iterations = 0;
  bool converged = false;
};

// Batch alignment of all training images under a fixed shape model:
// iterated linearization with low-rank plus sparse ALM, then a per-image
// holistic re-split unless sigma is frozen.
DictionaryFit LearnDictionaries(const TrainingSet& ts, const TreeShapeModel& shape,
                                const LearnSettings& settings);

struct LearnTrace {
  std::vector<double> mean_log_cov_det;  // after init, then once per round
  std::vector<TreeConfig> trees;         // configuration used in each round
  int rounds = 0;
  bool converged = false;
};

struct LearnedModel {
  CpaModel model;
  DictionaryFit fit;
  LearnTrace trace;
  std::vector<std::string> labels;  // dictionary column labels
};

// Joint learning of dictionaries and shape model. With no tree given the
// configuration is learned from the warmed-up deformations.
LearnedModel LearnModel(const TrainingSet& ts, const TreeConfig* tree,
                        const LearnSettings& settings);

// c components, each with an availability mask over the m parts of the
// shared part table.
struct MixtureSpec {
  std::vector<std::vector<bool>> availability;

  int components() const { return int(availability.size()); }
  std::vector<int> Parts(int component) const;
  void Validate(int m) const;
};

struct MixtureComponent {
  std::vector<int> parts;  // global part indices of this component
  CpaModel model;          // dictionaries shared across components per part
  LearnTrace trace;
  std::vector<AlignmentState> states;
};

struct MixtureCpaModel {
  Rect canonical{0.0, 0.0, 60.0, 80.0};
  std::vector<PartDomain> domains;  // the full part table
  std::vector<MixtureComponent> components;
  std::vector<std::string> labels;  // column labels in dictionary order
};

// Mixture learning: per-part low-rank/sparse decompositions span the
// columns of every component owning that part. Components that share no
// part are learned independently.
MixtureCpaModel LearnMixture(const std::vector<TrainingSet>& per_component,
                             const MixtureSpec& spec, const std::vector<const TreeConfig*>& trees,
                             const LearnSettings& settings);

// Dictionaries for a gallery under a frozen shape model.
LearnedModel FitDictionariesFixedShape(const TrainingSet& gallery, const TreeShapeModel& shape,
                                       const LearnSettings& settings);

// Objective sum_i ||A_i||_* + lambda_i ||E_i||_1 + eta sum_k g(nu_k).
double LearningObjective(const DictionaryFit& fit, const TreeShapeModel& shape,
                         const std::vector<PartDomain>& domains, const LearnSettings& settings);

}  // namespace cpa

#endif  // CPA_LEARN_H_
