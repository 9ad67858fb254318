#ifndef CPA_SHAPE_MODEL_H_
#define CPA_SHAPE_MODEL_H_

#include <span>
#include <vector>

#include "cpa/geometry.h"

namespace cpa {

// Rooted tree over nodes {0, 1, ..., m}. Node 0 is the holistic face and
// carries the fixed transform (0, 0, 0, 0); part i (0-based) is node i + 1.
// parent[i] is the node id of part i's parent.
struct TreeConfig {
  std::vector<int> parent;

  int parts() const { return int(parent.size()); }
  // Parent as a 0-based part index, or -1 for the root.
  int ParentPart(int i) const { return parent[i] - 1; }
  std::vector<std::vector<int>> Children() const;  // per part, 0-based
  // Parts ordered so every parent precedes its children.
  std::vector<int> TopologicalOrder() const;
  // Throws Error if some part is unreachable from the root or a cycle exists.
  void Validate() const;

  static TreeConfig Star(int m);
  static TreeConfig Chain(int m);
};

// Gaussian on the parameter difference between a part and its parent.
struct EdgeGaussian {
  Vec4 mu = Vec4::Zero();
  Mat4 lambda = Mat4::Identity();  // precision
};

struct TreeShapeModel {
  TreeConfig config;
  std::vector<EdgeGaussian> z;

  int parts() const { return config.parts(); }
  // Throws SolverError("invalid precision") if some lambda is not SPD.
  void Validate() const;
};

struct GaussianWishartPrior {
  Vec4 u0 = Vec4::Zero();
  double kappa0 = 1.0;
  Mat4 v0 = Mat4::Identity();
  double r0 = 5.0;
};

// nu<i> - nu<parent(i)>, with the root fixed at zero.
Vec4 NuDelta(const TransformSet& nu, const TreeConfig& config, int i);

// Negative log of the tree joint density.
double ShapeCost(const TransformSet& nu, const TreeShapeModel& model);
// The constant b = (dm/2) ln(2 pi) - 1/2 sum ln|Lambda|.
double ShapeCostConstant(const TreeShapeModel& model);

// d x m gradient of ShapeCost with respect to each part's parameters.
Mat4X ShapeCostGradient(const TransformSet& nu, const TreeShapeModel& model);

// Sample mean and ridge-regularized inverse population covariance.
// Throws SolverError("insufficient samples") for fewer than two samples.
EdgeGaussian MlEstimate(std::span<const Vec4> samples);

// Population covariance plus the ridge used by MlEstimate.
Mat4 RegularizedCovariance(std::span<const Vec4> samples, Vec4* mean = nullptr);

// Gaussian-Wishart prior whose mode is g and whose weight equals
// vartheta * n pseudo-samples (r0 = kappa0 = vartheta * n).
GaussianWishartPrior PriorFromGaussian(const EdgeGaussian& g, double vartheta, int n);

// Closed-form MAP (mode of the Gaussian-Wishart posterior); n may be zero.
EdgeGaussian MapEstimate(std::span<const Vec4> samples, const GaussianWishartPrior& prior);

// -sum_k ln N(sample_k; g) for the given samples.
double NegLogLikelihood(std::span<const Vec4> samples, const EdgeGaussian& g);
// -ln of the Gaussian-Wishart density at g without the Wishart normalizer.
double NegLogPrior(const EdgeGaussian& g, const GaussianWishartPrior& prior);

// Score of one directed edge: the MAP-evaluated negative log posterior
// terms for the edge's difference samples, under a prior seeded from the
// samples' own ML fit. vartheta == 0 scores by likelihood alone.
double EdgeScore(std::span<const Vec4> samples, double vartheta);

// Edge scores for the complete directed graph over {0..m}:
// scores(j, i) is the cost of parent node j -> child node i (j != i, i >= 1).
Eigen::MatrixXd EdgeScores(const std::vector<TransformSet>& nu_samples, double vartheta);

// Minimum-cost spanning arborescence over nodes {0..m} rooted at 0.
TreeConfig LearnTreeConfig(const std::vector<TransformSet>& nu_samples, double vartheta);

// Per-part transforms at the mode of the tree model (the root is zero).
TransformSet MaxLikelihoodParts(const TreeShapeModel& model);

// Mean of ln|Lambda^-1| over edges; tracks the overall variance strength.
double MeanLogCovarianceDet(const TreeShapeModel& model);

}  // namespace cpa

#endif  // CPA_SHAPE_MODEL_H_
