#ifndef CPA_ALIGN_H_
#define CPA_ALIGN_H_

#include <vector>

#include <Eigen/Core>

#include "cpa/geometry.h"
#include "cpa/image.h"
#include "cpa/shape_model.h"
#include "cpa/solver.h"

namespace cpa {

inline constexpr double kDefaultLambdaHat = 1.0;
inline constexpr double kDefaultEtaHat = 0.02;
inline constexpr double kDefaultVartheta = 0.25;

// lambda_i = lambda_hat / sqrt(omega_i).
double PartLambda(int omega, double lambda_hat);
// eta = eta_hat * sum_i omega_i^(-1/2).
double ShapeEta(const std::vector<PartDomain>& domains, double eta_hat);

// Part domains, unit-column dictionaries and the shape model of one
// (component) model. Part domains live in the canonical frame.
struct CpaModel {
  Rect canonical{0.0, 0.0, 60.0, 80.0};
  std::vector<PartDomain> domains;
  std::vector<Eigen::MatrixXd> dictionaries;  // omega_i x n_i
  TreeShapeModel shape;
  std::vector<double> lambda;
  double eta = 0.0;

  int parts() const { return int(domains.size()); }
  // Fills lambda and eta from the domain sizes.
  void SetWeights(double lambda_hat, double eta_hat);
  // Throws Error on inconsistent sizes, non-unit columns or bad weights.
  void Validate() const;
};

struct InitHint {
  enum class Kind { kNone, kBox, kLandmarks };
  Kind kind = Kind::kNone;
  Rect box;
  std::vector<Point> landmarks;  // one per part, image coordinates

  static InitHint None() { return {}; }
  static InitHint Box(const Rect& r) { return {Kind::kBox, r, {}}; }
  static InitHint Landmarks(std::vector<Point> p) { return {Kind::kLandmarks, {}, std::move(p)}; }
};

struct AlignmentState {
  SimTransform sigma;
  TransformSet nu;
};

// Similarity fitted from part centers to landmarks, then per-part
// translations placing each center exactly on its landmark.
AlignmentState StateFromLandmarks(const std::vector<PartDomain>& domains,
                                  const std::vector<Point>& landmarks);

// sigma from the hint (identity with no hint); nu at the shape-model mode,
// or StateFromLandmarks.
AlignmentState Initialize(const Image& y, const CpaModel& model, const InitHint& hint);

// Unit-normalized warped observation of one part and its Jacobian with
// respect to the part parameters nu (sigma held fixed).
struct PartLinearization {
  Eigen::VectorXd y;
  WarpJacobianMatrix jacobian;
};
PartLinearization LinearizePart(const Image& y, const ImageGradients& grad,
                                const SimTransform& sigma, const SimTransform& nu,
                                const PartDomain& dom);

struct PartStepResult {
  TransformSet nu;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> e;
  bool converged = false;
  int iterations = 0;  // Gauss-Newton linearizations
};

// Iterated linearization plus inexact ALM over all parts jointly.
// Throws SolverError("diverged") on non-finite iterates.
PartStepResult PartStep(const Image& y, const CpaModel& model, const SimTransform& sigma,
                        const TransformSet& nu, const AlmSettings& settings);

struct HolisticResult {
  SimTransform sigma;
  TransformSet nu;
  double cost_before = 0.0;
  double cost_after = 0.0;
  int iterations = 0;
  bool line_search_failed = false;
};

// Re-splits sigma o nu_i into sigma' o nu'_i with every combined
// deformation preserved, lowering the shape cost over sigma'.
HolisticResult HolisticStep(const SimTransform& sigma, const TransformSet& nu,
                            const TreeShapeModel& shape);

// Shape cost of the split induced by sigma' = sigma + delta.
double HolisticCost(const SimTransform& sigma, const TransformSet& nu,
                    const TreeShapeModel& shape, const Vec4& delta);

struct AlignmentResult {
  SimTransform sigma;
  TransformSet nu;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> e;
  std::vector<double> residual_l1;
  bool converged = false;
  int iterations = 0;  // part/holistic alternations
  bool holistic_failed = false;

  // sigma o nu_i for every part.
  TransformSet Combined() const;
};

// Alternates PartStep and HolisticStep starting from Initialize.
AlignmentResult Align(const Image& y, const CpaModel& model, const InitHint& hint,
                      const AlmSettings& settings);
AlignmentResult AlignFrom(const Image& y, const CpaModel& model, const AlignmentState& start,
                          const AlmSettings& settings);

// One-part model covering the whole canonical frame, used for the
// optional holistic pre-alignment.
CpaModel HolisticModel(const Rect& canonical, const Eigen::MatrixXd& dictionary,
                       double lambda_hat, double eta_hat);

}  // namespace cpa

#endif  // CPA_ALIGN_H_
