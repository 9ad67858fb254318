#ifndef CPA_SOLVER_H_
#define CPA_SOLVER_H_

#include <vector>

#include <Eigen/Core>

#include "cpa/geometry.h"
#include "cpa/shape_model.h"

namespace cpa {

// Inexact-ALM schedule and Gauss-Newton stopping rules.
struct AlmSettings {
  double beta0 = 0.0;  // <= 0: 1.25 / mean |stacked observation|
  double rho = 1.25;
  double beta_max = 1e7;
  double inner_tol = 1e-6;
  int max_inner_iters = 500;
  double outer_tol = 1e-4;
  int max_outer_iters = 50;
  int max_alternations = 10;  // part/holistic rounds in Align

  void Validate() const;
  // beta0 if set, otherwise derived from the stacked observation.
  double InitialBeta(const Eigen::VectorXd& stacked) const;
};

// Elementwise sign(x) max(|x| - alpha, 0).
double SoftThreshold(double x, double alpha);
Eigen::MatrixXd SoftThreshold(const Eigen::MatrixXd& x, double alpha);

// Singular value shrinkage: the proximal operator of alpha ||.||_*.
// Throws SolverError("decomposition failed").
Eigen::MatrixXd SvdShrink(const Eigen::MatrixXd& m, double alpha);

// Fast variant for many-row matrices that works on the small Gram matrix;
// agrees with SvdShrink whenever the kept singular values are well above
// sqrt(machine eps) times the largest.
Eigen::MatrixXd SvdShrinkGram(const Eigen::MatrixXd& m, double alpha);

// The linear system for one Gauss-Newton step of all parts:
//   min_dnu sum_i 1/2 dnu_i' G_i dnu_i - q_i' dnu_i + eta g(nu + dnu, Z).
struct BlockSystem {
  std::vector<Mat4> g_blocks;
  Mat4X q;
  const TreeShapeModel* model = nullptr;
  double eta = 0.0;
};

// Solves the tree-sparse system by block elimination from the leaves up.
// Throws SolverError("degenerate system (check η, Λ)") when a pivot block
// is not positive definite.
Mat4X SolveDeltaSystem(const BlockSystem& sys, const TransformSet& nu);

// Dense 4m x 4m matrix W and right-hand side c of the same system.
void AssembleDeltaSystem(const BlockSystem& sys, const TransformSet& nu, Eigen::MatrixXd* w,
                         Eigen::VectorXd* c);

}  // namespace cpa

#endif  // CPA_SOLVER_H_
