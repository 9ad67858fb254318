#include "cpa/solver.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cpa/error.h"

namespace cpa {

void AlmSettings::Validate() const {
  if (!(rho > 1.0) || !(beta_max > 0.0) || !(inner_tol > 0.0) || !(outer_tol > 0.0) ||
      max_inner_iters < 1 || max_outer_iters < 1 || max_alternations < 1) {
    throw Error("invalid ALM settings");
  }
}

double AlmSettings::InitialBeta(const Eigen::VectorXd& stacked) const {
  if (beta0 > 0.0) return beta0;
  const double mean_abs = stacked.size() ? stacked.cwiseAbs().mean() : 0.0;
  return mean_abs > 1e-12 ? std::min(1.25 / mean_abs, beta_max) : 1.0;
}

double SoftThreshold(double x, double alpha) {
  if (x > alpha) return x - alpha;
  if (x < -alpha) return x + alpha;
  return 0.0;
}

Eigen::MatrixXd SoftThreshold(const Eigen::MatrixXd& x, double alpha) {
  return x.unaryExpr([alpha](double v) { return SoftThreshold(v, alpha); });
}

Eigen::MatrixXd SvdShrink(const Eigen::MatrixXd& m, double alpha) {
  if (m.size() == 0) return m;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success || !svd.singularValues().allFinite()) {
    throw SolverError("decomposition failed");
  }
  const Eigen::VectorXd shrunk =
      (svd.singularValues().array() - alpha).max(0.0).matrix();
  return svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();
}

Eigen::MatrixXd SvdShrinkGram(const Eigen::MatrixXd& m, double alpha) {
  if (m.size() == 0 || alpha <= 0.0) return m;
  const bool tall = m.rows() >= m.cols();
  const Eigen::MatrixXd gram = tall ? Eigen::MatrixXd(m.transpose() * m)
                                    : Eigen::MatrixXd(m * m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw SolverError("decomposition failed");
  // With m = U S V', the prox is m V diag(1 - alpha / s) V' over the kept s.
  const Eigen::VectorXd sv = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::VectorXd scale = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) > alpha) scale(k) = 1.0 - alpha / sv(k);
  }
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const Eigen::MatrixXd proj = v * scale.asDiagonal() * v.transpose();
  return tall ? Eigen::MatrixXd(m * proj) : Eigen::MatrixXd(proj * m);
}

namespace {

void CheckSystem(const BlockSystem& sys, const TransformSet& nu) {
  if (!sys.model) throw Error("block system has no shape model");
  const int m = sys.model->parts();
  if (int(sys.g_blocks.size()) != m || sys.q.cols() != m || int(nu.size()) != m) {
    throw Error("block system: part count mismatch");
  }
  if (!(sys.eta >= 0.0)) throw Error("block system: eta must be nonnegative");
}

// Boundary shape residuals w_i = Lambda_i (mu_i - nu_delta_i).
std::vector<Vec4> PriorPull(const BlockSystem& sys, const TransformSet& nu) {
  const TreeShapeModel& model = *sys.model;
  std::vector<Vec4> w(model.parts());
  for (int i = 0; i < model.parts(); ++i) {
    w[i] = model.z[i].lambda * (model.z[i].mu - NuDelta(nu, model.config, i));
  }
  return w;
}

}  // namespace

void AssembleDeltaSystem(const BlockSystem& sys, const TransformSet& nu, Eigen::MatrixXd* w,
                         Eigen::VectorXd* c) {
  CheckSystem(sys, nu);
  const TreeShapeModel& model = *sys.model;
  const int m = model.parts();
  const double eta = sys.eta;
  const auto pull = PriorPull(sys, nu);
  w->setZero(4 * m, 4 * m);
  c->setZero(4 * m);
  for (int i = 0; i < m; ++i) {
    w->block<4, 4>(4 * i, 4 * i) += sys.g_blocks[i] + eta * model.z[i].lambda;
    c->segment<4>(4 * i) += sys.q.col(i) + eta * pull[i];
    const int p = model.config.ParentPart(i);
    if (p >= 0) {
      w->block<4, 4>(4 * p, 4 * p) += eta * model.z[i].lambda;
      w->block<4, 4>(4 * i, 4 * p) -= eta * model.z[i].lambda;
      w->block<4, 4>(4 * p, 4 * i) -= eta * model.z[i].lambda;
      c->segment<4>(4 * p) -= eta * pull[i];
    }
  }
}

Mat4X SolveDeltaSystem(const BlockSystem& sys, const TransformSet& nu) {
  CheckSystem(sys, nu);
  const TreeShapeModel& model = *sys.model;
  const int m = model.parts();
  const double eta = sys.eta;
  const auto pull = PriorPull(sys, nu);
  const std::vector<int> order = model.config.TopologicalOrder();

  // inner[i]: data block plus everything folded up from i's subtree.
  std::vector<Mat4> inner(m);
  std::vector<Vec4> rhs(m);
  for (int i = 0; i < m; ++i) {
    inner[i] = sys.g_blocks[i];
    rhs[i] = sys.q.col(i) + eta * pull[i];
  }
  for (int i = 0; i < m; ++i) {
    const int p = model.config.ParentPart(i);
    if (p >= 0) rhs[p] -= eta * pull[i];
  }

  // Leaves first: fold each child's block into its parent. The child's
  // contribution W - W S^-1 W equals G - G S^-1 G with S = G + W; the form
  // subtracting the smaller term stays positive definite when Lambda is
  // near-singular.
  std::vector<Eigen::LLT<Mat4>> factor(m);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int i = *it;
    const Mat4 w = eta * model.z[i].lambda;
    const Mat4 schur = inner[i] + w;
    factor[i].compute(schur);
    if (factor[i].info() != Eigen::Success || !schur.allFinite()) {
      throw SolverError("degenerate system (check η, Λ)");
    }
    const int p = model.config.ParentPart(i);
    if (p < 0 || eta == 0.0) continue;
    const Mat4& g = inner[i];
    Mat4 c = w.trace() >= g.trace() ? Mat4(g - g * factor[i].solve(g))
                                    : Mat4(w - w * factor[i].solve(w));
    inner[p] += 0.5 * (c + c.transpose());
    rhs[p] += w * factor[i].solve(rhs[i]);
  }

  Mat4X delta(4, m);
  for (int i : order) {
    const int p = model.config.ParentPart(i);
    Vec4 b = rhs[i];
    if (p >= 0 && eta != 0.0) b += eta * model.z[i].lambda * delta.col(p);
    delta.col(i) = factor[i].solve(b);
  }
  if (!delta.allFinite()) throw SolverError("degenerate system (check η, Λ)");
  return delta;
}

}  // namespace cpa
