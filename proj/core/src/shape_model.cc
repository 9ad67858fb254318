#include "cpa/shape_model.h"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "cpa/arborescence.h"
#include "cpa/error.h"

namespace cpa {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Covariance ridge: eps * trace / d, floored.
constexpr double kRidgeEps = 1e-6;
constexpr double kRidgeFloor = 1e-10;

double LogDet(const Mat4& spd) {
  Eigen::LLT<Mat4> llt(spd);
  if (llt.info() != Eigen::Success) throw SolverError("invalid precision");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

void ValidatePrecision(const Mat4& lambda) {
  if (!lambda.allFinite() || (lambda - lambda.transpose()).cwiseAbs().maxCoeff() >
                                 1e-10 * (1.0 + lambda.cwiseAbs().maxCoeff())) {
    throw SolverError("invalid precision");
  }
  Eigen::LLT<Mat4> llt(lambda);
  if (llt.info() != Eigen::Success) throw SolverError("invalid precision");
}

}  // namespace

std::vector<std::vector<int>> TreeConfig::Children() const {
  std::vector<std::vector<int>> children(parent.size());
  for (int i = 0; i < parts(); ++i) {
    if (ParentPart(i) >= 0) children[ParentPart(i)].push_back(i);
  }
  return children;
}

std::vector<int> TreeConfig::TopologicalOrder() const {
  Validate();
  const auto children = Children();
  std::vector<int> order;
  order.reserve(parent.size());
  for (int i = 0; i < parts(); ++i) {
    if (parent[i] == 0) order.push_back(i);
  }
  for (size_t k = 0; k < order.size(); ++k) {
    for (int c : children[order[k]]) order.push_back(c);
  }
  return order;
}

void TreeConfig::Validate() const {
  const int m = parts();
  for (int i = 0; i < m; ++i) {
    if (parent[i] < 0 || parent[i] > m || parent[i] == i + 1) {
      throw Error("tree config: invalid parent for part " + std::to_string(i + 1));
    }
  }
  // Every part must reach the root within m steps.
  for (int i = 0; i < m; ++i) {
    int node = i + 1, steps = 0;
    while (node != 0 && steps <= m) {
      node = parent[node - 1];
      ++steps;
    }
    if (node != 0) throw Error("tree config: cycle through part " + std::to_string(i + 1));
  }
}

TreeConfig TreeConfig::Star(int m) { return TreeConfig{std::vector<int>(m, 0)}; }

TreeConfig TreeConfig::Chain(int m) {
  TreeConfig t;
  for (int i = 0; i < m; ++i) t.parent.push_back(i);
  return t;
}

void TreeShapeModel::Validate() const {
  if (int(z.size()) != parts()) throw Error("shape model: edge count does not match tree");
  for (const auto& e : z) ValidatePrecision(e.lambda);
}

Vec4 NuDelta(const TransformSet& nu, const TreeConfig& config, int i) {
  const int p = config.ParentPart(i);
  return p < 0 ? nu[i].AsVector() : Vec4(nu[i].AsVector() - nu[p].AsVector());
}

double ShapeCostConstant(const TreeShapeModel& model) {
  double b = 0.5 * kDim * model.parts() * kLog2Pi;
  for (const auto& e : model.z) b -= 0.5 * LogDet(e.lambda);
  return b;
}

double ShapeCost(const TransformSet& nu, const TreeShapeModel& model) {
  model.Validate();
  if (int(nu.size()) != model.parts()) throw Error("shape cost: part count mismatch");
  double quad = 0;
  for (int i = 0; i < model.parts(); ++i) {
    const Vec4 r = NuDelta(nu, model.config, i) - model.z[i].mu;
    quad += r.dot(model.z[i].lambda * r);
  }
  return 0.5 * quad + ShapeCostConstant(model);
}

Mat4X ShapeCostGradient(const TransformSet& nu, const TreeShapeModel& model) {
  model.Validate();
  if (int(nu.size()) != model.parts()) throw Error("shape gradient: part count mismatch");
  Mat4X grad = Mat4X::Zero(4, model.parts());
  for (int i = 0; i < model.parts(); ++i) {
    const Vec4 w = model.z[i].lambda * (NuDelta(nu, model.config, i) - model.z[i].mu);
    grad.col(i) += w;
    const int p = model.config.ParentPart(i);
    if (p >= 0) grad.col(p) -= w;
  }
  return grad;
}

Mat4 RegularizedCovariance(std::span<const Vec4> samples, Vec4* mean) {
  if (samples.size() < 2) throw SolverError("insufficient samples");
  Vec4 mu = Vec4::Zero();
  for (const auto& x : samples) mu += x;
  mu /= double(samples.size());
  Mat4 cov = Mat4::Zero();
  for (const auto& x : samples) cov += (x - mu) * (x - mu).transpose();
  cov /= double(samples.size());
  const double ridge = std::max(kRidgeEps * cov.trace() / kDim, kRidgeFloor);
  cov.diagonal().array() += ridge;
  if (mean) *mean = mu;
  return cov;
}

EdgeGaussian MlEstimate(std::span<const Vec4> samples) {
  EdgeGaussian g;
  const Mat4 cov = RegularizedCovariance(samples, &g.mu);
  g.lambda = cov.inverse();
  g.lambda = 0.5 * (g.lambda + g.lambda.transpose());
  return g;
}

GaussianWishartPrior PriorFromGaussian(const EdgeGaussian& g, double vartheta, int n) {
  const double r0 = vartheta * n;
  if (!(r0 > kDim)) throw SolverError("prior strength too small for d=4");
  ValidatePrecision(g.lambda);
  GaussianWishartPrior prior;
  prior.u0 = g.mu;
  prior.kappa0 = r0;
  prior.r0 = r0;
  // Scale of a precision-valued Wishart: its mode (r0 - d) v0 equals g.lambda.
  prior.v0 = g.lambda / (r0 - kDim);
  return prior;
}

EdgeGaussian MapEstimate(std::span<const Vec4> samples, const GaussianWishartPrior& prior) {
  const double n = double(samples.size());
  Mat4 vn_inv = prior.v0.inverse();
  Vec4 un = prior.u0;
  if (!samples.empty()) {
    Vec4 mu = Vec4::Zero();
    for (const auto& x : samples) mu += x;
    mu /= n;
    Mat4 scatter = Mat4::Zero();  // n * Lambda_ML^-1
    for (const auto& x : samples) scatter += (x - mu) * (x - mu).transpose();
    const Vec4 diff = mu - prior.u0;
    vn_inv += scatter + (prior.kappa0 * n / (prior.kappa0 + n)) * diff * diff.transpose();
    un = (prior.kappa0 * prior.u0 + n * mu) / (prior.kappa0 + n);
  }
  EdgeGaussian g;
  g.mu = un;
  g.lambda = (prior.r0 + n - kDim) * vn_inv.inverse();
  g.lambda = 0.5 * (g.lambda + g.lambda.transpose());
  return g;
}

double NegLogLikelihood(std::span<const Vec4> samples, const EdgeGaussian& g) {
  const double log_det = LogDet(g.lambda);
  double total = 0;
  for (const auto& x : samples) {
    const Vec4 r = x - g.mu;
    total += 0.5 * (kDim * kLog2Pi - log_det + r.dot(g.lambda * r));
  }
  return total;
}

double NegLogPrior(const EdgeGaussian& g, const GaussianWishartPrior& prior) {
  const double log_det = LogDet(g.lambda);
  const Vec4 r = g.mu - prior.u0;
  const double gauss = 0.5 * (kDim * kLog2Pi - (kDim * std::log(prior.kappa0) + log_det) +
                              prior.kappa0 * r.dot(g.lambda * r));
  const double wishart =
      -0.5 * (prior.r0 - kDim - 1) * log_det + 0.5 * (g.lambda * prior.v0.inverse()).trace();
  return gauss + wishart;
}

double EdgeScore(std::span<const Vec4> samples, double vartheta) {
  const EdgeGaussian ml = MlEstimate(samples);
  if (vartheta == 0.0) return NegLogLikelihood(samples, ml);
  const GaussianWishartPrior prior = PriorFromGaussian(ml, vartheta, int(samples.size()));
  const EdgeGaussian map = MapEstimate(samples, prior);
  return NegLogLikelihood(samples, map) + NegLogPrior(map, prior);
}

Eigen::MatrixXd EdgeScores(const std::vector<TransformSet>& nu_samples, double vartheta) {
  if (nu_samples.size() < 2) throw SolverError("insufficient samples");
  const int m = int(nu_samples.front().size());
  if (m < 1) throw Error("tree learning needs at least one part");
  Eigen::MatrixXd scores =
      Eigen::MatrixXd::Constant(m + 1, m + 1, std::numeric_limits<double>::infinity());
  std::vector<Vec4> diffs(nu_samples.size());
  for (int child = 1; child <= m; ++child) {
    for (int par = 0; par <= m; ++par) {
      if (par == child) continue;
      for (size_t k = 0; k < nu_samples.size(); ++k) {
        diffs[k] = nu_samples[k][child - 1].AsVector();
        if (par > 0) diffs[k] -= nu_samples[k][par - 1].AsVector();
      }
      scores(par, child) = EdgeScore(diffs, vartheta);
    }
  }
  return scores;
}

TreeConfig LearnTreeConfig(const std::vector<TransformSet>& nu_samples, double vartheta) {
  const Eigen::MatrixXd scores = EdgeScores(nu_samples, vartheta);
  const std::vector<int> parent = MinArborescence(scores, 0);
  TreeConfig config;
  config.parent.assign(parent.begin() + 1, parent.end());
  config.Validate();
  return config;
}

TransformSet MaxLikelihoodParts(const TreeShapeModel& model) {
  TransformSet nu(model.parts());
  for (int i : model.config.TopologicalOrder()) {
    const int p = model.config.ParentPart(i);
    const Vec4 base = p < 0 ? Vec4::Zero() : nu[p].AsVector();
    nu[i] = SimTransform::FromVector(base + model.z[i].mu);
  }
  return nu;
}

double MeanLogCovarianceDet(const TreeShapeModel& model) {
  if (model.z.empty()) return 0.0;
  double total = 0;
  for (const auto& e : model.z) total -= LogDet(e.lambda);
  return total / double(model.z.size());
}

}  // namespace cpa
