#include "cpa/align.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "cpa/error.h"

namespace cpa {

double PartLambda(int omega, double lambda_hat) { return lambda_hat / std::sqrt(double(omega)); }

double ShapeEta(const std::vector<PartDomain>& domains, double eta_hat) {
  double sum = 0;
  for (const auto& d : domains) sum += 1.0 / std::sqrt(double(d.size()));
  return eta_hat * sum;
}

void CpaModel::SetWeights(double lambda_hat, double eta_hat) {
  lambda.clear();
  for (const auto& d : domains) lambda.push_back(PartLambda(d.size(), lambda_hat));
  eta = ShapeEta(domains, eta_hat);
}

void CpaModel::Validate() const {
  const int m = parts();
  if (m < 1) throw Error("model has no parts");
  if (int(dictionaries.size()) != m || int(lambda.size()) != m || shape.parts() != m) {
    throw Error("model: part count mismatch");
  }
  shape.config.Validate();
  shape.Validate();
  for (int i = 0; i < m; ++i) {
    if (domains[i].width < 4 || domains[i].height < 4) throw Error("part domain below 4x4");
    const Eigen::MatrixXd& d = dictionaries[i];
    if (d.rows() != domains[i].size() || d.cols() < 1) {
      throw Error("dictionary " + std::to_string(i + 1) + " does not match its domain");
    }
    for (Eigen::Index k = 0; k < d.cols(); ++k) {
      if (std::abs(d.col(k).norm() - 1.0) > 1e-8) {
        throw Error("dictionary " + std::to_string(i + 1) + " has a non-unit column");
      }
    }
    if (!(lambda[i] > 0.0)) throw Error("part weights must be positive");
  }
  if (!(eta >= 0.0)) throw Error("eta must be nonnegative");
}

AlignmentState StateFromLandmarks(const std::vector<PartDomain>& domains,
                                  const std::vector<Point>& landmarks) {
  if (landmarks.size() != domains.size()) throw Error("landmark count does not match part count");
  AlignmentState st;
  std::vector<Point> centers;
  for (const auto& d : domains) centers.push_back(d.center);
  if (centers.size() >= 2) {
    st.sigma = FitSimilarity(centers, landmarks);
  } else if (!centers.empty()) {
    st.sigma = SimTransform::Translation(landmarks[0].u - centers[0].u,
                                         landmarks[0].v - centers[0].v);
  }
  const SimTransform inv = Invert(st.sigma);
  for (size_t i = 0; i < centers.size(); ++i) {
    const Point q = Apply(inv, landmarks[i]);
    st.nu.push_back(SimTransform::Translation(q.u - centers[i].u, q.v - centers[i].v));
  }
  return st;
}

AlignmentState Initialize(const Image& y, const CpaModel& model, const InitHint& hint) {
  CheckImage(y);
  AlignmentState st;
  switch (hint.kind) {
    case InitHint::Kind::kNone:
      break;
    case InitHint::Kind::kBox:
      st.sigma = FromBox(hint.box, model.canonical);
      break;
    case InitHint::Kind::kLandmarks:
      if (int(hint.landmarks.size()) != model.parts()) {
        throw Error("landmark count " + std::to_string(hint.landmarks.size()) +
                    " does not match part count " + std::to_string(model.parts()));
      }
      return StateFromLandmarks(model.domains, hint.landmarks);
  }
  st.nu = MaxLikelihoodParts(model.shape);
  return st;
}

PartLinearization LinearizePart(const Image& y, const ImageGradients& grad,
                                const SimTransform& sigma, const SimTransform& nu,
                                const PartDomain& dom) {
  const SimTransform zeta = Compose(sigma, nu);
  const Eigen::VectorXd raw = WarpPart(y, zeta, dom);
  const double norm = raw.norm();
  PartLinearization lin;
  if (norm <= 1e-12) {
    lin.y = Eigen::VectorXd::Zero(raw.size());
    lin.jacobian = WarpJacobianMatrix::Zero(raw.size(), 4);
    return lin;
  }
  lin.y = raw / norm;
  // d zeta / d nu: translations rotate and scale with sigma, s and theta add.
  Mat4 chain = Mat4::Identity();
  const double a = std::exp(sigma.s) * std::cos(sigma.theta);
  const double b = std::exp(sigma.s) * std::sin(sigma.theta);
  chain.topLeftCorner<2, 2>() << a, -b, b, a;
  const WarpJacobianMatrix j = WarpJacobian(grad, zeta, dom) * chain / norm;
  // Derivative of v / ||v||.
  lin.jacobian = j - lin.y * (lin.y.transpose() * j);
  return lin;
}

namespace {

// Least-squares operator (D'D)^-1 D', ridged when D'D is ill-conditioned.
Eigen::MatrixXd LeastSquaresOperator(const Eigen::MatrixXd& d) {
  Eigen::MatrixXd gram = d.transpose() * d;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo > 1e-10 * hi)) gram.diagonal().array() += 1e-8;
  return gram.ldlt().solve(d.transpose());
}

}  // namespace

PartStepResult PartStep(const Image& y, const CpaModel& model, const SimTransform& sigma,
                        const TransformSet& nu, const AlmSettings& settings) {
  settings.Validate();
  const int m = model.parts();
  if (int(nu.size()) != m) throw Error("part step: part count mismatch");
  const ImageGradients grad = ComputeGradients(y);

  std::vector<Eigen::MatrixXd> ls(m);
  for (int i = 0; i < m; ++i) ls[i] = LeastSquaresOperator(model.dictionaries[i]);

  PartStepResult res;
  res.nu = nu;
  res.x.resize(m);
  res.e.resize(m);
  std::vector<PartLinearization> lin(m);
  std::vector<Mat4> jtj(m);
  std::vector<Eigen::VectorXd> gamma(m), dx(m);
  BlockSystem sys;
  sys.model = &model.shape;
  sys.eta = model.eta;
  sys.g_blocks.resize(m);
  sys.q.resize(4, m);

  for (int outer = 0; outer < settings.max_outer_iters; ++outer) {
    res.iterations = outer + 1;
    Eigen::Index total = 0;
    for (int i = 0; i < m; ++i) {
      lin[i] = LinearizePart(y, grad, sigma, res.nu[i], model.domains[i]);
      jtj[i] = lin[i].jacobian.transpose() * lin[i].jacobian;
      total += lin[i].y.size();
    }
    Eigen::VectorXd stacked(total);
    for (int i = 0, off = 0; i < m; off += int(lin[i].y.size()), ++i) {
      stacked.segment(off, lin[i].y.size()) = lin[i].y;
    }
    double beta = settings.InitialBeta(stacked);
    Mat4X delta = Mat4X::Zero(4, m);
    for (int i = 0; i < m; ++i) {
      res.e[i].setZero(lin[i].y.size());
      gamma[i].setZero(lin[i].y.size());
    }

    for (int inner = 0; inner < settings.max_inner_iters; ++inner) {
      for (int i = 0; i < m; ++i) {
        const Eigen::VectorXd r = lin[i].y + gamma[i] / beta;
        const Eigen::VectorXd jd = lin[i].jacobian * delta.col(i);
        res.x[i] = ls[i] * (r + jd - res.e[i]);
        dx[i] = model.dictionaries[i] * res.x[i];
        res.e[i] = SoftThreshold(Eigen::MatrixXd(r + jd - dx[i]), model.lambda[i] / beta);
        sys.g_blocks[i] = beta * jtj[i];
        sys.q.col(i) = beta * lin[i].jacobian.transpose() * (dx[i] + res.e[i] - r);
      }
      delta = SolveDeltaSystem(sys, res.nu);
      if (!delta.allFinite()) throw SolverError("diverged");
      double hmax = 0;
      for (int i = 0; i < m; ++i) {
        const Eigen::VectorXd h = lin[i].y + lin[i].jacobian * delta.col(i) - dx[i] - res.e[i];
        hmax = std::max(hmax, h.cwiseAbs().maxCoeff());
        gamma[i] += beta * h;
      }
      beta = std::min(settings.rho * beta, settings.beta_max);
      if (hmax <= settings.inner_tol) break;
    }

    for (int i = 0; i < m; ++i) {
      res.nu[i] = SimTransform::FromVector(res.nu[i].AsVector() + delta.col(i));
      if (!res.nu[i].IsFinite()) throw SolverError("diverged");
    }
    if (delta.cwiseAbs().maxCoeff() <= settings.outer_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

namespace {

// nu'_i = (sigma + delta)^-1 o zeta_i and its derivative with respect to delta.
struct Split {
  TransformSet nu;
  std::vector<Mat4> jac;
};

Split SplitAt(const SimTransform& sigma, const TransformSet& zeta, const Vec4& delta,
              bool with_jacobian) {
  const SimTransform sp = SimTransform::FromVector(sigma.AsVector() + delta);
  const double c = std::cos(sp.theta), s = std::sin(sp.theta), k = std::exp(-sp.s);
  Split out;
  out.nu.resize(zeta.size());
  if (with_jacobian) out.jac.resize(zeta.size());
  for (size_t i = 0; i < zeta.size(); ++i) {
    const double wu = zeta[i].tu - sp.tu, wv = zeta[i].tv - sp.tv;
    // R(-theta) = [c s; -s c]
    const double tu = k * (c * wu + s * wv);
    const double tv = k * (-s * wu + c * wv);
    out.nu[i] = {tu, tv, zeta[i].s - sp.s, zeta[i].theta - sp.theta};
    if (!with_jacobian) continue;
    Mat4 j = Mat4::Zero();
    j(0, 0) = -k * c;
    j(0, 1) = -k * s;
    j(1, 0) = k * s;
    j(1, 1) = -k * c;
    j(0, 2) = -tu;
    j(1, 2) = -tv;
    j(0, 3) = tv;
    j(1, 3) = -tu;
    j(2, 2) = -1.0;
    j(3, 3) = -1.0;
    out.jac[i] = j;
  }
  return out;
}

double QuadCost(const TransformSet& nu, const TreeShapeModel& shape) {
  double total = 0;
  for (int i = 0; i < shape.parts(); ++i) {
    const Vec4 r = NuDelta(nu, shape.config, i) - shape.z[i].mu;
    total += 0.5 * r.dot(shape.z[i].lambda * r);
  }
  return total;
}

TransformSet CombinedOf(const SimTransform& sigma, const TransformSet& nu) {
  TransformSet z;
  z.reserve(nu.size());
  for (const auto& n : nu) z.push_back(Compose(sigma, n));
  return z;
}

}  // namespace

double HolisticCost(const SimTransform& sigma, const TransformSet& nu,
                    const TreeShapeModel& shape, const Vec4& delta) {
  const Split sp = SplitAt(sigma, CombinedOf(sigma, nu), delta, false);
  return ShapeCost(sp.nu, shape);
}

HolisticResult HolisticStep(const SimTransform& sigma, const TransformSet& nu,
                            const TreeShapeModel& shape) {
  shape.Validate();
  if (int(nu.size()) != shape.parts()) throw Error("holistic step: part count mismatch");
  const double b = ShapeCostConstant(shape);
  const TransformSet zeta = CombinedOf(sigma, nu);
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 40;
  constexpr int kMaxIters = 200;

  HolisticResult res;
  res.sigma = sigma;
  res.nu = nu;
  const double f0 = QuadCost(nu, shape);
  res.cost_before = f0 + b;
  res.cost_after = res.cost_before;

  Vec4 delta = Vec4::Zero();
  double f = f0;
  for (int it = 0; it < kMaxIters; ++it) {
    const Split sp = SplitAt(sigma, zeta, delta, true);
    Vec4 g = Vec4::Zero();
    Mat4 h = Mat4::Zero();
    for (int i = 0; i < shape.parts(); ++i) {
      const int p = shape.config.ParentPart(i);
      const Mat4 a = p < 0 ? sp.jac[i] : Mat4(sp.jac[i] - sp.jac[p]);
      const Vec4 r = NuDelta(sp.nu, shape.config, i) - shape.z[i].mu;
      g += a.transpose() * (shape.z[i].lambda * r);
      h += a.transpose() * shape.z[i].lambda * a;
    }
    if (g.norm() <= 1e-12 * (1.0 + std::abs(f))) break;
    // Gauss-Newton scaled descent direction; plain gradient when it is not downhill.
    Vec4 dir = -h.ldlt().solve(g);
    if (!dir.allFinite() || g.dot(dir) >= 0.0) dir = -g;
    const double slope = g.dot(dir);
    double step = 1.0, f_new = f;
    bool accepted = false;
    for (int k = 0; k <= kMaxHalvings; ++k, step *= 0.5) {
      const Vec4 trial = delta + step * dir;
      f_new = QuadCost(SplitAt(sigma, zeta, trial, false).nu, shape);
      if (std::isfinite(f_new) && f_new <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (it == 0) {
        res.line_search_failed = true;
        return res;
      }
      break;
    }
    const double prev = f;
    delta += step * dir;
    f = f_new;
    res.iterations = it + 1;
    if (prev - f <= 1e-15 * (1.0 + std::abs(prev))) break;
  }
  if (f < f0) {
    res.sigma = SimTransform::FromVector(sigma.AsVector() + delta);
    res.nu = SplitAt(sigma, zeta, delta, false).nu;
    res.cost_after = f + b;
  }
  return res;
}

TransformSet AlignmentResult::Combined() const { return CombinedOf(sigma, nu); }

AlignmentResult AlignFrom(const Image& y, const CpaModel& model, const AlignmentState& start,
                          const AlmSettings& settings) {
  CheckImage(y);
  model.Validate();
  settings.Validate();
  AlignmentResult res;
  res.sigma = start.sigma;
  res.nu = start.nu;
  if (int(res.nu.size()) != model.parts()) throw Error("align: part count mismatch");
  bool part_converged = false;
  for (int round = 0; round < settings.max_alternations; ++round) {
    res.iterations = round + 1;
    const TransformSet before = res.Combined();
    const SimTransform sigma_before = res.sigma;
    PartStepResult ps = PartStep(y, model, res.sigma, res.nu, settings);
    part_converged = ps.converged;
    res.x = std::move(ps.x);
    res.e = std::move(ps.e);
    const HolisticResult hs = HolisticStep(res.sigma, ps.nu, model.shape);
    res.holistic_failed = hs.line_search_failed;
    res.sigma = hs.sigma;
    res.nu = hs.nu;
    double change = MaxParamChange(before, res.Combined());
    change = std::max(change, (res.sigma.AsVector() - sigma_before.AsVector()).cwiseAbs().maxCoeff());
    if (change <= settings.outer_tol) {
      res.converged = part_converged;
      break;
    }
  }
  res.residual_l1.clear();
  for (const auto& e : res.e) res.residual_l1.push_back(e.lpNorm<1>());
  return res;
}

AlignmentResult Align(const Image& y, const CpaModel& model, const InitHint& hint,
                      const AlmSettings& settings) {
  return AlignFrom(y, model, Initialize(y, model, hint), settings);
}

CpaModel HolisticModel(const Rect& canonical, const Eigen::MatrixXd& dictionary,
                       double lambda_hat, double eta_hat) {
  CpaModel model;
  model.canonical = canonical;
  PartDomain dom;
  dom.part_id = 0;
  dom.width = int(std::lround(canonical.width));
  dom.height = int(std::lround(canonical.height));
  dom.center = {canonical.x + 0.5 * (dom.width - 1), canonical.y + 0.5 * (dom.height - 1)};
  model.domains = {dom};
  model.dictionaries = {dictionary};
  model.shape.config = TreeConfig::Star(1);
  EdgeGaussian g;
  g.lambda = Mat4::Identity();
  model.shape.z = {g};
  model.SetWeights(lambda_hat, eta_hat);
  return model;
}

}  // namespace cpa
