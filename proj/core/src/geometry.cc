#include "cpa/geometry.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "cpa/error.h"

namespace cpa {

bool SimTransform::IsFinite() const {
  return std::isfinite(tu) && std::isfinite(tv) && std::isfinite(s) && std::isfinite(theta);
}

Point Apply(const SimTransform& t, Point p) {
  const double a = std::exp(t.s);
  const double c = std::cos(t.theta);
  const double sn = std::sin(t.theta);
  return {a * (c * p.u - sn * p.v) + t.tu, a * (sn * p.u + c * p.v) + t.tv};
}

SimTransform Compose(const SimTransform& outer, const SimTransform& inner) {
  // t = exp(s_o) R(theta_o) t_i + t_o; scales and angles add.
  const Point t = Apply(outer, {inner.tu, inner.tv});
  return {t.u, t.v, outer.s + inner.s, outer.theta + inner.theta};
}

SimTransform Invert(const SimTransform& t) {
  const double a = std::exp(-t.s);
  const double c = std::cos(t.theta);
  const double sn = std::sin(t.theta);
  // -exp(-s) R(-theta) t
  const double tu = -a * (c * t.tu + sn * t.tv);
  const double tv = -a * (-sn * t.tu + c * t.tv);
  return {tu, tv, -t.s, -t.theta};
}

SimTransform MeanTransform(std::span<const SimTransform> ts) {
  if (ts.empty()) throw Error("empty transform set");
  double tu = 0, tv = 0, s = 0, sin_sum = 0, cos_sum = 0;
  for (const auto& t : ts) {
    tu += t.tu;
    tv += t.tv;
    s += t.s;
    sin_sum += std::sin(t.theta);
    cos_sum += std::cos(t.theta);
  }
  const double n = double(ts.size());
  return {tu / n, tv / n, s / n, std::atan2(sin_sum / n, cos_sum / n)};
}

SimTransform FromBox(const Rect& box, const Rect& canonical) {
  if (!(box.width > 0 && box.height > 0 && canonical.width > 0 && canonical.height > 0)) {
    throw Error("degenerate rectangle");
  }
  const double scale = std::sqrt((box.width / canonical.width) * (box.height / canonical.height));
  const Point cb = box.Center();
  const Point cc = canonical.Center();
  return {cb.u - scale * cc.u, cb.v - scale * cc.v, std::log(scale), 0.0};
}

SimTransform FitSimilarity(std::span<const Point> from, std::span<const Point> to) {
  if (from.size() != to.size() || from.size() < 2) {
    throw Error("similarity fit needs at least two point pairs");
  }
  // Unknowns (a, b, tu, tv) with exp(s)R(theta) = [[a, -b], [b, a]].
  Eigen::MatrixXd A(2 * from.size(), 4);
  Eigen::VectorXd rhs(2 * from.size());
  for (size_t k = 0; k < from.size(); ++k) {
    A.row(2 * k) << from[k].u, -from[k].v, 1, 0;
    A.row(2 * k + 1) << from[k].v, from[k].u, 0, 1;
    rhs(2 * k) = to[k].u;
    rhs(2 * k + 1) = to[k].v;
  }
  const Eigen::Vector4d x = A.colPivHouseholderQr().solve(rhs);
  const double scale = std::hypot(x(0), x(1));
  if (!(scale > 0) || !std::isfinite(scale)) throw Error("degenerate landmark configuration");
  return {x(2), x(3), std::log(scale), std::atan2(x(1), x(0))};
}

Mat4X ToMatrix(const TransformSet& ts) {
  Mat4X m(4, ts.size());
  for (size_t i = 0; i < ts.size(); ++i) m.col(i) = ts[i].AsVector();
  return m;
}

TransformSet FromMatrix(const Mat4X& m) {
  TransformSet ts(m.cols());
  for (Eigen::Index i = 0; i < m.cols(); ++i) ts[i] = SimTransform::FromVector(m.col(i));
  return ts;
}

double MaxParamChange(const TransformSet& a, const TransformSet& b) {
  double change = 0;
  for (size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    change = std::max(change, (a[i].AsVector() - b[i].AsVector()).cwiseAbs().maxCoeff());
  }
  return change;
}

}  // namespace cpa
