#ifndef CPA_GEOMETRY_H_
#define CPA_GEOMETRY_H_

#include <span>
#include <vector>

#include <Eigen/Core>

namespace cpa {

inline constexpr int kDim = 4;  // parameters of a 2-D similarity

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;
using Mat4X = Eigen::Matrix<double, 4, Eigen::Dynamic>;

struct Point {
  double u = 0.0;
  double v = 0.0;
};

// Axis-aligned rectangle, top-left corner plus extent.
struct Rect {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;

  Point Center() const { return {x + 0.5 * width, y + 0.5 * height}; }
};

// One element of the 2-D similarity group acting on points as
//   p' = exp(s) R(theta) p + (tu, tv).
// theta is never wrapped; solvers rely on it varying smoothly.
struct SimTransform {
  double tu = 0.0;
  double tv = 0.0;
  double s = 0.0;
  double theta = 0.0;

  static SimTransform Identity() { return {}; }
  static SimTransform Translation(double tu, double tv) { return {tu, tv, 0.0, 0.0}; }

  // Parameter order (tu, tv, s, theta) is used by every Jacobian and
  // every d x m parameter matrix in the library.
  Vec4 AsVector() const { return {tu, tv, s, theta}; }
  static SimTransform FromVector(const Vec4& p) { return {p(0), p(1), p(2), p(3)}; }

  bool IsFinite() const;
};

// One transform per part.
using TransformSet = std::vector<SimTransform>;

Point Apply(const SimTransform& t, Point p);

// Coordinate-function composition: Apply(Compose(a, b), p) == Apply(a, Apply(b, p)).
SimTransform Compose(const SimTransform& outer, const SimTransform& inner);

SimTransform Invert(const SimTransform& t);

// Parameter-space mean with a circular mean for theta. Throws on empty input.
SimTransform MeanTransform(std::span<const SimTransform> ts);

// Maps the canonical rectangle onto `box`: no rotation, scale is the
// geometric mean of the width and height ratios, centers coincide.
SimTransform FromBox(const Rect& box, const Rect& canonical);

// Least-squares similarity taking `from` points onto `to` points (>= 2 pairs).
SimTransform FitSimilarity(std::span<const Point> from, std::span<const Point> to);

// d x m parameter matrix views of a TransformSet.
Mat4X ToMatrix(const TransformSet& ts);
TransformSet FromMatrix(const Mat4X& m);

// Largest absolute parameter difference between two equally sized sets.
double MaxParamChange(const TransformSet& a, const TransformSet& b);

}  // namespace cpa

#endif  // CPA_GEOMETRY_H_
