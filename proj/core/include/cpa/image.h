#ifndef CPA_IMAGE_H_
#define CPA_IMAGE_H_

#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpa/geometry.h"

namespace cpa {

// Grayscale image, row-major, intensities in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), data(size_t(w) * h, fill) {}

  double& at(int u, int v) { return data[size_t(v) * width + u]; }
  double at(int u, int v) const { return data[size_t(v) * width + u]; }
  bool empty() const { return data.empty(); }
};

// Rectangular sampling grid of one part in the canonical frame. Grid
// points are spaced one pixel apart and centered on `center`; the
// raster order (rows of constant v, u increasing) matches the row order
// of the part dictionary.
struct PartDomain {
  int part_id = 0;
  Point center;
  int width = 0;
  int height = 0;

  int size() const { return width * height; }
  Point GridPoint(int index) const {
    return {center.u - 0.5 * (width - 1) + index % width,
            center.v - 0.5 * (height - 1) + index / width};
  }
  Rect Bounds() const {
    return {center.u - 0.5 * (width - 1), center.v - 0.5 * (height - 1), double(width - 1),
            double(height - 1)};
  }
};

using WarpJacobianMatrix = Eigen::Matrix<double, Eigen::Dynamic, 4>;

// Bilinear interpolation; coordinates outside the image clamp to the edge.
double SampleBilinear(const Image& img, double u, double v);

// Forward differences I(u+1, v) - I(u, v) and I(u, v+1) - I(u, v); the
// last column (row) is zero.
struct ImageGradients {
  Image du;
  Image dv;
};
ImageGradients ComputeGradients(const Image& img);

// Samples img at t(p) for every grid point p of dom.
Eigen::VectorXd WarpPart(const Image& img, const SimTransform& t, const PartDomain& dom);

// d(WarpPart)/d(tu, tv, s, theta): the exact gradient of the bilinear
// interpolant at the warped coordinates, chained with the derivative of
// the similarity.
WarpJacobianMatrix WarpJacobian(const Image& img, const SimTransform& t, const PartDomain& dom);
WarpJacobianMatrix WarpJacobian(const ImageGradients& grad, const SimTransform& t,
                                const PartDomain& dom);

// v / ||v||_2, or zero when the norm is below 1e-12.
Eigen::VectorXd NormalizeIntensity(const Eigen::VectorXd& v);

// Validates dimensions and finiteness; throws IoError.
void CheckImage(const Image& img);

// Binary 8-bit PGM (P5). Intensities are divided by 255 on read.
Image ReadPgm(const std::string& path);
void WritePgm(const std::string& path, const Image& img);

// Reshapes a part vector back into a width x height image.
Image PartToImage(const Eigen::VectorXd& v, const PartDomain& dom);

}  // namespace cpa

#endif  // CPA_IMAGE_H_
