#include "cpa/image.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "cpa/error.h"

namespace cpa {

double SampleBilinear(const Image& img, double u, double v) {
  u = std::clamp(u, 0.0, double(img.width - 1));
  v = std::clamp(v, 0.0, double(img.height - 1));
  const int u0 = std::min(int(u), img.width - 1);
  const int v0 = std::min(int(v), img.height - 1);
  const int u1 = std::min(u0 + 1, img.width - 1);
  const int v1 = std::min(v0 + 1, img.height - 1);
  const double fu = u - u0;
  const double fv = v - v0;
  const double top = (1 - fu) * img.at(u0, v0) + fu * img.at(u1, v0);
  const double bottom = (1 - fu) * img.at(u0, v1) + fu * img.at(u1, v1);
  return (1 - fv) * top + fv * bottom;
}

ImageGradients ComputeGradients(const Image& img) {
  ImageGradients g{Image(img.width, img.height), Image(img.width, img.height)};
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const int ur = std::min(u + 1, img.width - 1), vd = std::min(v + 1, img.height - 1);
      g.du.at(u, v) = img.at(ur, v) - img.at(u, v);
      g.dv.at(u, v) = img.at(u, vd) - img.at(u, v);
    }
  }
  return g;
}

namespace {

// Gradient of the bilinear interpolant; zero along a clamped axis.
std::pair<double, double> InterpolantGradient(const ImageGradients& g, double u, double v) {
  const int w = g.du.width, h = g.du.height;
  const bool clamp_u = u < 0.0 || u > w - 1, clamp_v = v < 0.0 || v > h - 1;
  u = std::clamp(u, 0.0, double(w - 1));
  v = std::clamp(v, 0.0, double(h - 1));
  const int u0 = std::min(int(u), w - 1), v0 = std::min(int(v), h - 1);
  const int u1 = std::min(u0 + 1, w - 1), v1 = std::min(v0 + 1, h - 1);
  const double fu = u - u0, fv = v - v0;
  const double gu = (1 - fv) * g.du.at(u0, v0) + fv * g.du.at(u0, v1);
  const double gv = (1 - fu) * g.dv.at(u0, v0) + fu * g.dv.at(u1, v0);
  return {clamp_u ? 0.0 : gu, clamp_v ? 0.0 : gv};
}

}  // namespace

Eigen::VectorXd WarpPart(const Image& img, const SimTransform& t, const PartDomain& dom) {
  Eigen::VectorXd out(dom.size());
  for (int k = 0; k < dom.size(); ++k) {
    const Point x = Apply(t, dom.GridPoint(k));
    out(k) = SampleBilinear(img, x.u, x.v);
  }
  return out;
}

WarpJacobianMatrix WarpJacobian(const ImageGradients& grad, const SimTransform& t,
                                const PartDomain& dom) {
  WarpJacobianMatrix J(dom.size(), 4);
  for (int k = 0; k < dom.size(); ++k) {
    const Point x = Apply(t, dom.GridPoint(k));
    const auto [gu, gv] = InterpolantGradient(grad, x.u, x.v);
    const double ru = x.u - t.tu;
    const double rv = x.v - t.tv;
    J(k, 0) = gu;
    J(k, 1) = gv;
    J(k, 2) = gu * ru + gv * rv;   // dx/ds = x - t
    J(k, 3) = -gu * rv + gv * ru;  // dx/dtheta = perp(x - t)
  }
  return J;
}

WarpJacobianMatrix WarpJacobian(const Image& img, const SimTransform& t, const PartDomain& dom) {
  return WarpJacobian(ComputeGradients(img), t, dom);
}

Eigen::VectorXd NormalizeIntensity(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (n > 1e-12) return v / n;
  return Eigen::VectorXd::Zero(v.size());
}

void CheckImage(const Image& img) {
  if (img.width <= 0 || img.height <= 0 || img.data.size() != size_t(img.width) * img.height) {
    throw IoError("image dimensions do not match its data");
  }
  for (double x : img.data) {
    if (!std::isfinite(x)) throw IoError("image contains non-finite intensities");
  }
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string NextToken(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(char(c));
  }
  return tok;
}

}  // namespace

Image ReadPgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  if (NextToken(in) != "P5") throw IoError(path + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(NextToken(in));
    h = std::stoi(NextToken(in));
    maxval = std::stoi(NextToken(in));
  } catch (const std::exception&) {
    throw IoError(path + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw IoError(path + ": unsupported PGM header (8-bit only)");
  }
  std::vector<unsigned char> raw(size_t(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (in.gcount() != std::streamsize(raw.size())) throw IoError(path + ": truncated PGM data");
  Image img(w, h);
  for (size_t k = 0; k < raw.size(); ++k) img.data[k] = raw[k] / 255.0;
  return img;
}

void WritePgm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.data.size());
  for (size_t k = 0; k < raw.size(); ++k) {
    raw[k] = static_cast<unsigned char>(std::lround(std::clamp(img.data[k], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw IoError("failed writing " + path);
}

Image PartToImage(const Eigen::VectorXd& v, const PartDomain& dom) {
  Image img(dom.width, dom.height);
  for (int k = 0; k < dom.size(); ++k) img.data[k] = v(k);
  return img;
}

}  // namespace cpa
