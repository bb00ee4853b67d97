#include "keldysh/bump.hpp"

#include <cmath>

namespace keldysh {

namespace {

// Quartic cardinal B-spline on [-2.5, 2.5] before normalization; peak 115/192.
constexpr double kPeak = 115.0 / 192.0;

double m4(double s) {
  const double u = std::abs(s);
  if (u >= 2.5) return 0.0;
  if (u <= 0.5) return (115.0 + u * u * (-120.0 + 48.0 * u * u)) / 192.0;
  if (u <= 1.5) return (55.0 + u * (20.0 + u * (-120.0 + u * (80.0 - 16.0 * u)))) / 96.0;
  const double w = 2.5 - u;
  return w * w * w * w / 24.0;
}

double m4_d1(double s) {
  const double u = std::abs(s);
  if (u >= 2.5) return 0.0;
  const double sg = (s >= 0.0) ? 1.0 : -1.0;
  if (u <= 0.5) return s * (-1.25 + s * s);
  if (u <= 1.5) return sg * (20.0 + u * (-240.0 + u * (240.0 - 64.0 * u))) / 96.0;
  const double w = 2.5 - u;
  return -sg * w * w * w / 6.0;
}

double m4_d2(double s) {
  const double u = std::abs(s);
  if (u >= 2.5) return 0.0;
  if (u <= 0.5) return -1.25 + 3.0 * s * s;
  if (u <= 1.5) return (-240.0 + u * (480.0 - 192.0 * u)) / 96.0;
  const double w = 2.5 - u;
  return 0.5 * w * w;
}

}  // namespace

double bspline4(double t) { return m4(2.5 * t) / kPeak; }
double bspline4_d1(double t) { return 2.5 * m4_d1(2.5 * t) / kPeak; }
double bspline4_d2(double t) { return 6.25 * m4_d2(2.5 * t) / kPeak; }

bool TensorBump::supports(double x, double y) const {
  return std::abs(x - cx) < rx && std::abs(y - cy) < ry;
}

double TensorBump::value(double x, double y) const {
  return amp * bspline4((x - cx) / rx) * bspline4((y - cy) / ry);
}

double TensorBump::dx(double x, double y) const {
  return amp / rx * bspline4_d1((x - cx) / rx) * bspline4((y - cy) / ry);
}

double TensorBump::dy(double x, double y) const {
  return amp / ry * bspline4((x - cx) / rx) * bspline4_d1((y - cy) / ry);
}

double TensorBump::dxx(double x, double y) const {
  return amp / (rx * rx) * bspline4_d2((x - cx) / rx) * bspline4((y - cy) / ry);
}

double TensorBump::dyy(double x, double y) const {
  return amp / (ry * ry) * bspline4((x - cx) / rx) * bspline4_d2((y - cy) / ry);
}

double TensorBump::dxy(double x, double y) const {
  return amp / (rx * ry) * bspline4_d1((x - cx) / rx) * bspline4_d1((y - cy) / ry);
}

}  // namespace keldysh
