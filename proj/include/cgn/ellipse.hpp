// Direct least-squares ellipse fitting (Halir-Flusser formulation of the
// Fitzgibbon constrained conic fit) and mask boundary extraction.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "cgn/concept_graph.hpp"
#include "cgn/errors.hpp"
#include "cgn/image.hpp"

namespace cgn {

struct EllipseParams {
  double cx = 0.0;
  double cy = 0.0;
  double a = 0.0;  // semi-major
  double b = 0.0;  // semi-minor
  double theta = 0.0;  // major-axis direction in [0, pi)

  /// Implicit value: < 1 inside, 1 on the curve, > 1 outside.
  double level(double x, double y) const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = (x - cx) * c + (y - cy) * s;
    const double v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (a * a) + (v * v) / (b * b);
  }
  bool contains(double x, double y) const { return level(x, y) <= 1.0; }

  /// Signed offsets of (x, y) along the major axis (u) and across it (v).
  Point2 local(double x, double y) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {(x - cx) * c + (y - cy) * s, -(x - cx) * s + (y - cy) * c};
  }

  Point2 point_at(double t) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {cx + a * std::cos(t) * c - b * std::sin(t) * s, cy + a * std::cos(t) * s + b * std::sin(t) * c};
  }
};

inline double canonical_angle(double theta) {
  double t = std::fmod(theta, std::numbers::pi);
  if (t < 0.0) t += std::numbers::pi;
  if (t >= std::numbers::pi) t -= std::numbers::pi;
  return t;
}

struct EllipseFit {
  EllipseParams ellipse;
  double rms = 0.0;  // RMS Sampson distance of the input points, px
};

/// Sampson (first-order geometric) distance from a point to the ellipse.
inline double sampson_distance(const EllipseParams& e, double x, double y) {
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double ia = 1.0 / (e.a * e.a), ib = 1.0 / (e.b * e.b);
  const double A = c * c * ia + s * s * ib;
  const double B = 2.0 * c * s * (ia - ib);
  const double C = s * s * ia + c * c * ib;
  const double dx = x - e.cx, dy = y - e.cy;
  const double f = A * dx * dx + B * dx * dy + C * dy * dy - 1.0;
  const double gx = 2.0 * A * dx + B * dy;
  const double gy = B * dx + 2.0 * C * dy;
  const double g = std::hypot(gx, gy);
  return g > 0.0 ? f / g : 0.0;
}

/// Converts conic coefficients A x^2 + B xy + C y^2 + D x + E y + F = 0 to
/// geometric parameters. Throws FitError when the conic is not a real ellipse.
inline EllipseParams conic_to_ellipse(double A, double B, double C, double D, double E, double F) {
  const double den = B * B - 4.0 * A * C;
  if (!(den < 0.0)) throw FitError("conic is not an ellipse");
  const double x0 = (2.0 * C * D - B * E) / den;
  const double y0 = (2.0 * A * E - B * D) / den;
  double q = -(A * x0 * x0 + B * x0 * y0 + C * y0 * y0 + D * x0 + E * y0 + F);
  Eigen::Matrix2d m;
  m << A, B / 2.0, B / 2.0, C;
  if (q < 0.0) {
    q = -q;
    m = -m;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  const Eigen::Vector2d lam = es.eigenvalues();  // ascending
  if (!(lam(0) > 0.0) || !(q > 0.0)) throw FitError("conic is not a real ellipse");
  EllipseParams e;
  e.cx = x0;
  e.cy = y0;
  e.a = std::sqrt(q / lam(0));
  e.b = std::sqrt(q / lam(1));
  const Eigen::Vector2d major = es.eigenvectors().col(0);
  e.theta = canonical_angle(std::atan2(major(1), major(0)));
  return e;
}

inline EllipseFit fit_ellipse(std::span<const Point2> points) {
  const std::size_t n = points.size();
  if (n < 6) throw FitError("degenerate point set");
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= double(n);
  my /= double(n);
  double spread = 0.0;
  for (const auto& p : points) spread += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
  spread = std::sqrt(spread / double(n));
  if (!(spread > 0.0) || !std::isfinite(spread)) throw FitError("degenerate point set");

  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (points[i].x - mx) / spread, y = (points[i].y - my) / spread;
    d1.row(static_cast<Eigen::Index>(i)) << x * x, x * y, y * y;
    d2.row(static_cast<Eigen::Index>(i)) << x, y, 1.0;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(d2);
  lu.setThreshold(1e-10);
  if (lu.rank() < 3) throw FitError("degenerate point set");

  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  const Eigen::Matrix3d t = -s3.ldlt().solve(s2.transpose());
  const Eigen::Matrix3d m = s1 + s2 * t;
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;
  Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
  int pick = -1;
  double best = -1.0;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = es.eigenvectors().col(k).real();
    const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
    if (cond > 0.0 && (pick < 0 || cond > best)) {
      pick = k;
      best = cond;
    }
  }
  if (pick < 0) throw FitError("degenerate point set");
  const Eigen::Vector3d a1 = es.eigenvectors().col(pick).real();
  const Eigen::Vector3d a2 = t * a1;

  EllipseParams e = conic_to_ellipse(a1(0), a1(1), a1(2), a2(0), a2(1), a2(2));
  e.cx = mx + spread * e.cx;
  e.cy = my + spread * e.cy;
  e.a *= spread;
  e.b *= spread;

  EllipseFit fit{e, 0.0};
  for (const auto& p : points) {
    const double d = sampson_distance(e, p.x, p.y);
    fit.rms += d * d;
  }
  fit.rms = std::sqrt(fit.rms / double(n));
  return fit;
}

/// Foreground (nonzero) pixels with a background pixel, or the image border,
/// among their 8 neighbours. Points are pixel centres, raster order.
inline std::vector<Point2> mask_boundary(const GrayImage& mask) {
  std::vector<Point2> out;
  const long w = long(mask.width), h = long(mask.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (!mask.at(std::size_t(x), std::size_t(y))) continue;
      bool edge = false;
      for (long dy = -1; dy <= 1 && !edge; ++dy)
        for (long dx = -1; dx <= 1 && !edge; ++dx) {
          const long u = x + dx, v = y + dy;
          edge = u < 0 || v < 0 || u >= w || v >= h || !mask.at(std::size_t(u), std::size_t(v));
        }
      if (edge) out.push_back({double(x), double(y)});
    }
  return out;
}

}  // namespace cgn
