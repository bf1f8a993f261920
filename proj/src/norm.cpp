#include "l1flow/norm.hpp"

#include <algorithm>
#include <limits>

#include "l1flow/common.hpp"

namespace l1flow {

namespace {

Vec2 project_to_segment(Vec2 q, Vec2 a, Vec2 b) {
  const Vec2 d = b - a;
  const double len2 = dot(d, d);
  if (len2 == 0.0) return a;
  const double t = std::clamp(dot(q - a, d) / len2, 0.0, 1.0);
  return a + t * d;
}

// Projection onto the ellipse {x^2/a + y^2/b <= 1} for q outside it. The
// multiplier equation is convex and decreasing in t, so Newton from t = 0
// increases monotonically to the root.
Vec2 project_ellipse(Vec2 q, double a, double b) {
  double t = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double ra = a / (a + t);
    const double rb = b / (b + t);
    const double g = q.x * q.x * ra * ra / a + q.y * q.y * rb * rb / b - 1.0;
    const double dg = -2.0 * (q.x * q.x * ra * ra / (a + t) + q.y * q.y * rb * rb / (b + t));
    if (g <= 1e-15) break;
    const double step = g / dg;
    t -= step;
    if (std::abs(step) <= 1e-16 * (1.0 + t)) break;
  }
  return {q.x * a / (a + t), q.y * b / (b + t)};
}

}  // namespace

Norm Norm::euclidean() { return Norm{}; }

Norm Norm::l1() {
  Norm n;
  n.kind_ = NormKind::l1;
  return n;
}

Norm Norm::linf() {
  Norm n;
  n.kind_ = NormKind::linf;
  return n;
}

Norm Norm::elliptic(double a, double b) {
  require(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b),
          "elliptic norm needs positive finite coefficients");
  Norm n;
  n.kind_ = NormKind::elliptic;
  n.a_ = a;
  n.b_ = b;
  return n;
}

Norm Norm::crystalline(std::vector<Vec2> wulff_vertices) {
  require(wulff_vertices.size() >= 3, "crystalline norm needs at least three Wulff vertices");
  const std::size_t n = wulff_vertices.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 a = wulff_vertices[k];
    const Vec2 b = wulff_vertices[(k + 1) % n];
    // origin strictly inside and counterclockwise turning
    require(cross(a, b) > 0.0, "crystalline Wulff polygon must be counterclockwise around the origin");
  }
  Norm out;
  out.kind_ = NormKind::crystalline;
  out.vertices_ = std::move(wulff_vertices);
  return out;
}

const std::string& Norm::name() const {
  static const std::string names[] = {"euclidean", "l1", "linf", "elliptic", "crystalline"};
  return names[static_cast<int>(kind_)];
}

double Norm::operator()(Vec2 p) const {
  switch (kind_) {
    case NormKind::euclidean:
      return length(p);
    case NormKind::l1:
      return std::abs(p.x) + std::abs(p.y);
    case NormKind::linf:
      return std::max(std::abs(p.x), std::abs(p.y));
    case NormKind::elliptic:
      return std::sqrt(a_ * p.x * p.x + b_ * p.y * p.y);
    case NormKind::crystalline: {
      double m = -std::numeric_limits<double>::infinity();
      for (const Vec2& w : vertices_) m = std::max(m, dot(p, w));
      return m;
    }
  }
  return 0.0;
}

double Norm::dual(Vec2 q) const {
  switch (kind_) {
    case NormKind::euclidean:
      return length(q);
    case NormKind::l1:
      return std::max(std::abs(q.x), std::abs(q.y));
    case NormKind::linf:
      return std::abs(q.x) + std::abs(q.y);
    case NormKind::elliptic:
      return std::sqrt(q.x * q.x / a_ + q.y * q.y / b_);
    case NormKind::crystalline: {
      // gauge of the Wulff polygon: max over edges of (n_e . q) / (n_e . w_e)
      double m = 0.0;
      const std::size_t n = vertices_.size();
      for (std::size_t k = 0; k < n; ++k) {
        const Vec2 a = vertices_[k];
        const Vec2 b = vertices_[(k + 1) % n];
        const Vec2 normal{b.y - a.y, a.x - b.x};
        m = std::max(m, dot(normal, q) / dot(normal, a));
      }
      return m;
    }
  }
  return 0.0;
}

Vec2 Norm::project_dual_ball(Vec2 q) const {
  switch (kind_) {
    case NormKind::euclidean: {
      const double r = length(q);
      return r <= 1.0 ? q : (1.0 / r) * q;
    }
    case NormKind::l1:
      return {std::clamp(q.x, -1.0, 1.0), std::clamp(q.y, -1.0, 1.0)};
    case NormKind::linf: {
      // projection onto the l1 diamond
      const double ax = std::abs(q.x);
      const double ay = std::abs(q.y);
      if (ax + ay <= 1.0) return q;
      const double shift = std::max(0.0, std::max((ax + ay - 1.0) / 2.0, std::max(ax, ay) - 1.0));
      const double px = std::max(ax - shift, 0.0);
      const double py = std::max(ay - shift, 0.0);
      return {std::copysign(px, q.x), std::copysign(py, q.y)};
    }
    case NormKind::elliptic: {
      if (q.x * q.x / a_ + q.y * q.y / b_ <= 1.0) return q;
      return project_ellipse(q, a_, b_);
    }
    case NormKind::crystalline: {
      if (dual(q) <= 1.0) return q;
      Vec2 best = vertices_.front();
      double best_d = kInfinity;
      const std::size_t n = vertices_.size();
      for (std::size_t k = 0; k < n; ++k) {
        const Vec2 p = project_to_segment(q, vertices_[k], vertices_[(k + 1) % n]);
        const double d = length(q - p);
        if (d < best_d) {
          best_d = d;
          best = p;
        }
      }
      return best;
    }
  }
  return q;
}

}  // namespace l1flow
