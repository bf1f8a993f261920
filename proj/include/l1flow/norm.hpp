#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace l1flow {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double length(Vec2 a) { return std::hypot(a.x, a.y); }

enum class NormKind { euclidean, l1, linf, elliptic, crystalline };

/**
 * A norm phi on R^2 together with its dual norm phi° and the projection onto
 * the dual unit ball {phi° <= 1}, which is the Wulff shape of phi.
 *
 * Crystalline norms are given by the vertices of their Wulff shape, so that
 * phi is the support function of that polygon.
 */
class Norm {
 public:
  static Norm euclidean();
  static Norm l1();
  static Norm linf();
  /// phi(p) = sqrt(a p_x^2 + b p_y^2), a, b > 0.
  static Norm elliptic(double a, double b);
  /// phi(p) = max_k p . w_k for the counterclockwise Wulff vertices w_k.
  static Norm crystalline(std::vector<Vec2> wulff_vertices);

  NormKind kind() const { return kind_; }
  const std::string& name() const;

  double operator()(Vec2 p) const;
  double dual(Vec2 q) const;
  Vec2 project_dual_ball(Vec2 q) const;

  /// Whether phi(p) = |p_x| c_x + |p_y| c_y, i.e. coordinate separable.
  bool separable() const { return kind_ == NormKind::l1; }

  double elliptic_a() const { return a_; }
  double elliptic_b() const { return b_; }
  const std::vector<Vec2>& wulff_vertices() const { return vertices_; }

 private:
  NormKind kind_ = NormKind::euclidean;
  double a_ = 1.0;
  double b_ = 1.0;
  std::vector<Vec2> vertices_;
};

}  // namespace l1flow
