#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "l1flow/norm.hpp"
#include "l1flow/report.hpp"

namespace l1flow {

/// Convex polygon with counterclockwise vertices; no vertices means the empty body.
class ConvexPolygon {
 public:
  ConvexPolygon() = default;
  /// Drops repeated and collinear vertices, then checks orientation and convexity.
  explicit ConvexPolygon(std::vector<Vec2> vertices);

  static ConvexPolygon rectangle(double x0, double y0, double x1, double y1);
  /// Vertices on the circle of the given radius.
  static ConvexPolygon regular(int n, double radius, Vec2 center = {}, double phase = 0.0);

  bool empty() const { return vertices_.empty(); }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }

  double area() const;
  double diameter() const;
  Vec2 centroid() const;
  /// Every supporting half-plane x . nu <= c + tol holds at p.
  bool contains(Vec2 p, double tol = 0.0) const;
  ConvexPolygon scaled(double s, Vec2 about = {}) const;
  ConvexPolygon translated(Vec2 d) const;

 private:
  std::vector<Vec2> vertices_;
};

/// Max over the vertices of each polygon of the distance to the other polygon.
double hausdorff_distance(const ConvexPolygon& a, const ConvexPolygon& b);

/// Polygonal approximation of the Wulff shape {phi° <= 1}.
struct WulffShape {
  ConvexPolygon polygon;
  Norm phi;
  int n_vertices = 0;  // number of supporting normals
  /// max over directions of |h_W(nu) - phi(nu)|, measured at construction.
  double support_error = 0.0;

  double phi_of_normal(Vec2 nu) const { return phi(nu); }
  double area() const { return polygon.area(); }
};

/// Intersection of the half-planes x . nu_k <= phi(nu_k) over n equi-angular unit normals nu_k.
WulffShape wulff_from_norm(const Norm& phi, int n_vertices = 256);

/// The Wulff polygon of radius r about the centre; the polygonal ball of the geometric flow.
ConvexPolygon wulff_ball(const WulffShape& W, double r, Vec2 center = {});

/// Support function max_x x . nu over the polygon.
double support(const ConvexPolygon& E, Vec2 nu);

double area(const ConvexPolygon& E);
/// Sum over edges of phi(outward normal) times edge length.
double aniso_perimeter(const ConvexPolygon& E, const WulffShape& W);
/// sup{r : E eroded by rW is non-empty}, by bisection to 1e-10 diam(E).
double inradius(const ConvexPolygon& E, const WulffShape& W);

/// E eroded by rW as a counterclockwise vertex cycle; may be a segment, a point or empty.
std::vector<Vec2> erosion(const ConvexPolygon& E, double r, const WulffShape& W);

/// Union of the translates of rW inside E: erosion by rW followed by dilation by rW.
ConvexPolygon inner_opening(const ConvexPolygon& E, double r, const WulffShape& W);

struct CheegerResult {
  double r = 0.0;       // r*
  double lambda = 0.0;  // lambda* = rho(r*)
  ConvexPolygon set;    // F* = E^-_{r*}
  double inradius = 0.0;
  /// lambda* r*; equals 1 when the minimum is interior. At r* = inradius (E is its own
  /// Cheeger set) there is no free arc and the identity does not apply.
  double product = 0.0;
  bool interior = false;
  bool unimodal = true;  // the dense pre-scan of rho had a single local minimum
  std::vector<std::pair<double, double>> scan;  // (r, rho(r)) of the dense pre-scan
};

/// Minimises rho(r) = P(E^-_r) / |E^-_r| over (0, inradius]: dense scan, then golden-section on the
/// bracketing interval. Ties with the inradius value are resolved toward the largest minimiser.
CheegerResult cheeger_scan(const ConvexPolygon& E, const WulffShape& W, int scan_points = 64);

/// Radius solving |E eroded by rW| = r^2 |W|, the closed-form Cheeger condition in the isotropic case.
double cheeger_radius_condition(const ConvexPolygon& E, const WulffShape& W);

/// Checks for a Cheeger result: lambda* r* = 1 on interior minima and agreement with the closed condition.
Report cheeger_report(const ConvexPolygon& E, const WulffShape& W, const CheegerResult& c);

struct GeoVolumeSample {
  double mass = 0.0;       // |E0| - |E^-_r|
  double perimeter = 0.0;  // f(m) = P(E^-_r)
  double lambda = 0.0;     // 1 / r, infinite at m = 0
  double r = 0.0;
};

/// Volume function of a convex body along its inner openings.
class GeoVolumeFunction {
 public:
  GeoVolumeFunction(ConvexPolygon E0, WulffShape W);

  const ConvexPolygon& body() const { return e0_; }
  const WulffShape& wulff() const { return w_; }
  const CheegerResult& cheeger() const { return cheeger_; }
  /// |E0 \ F*|, the right end of the valid window.
  double cheeger_mass() const { return cheeger_mass_; }
  /// |E0| - |E^-_{r0}| with r0 the inradius; openings parametrise the flow up to this mass.
  double inradius_mass() const { return inradius_mass_; }

  /// Mass of the opening at radius r.
  double mass_at(double r) const;
  /// Inverts the mass by bisection in r; m must lie in [0, cheeger_mass()] unless beyond_cheeger.
  GeoVolumeSample sample(double m, bool beyond_cheeger = false) const;

  /// Chord convexity of f and monotone lambda on samples evenly spaced in mass.
  Report validate(int samples = 32, double tol = 1e-6) const;

 private:
  ConvexPolygon e0_;
  WulffShape w_;
  CheegerResult cheeger_;
  double area0_ = 0.0;
  double cheeger_mass_ = 0.0;
  double inradius_mass_ = 0.0;
};

enum class GeoMode { ode, discrete_step };

const char* to_string(GeoMode m);

enum class GeoRegime {
  opening,        // E(t) = E^-_r before the Cheeger time
  post_cheeger,   // openings between the Cheeger and the inradius mass (isotropic only)
  stadium,        // r0 W plus a shrinking segment, lambda = 1 / r0 (isotropic only)
  ball,           // Wulff balls of radius R < r0 (isotropic only)
};

const char* to_string(GeoRegime r);

struct GeoSample {
  double t = 0.0;
  double r = 0.0;
  double area = 0.0;
  double perimeter = 0.0;
  double lambda = 0.0;
  GeoRegime regime = GeoRegime::opening;
  ConvexPolygon body;
};

struct GeoTrace {
  GeoMode mode = GeoMode::ode;
  std::vector<GeoSample> samples;
  double t_star = -1.0;  // Cheeger time, -1 when not reached
  double t_max = -1.0;   // extinction time, -1 when not reached
  double cheeger_mass = 0.0;
  int resolution = 0;
  /// "cheeger-arrest" for anisotropic runs, "extinction" or "final-time" otherwise.
  std::string terminal;
  /// "the limit flow", "unique up to translations" once the openings are exhausted, or "a limit flow"
  /// for anisotropic norms where uniqueness is not known.
  std::string uniqueness;
};

/// Implicit Euler on m' = lambda(m) along the openings of E0 until time T. Anisotropic runs stop at
/// the Cheeger time; isotropic runs continue through the ball regime to extinction.
GeoTrace geo_flow(const ConvexPolygon& E0, const WulffShape& W, double dt, double T);

/// Area decrease, monotone multiplier and perimeter, nested bodies and the integrated multiplier.
Report geo_trace_report(const GeoTrace& trace, double tol = 1e-9);

/// Minimiser of 2 pi r + pi^2 (R^2 - r^2)^2 / (2 tau) over r in [0, R].
double discrete_geo_step_ball(double R, double tau);

/// Minimiser of 2 pi (r1 + r2) + pi^2 (R1^2 - r1^2 + R2^2 - r2^2)^2 / (2 tau). Ties between the two
/// mirror minimisers for equal radii are broken by shrinking the first ball.
std::pair<double, double> discrete_geo_step_balls(std::pair<double, double> radii, double tau);

/// steps discrete steps from the given radii (a single ball when the second radius is 0).
std::vector<std::pair<double, double>> ball_step_sequence(std::pair<double, double> radii, double tau, int steps);

/// Single-ball discrete trace with mode discrete_step.
GeoTrace geo_ball_steps(double R, double tau, int steps);

/// Relative error of the sampled radius against the ball law R(t)^3 = R0^3 - 3 t / (2 pi), over the
/// ball-regime samples with R(t) >= floor R0.
Report ball_law_report(const GeoTrace& trace, double R0, double floor = 0.3, double tol = 5e-3);

/// Along a ball step sequence: perimeter monotonicity, the flat Holder bound, the first-order radius
/// update r = R - tau / (2 pi R^2) for every moving ball, and that exactly one ball moves per step
/// while both exist (the smaller one when the radii differ).
Report ball_steps_report(const std::vector<std::pair<double, double>>& seq, double tau, double tol = 1e-12,
                         double expansion_tol = 1e-9);

void write_polygon_csv(std::ostream& os, const ConvexPolygon& E);
ConvexPolygon read_polygon_csv(std::istream& is);
/// t,r,area,perimeter,lambda
void write_geo_trace_csv(std::ostream& os, const GeoTrace& trace);
/// Metadata header for geometric outputs: resolution, mode, T*, T_max, terminal flag.
std::string geo_metadata_json(const GeoTrace& trace);

}  // namespace l1flow
