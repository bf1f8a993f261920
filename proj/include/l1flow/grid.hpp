#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace l1flow {

enum class Boundary { neumann, dirichlet };

const char* to_string(Boundary bc);
Boundary parse_boundary(const std::string& name);

/**
 * Uniform rectangular grid of nx * ny unknowns with spacing h; ny == 1 is a 1D
 * grid.
 *
 * Neumann grids are cell centred on [0, nx h] x [0, ny h]; the forward
 * difference at the far edge is zero. Dirichlet grids hold interior nodes
 * of [0, (nx+1) h] x [0, (ny+1) h] and read the boundary trace from a ghost ring.
 */
struct GridGeometry {
  int nx = 1;
  int ny = 1;
  double h = 1.0;
  Boundary bc = Boundary::neumann;

  int dim() const { return ny == 1 ? 1 : 2; }
  std::size_t node_count() const { return static_cast<std::size_t>(nx) * ny; }
  /// Cells carrying a gradient vector (the DualField layout).
  std::size_t cell_count() const;
  std::size_t ghost_count() const;
  /// h^d, the weight of every node and cell in integrals.
  double volume_element() const { return dim() == 1 ? h : h * h; }
  /// Sum of node weights, the discrete |Omega| seen by the L1 norm.
  double measure() const { return volume_element() * static_cast<double>(node_count()); }
  /// Physical coordinate of node index i along an axis.
  double coordinate(int i) const;
  /// Index of the ghost value at extended position (i, j), i in [-1, nx], j in [-1, ny].
  std::size_t ghost_index(int i, int j) const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// Scalar field on a grid; for Dirichlet grids the ghost ring stores the trace g.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(GridGeometry geometry, std::vector<double> values, std::vector<double> ghost = {});

  static GridFunction constant(GridGeometry geometry, double value, std::vector<double> ghost = {});

  /// Samples f at the node coordinates; Dirichlet ghosts are sampled from f as well.
  static GridFunction sample(GridGeometry geometry, const std::function<double(double, double)>& f);

  const GridGeometry& geometry() const { return geometry_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> ghost() const { return ghost_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double at(int i, int j) const { return values_[static_cast<std::size_t>(j) * geometry_.nx + i]; }
  std::size_t size() const { return values_.size(); }

  /// Same geometry and boundary trace, new values.
  GridFunction with_values(std::vector<double> values) const;

 private:
  GridGeometry geometry_;
  std::vector<double> values_;
  std::vector<double> ghost_;
};

/// Per-cell gradient-shaped vectors (dim components per cell, interleaved).
struct DualField {
  GridGeometry geometry;
  std::vector<double> data;

  DualField() = default;
  explicit DualField(GridGeometry g) : geometry(g), data(g.cell_count() * g.dim(), 0.0) {}
  std::size_t cells() const { return geometry.cell_count(); }
  int components() const { return geometry.dim(); }
};

/**
 * Index tables for the forward-difference gradient of a geometry and its
 * exact transpose. Node references are unknown indices (>= 0), ghost indices
 * (encoded as -1 - g), or kZero for a difference that is identically zero.
 */
class Stencil {
 public:
  static constexpr std::int32_t kZero = INT32_MIN;

  explicit Stencil(const GridGeometry& geometry);

  const GridGeometry& geometry() const { return geometry_; }
  std::size_t cells() const { return base_.size(); }
  int dim() const { return geometry_.dim(); }

  /// p = grad_h u including the ghost trace (affine in u).
  void gradient(std::span<const double> u, std::span<const double> ghost, std::span<double> p) const;
  /// p = grad_h u with a zero trace (the linear part).
  void gradient_linear(std::span<const double> u, std::span<double> p) const;
  /// out = grad_h^T z = -div_h z on the unknown nodes.
  void transpose(std::span<const double> z, std::span<double> out) const;
  /// Upper bound on the operator norm of grad_h: sqrt(4 d) / h.
  double norm_bound() const;

  struct Entry {
    std::int32_t row;  // cell * dim + component
    std::int32_t col;  // unknown node
    double value;
  };
  /// Nonzeros of the linear part of grad_h as a (cells * dim) x nodes matrix.
  std::vector<Entry> matrix_entries() const;

 private:
  GridGeometry geometry_;
  std::vector<std::int32_t> base_, xnext_, ynext_;
  // for every node, the cells whose x / y difference uses it with sign - / +
  std::vector<std::int32_t> minus_x_, plus_x_, minus_y_, plus_y_;
};

DualField gradient(const GridFunction& u);
/// div_h z on the unknown nodes; the negative adjoint of grad_h.
std::vector<double> divergence(const DualField& z);

// h^d-weighted norms and pairings
double l1_norm(std::span<const double> u, const GridGeometry& g);
double l1_distance(const GridFunction& a, const GridFunction& b);
double sup_distance(const GridFunction& a, const GridFunction& b);
double l2_norm_sq(std::span<const double> u, const GridGeometry& g);
double inner(std::span<const double> a, std::span<const double> b, const GridGeometry& g);
/// ||grad_h (a - b)||_2^2 with the h^d weight (ghost traces cancel).
double gradient_distance_sq(const GridFunction& a, const GridFunction& b);

// CSV: first line "nx,ny,h,bc", then ny rows of nx values; Dirichlet grids
// end with a "ghost,..." row holding the boundary ring.
void write_csv(std::ostream& os, const GridFunction& u);
GridFunction read_grid_csv(std::istream& is);
void write_csv(std::ostream& os, const DualField& z);
DualField read_dual_csv(std::istream& is);

}  // namespace l1flow
