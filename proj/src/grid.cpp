#include "l1flow/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "l1flow/common.hpp"

namespace l1flow {

const char* to_string(Boundary bc) { return bc == Boundary::neumann ? "neumann" : "dirichlet"; }

Boundary parse_boundary(const std::string& name) {
  if (name == "neumann") return Boundary::neumann;
  if (name == "dirichlet") return Boundary::dirichlet;
  fail(ErrorCode::invalid_argument, "unknown boundary condition '" + name + "'");
}

std::size_t GridGeometry::cell_count() const {
  if (bc == Boundary::neumann) return node_count();
  if (dim() == 1) return static_cast<std::size_t>(nx) + 1;
  return static_cast<std::size_t>(nx + 1) * static_cast<std::size_t>(ny + 1);
}

std::size_t GridGeometry::ghost_count() const {
  if (bc == Boundary::neumann) return 0;
  if (dim() == 1) return 2;
  return 2 * static_cast<std::size_t>(nx + 2) + 2 * static_cast<std::size_t>(ny);
}

double GridGeometry::coordinate(int i) const {
  return bc == Boundary::neumann ? (i + 0.5) * h : (i + 1) * h;
}

std::size_t GridGeometry::ghost_index(int i, int j) const {
  if (dim() == 1) return i < 0 ? 0 : 1;
  const auto w = static_cast<std::size_t>(nx + 2);
  if (j < 0) return static_cast<std::size_t>(i + 1);
  if (j >= ny) return w + static_cast<std::size_t>(i + 1);
  if (i < 0) return 2 * w + static_cast<std::size_t>(j);
  return 2 * w + static_cast<std::size_t>(ny + j);
}

namespace {

void validate_geometry(const GridGeometry& g) {
  require(g.nx >= 1 && g.ny >= 1, "grid dimensions must be positive");
  require(std::isfinite(g.h) && g.h > 0.0, "grid spacing must be positive and finite");
  require(g.node_count() < static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max() / 4),
          "grid too large");
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) require(std::isfinite(v), std::string(what) + " must be finite");
}

}  // namespace

GridFunction::GridFunction(GridGeometry geometry, std::vector<double> values, std::vector<double> ghost)
    : geometry_(geometry), values_(std::move(values)), ghost_(std::move(ghost)) {
  validate_geometry(geometry_);
  require(values_.size() == geometry_.node_count(), "grid function has the wrong number of values");
  if (geometry_.bc == Boundary::dirichlet && ghost_.empty()) ghost_.assign(geometry_.ghost_count(), 0.0);
  require(ghost_.size() == geometry_.ghost_count(), "ghost layer has the wrong size");
  require_finite(values_, "grid values");
  require_finite(ghost_, "ghost values");
}

GridFunction GridFunction::constant(GridGeometry geometry, double value, std::vector<double> ghost) {
  return GridFunction(geometry, std::vector<double>(geometry.node_count(), value), std::move(ghost));
}

GridFunction GridFunction::sample(GridGeometry g, const std::function<double(double, double)>& f) {
  validate_geometry(g);
  std::vector<double> values(g.node_count());
  for (int j = 0; j < g.ny; ++j) {
    const double y = g.dim() == 1 ? 0.0 : g.coordinate(j);
    for (int i = 0; i < g.nx; ++i) values[static_cast<std::size_t>(j) * g.nx + i] = f(g.coordinate(i), y);
  }
  std::vector<double> ghost(g.ghost_count());
  if (g.bc == Boundary::dirichlet) {
    if (g.dim() == 1) {
      ghost[0] = f(g.coordinate(-1), 0.0);
      ghost[1] = f(g.coordinate(g.nx), 0.0);
    } else {
      for (int i = -1; i <= g.nx; ++i) {
        ghost[g.ghost_index(i, -1)] = f(g.coordinate(i), g.coordinate(-1));
        ghost[g.ghost_index(i, g.ny)] = f(g.coordinate(i), g.coordinate(g.ny));
      }
      for (int j = 0; j < g.ny; ++j) {
        ghost[g.ghost_index(-1, j)] = f(g.coordinate(-1), g.coordinate(j));
        ghost[g.ghost_index(g.nx, j)] = f(g.coordinate(g.nx), g.coordinate(j));
      }
    }
  }
  return GridFunction(g, std::move(values), std::move(ghost));
}

GridFunction GridFunction::with_values(std::vector<double> values) const {
  return GridFunction(geometry_, std::move(values), ghost_);
}

Stencil::Stencil(const GridGeometry& g) : geometry_(g) {
  validate_geometry(g);
  const bool dir = g.bc == Boundary::dirichlet;
  const bool two_d = g.dim() == 2;
  const int lo = dir ? -1 : 0;
  const int jlo = two_d ? lo : 0;
  const int jhi = two_d ? g.ny : 1;  // exclusive upper bound on base rows

  auto ref = [&](int i, int j) -> std::int32_t {
    const bool inside = i >= 0 && i < g.nx && (!two_d || (j >= 0 && j < g.ny));
    if (inside) return static_cast<std::int32_t>(static_cast<std::size_t>(two_d ? j : 0) * g.nx + i);
    if (!dir) return kZero;
    return -1 - static_cast<std::int32_t>(g.ghost_index(i, j));
  };

  const std::size_t cells = g.cell_count();
  base_.reserve(cells);
  xnext_.reserve(cells);
  if (two_d) ynext_.reserve(cells);
  const std::size_t nodes = g.node_count();
  minus_x_.assign(nodes, -1);
  plus_x_.assign(nodes, -1);
  if (two_d) {
    minus_y_.assign(nodes, -1);
    plus_y_.assign(nodes, -1);
  }

  for (int j = jlo; j < jhi; ++j) {
    for (int i = lo; i < g.nx; ++i) {
      const auto c = static_cast<std::int32_t>(base_.size());
      const std::int32_t b = ref(i, j);
      const std::int32_t xn = ref(i + 1, j);
      base_.push_back(b);
      xnext_.push_back(xn);
      if (xn != kZero) {
        if (b >= 0) minus_x_[b] = c;
        if (xn >= 0) plus_x_[xn] = c;
      }
      if (two_d) {
        const std::int32_t yn = ref(i, j + 1);
        ynext_.push_back(yn);
        if (yn != kZero) {
          if (b >= 0) minus_y_[b] = c;
          if (yn >= 0) plus_y_[yn] = c;
        }
      }
    }
  }
  if (base_.size() != cells) fail(ErrorCode::internal, "stencil cell count mismatch");
}

namespace {

inline double node_value(std::int32_t r, std::span<const double> u, std::span<const double> ghost) {
  if (r >= 0) return u[static_cast<std::size_t>(r)];
  if (r == Stencil::kZero || ghost.empty()) return 0.0;
  return ghost[static_cast<std::size_t>(-1 - r)];
}

}  // namespace

void Stencil::gradient(std::span<const double> u, std::span<const double> ghost, std::span<double> p) const {
  const double inv_h = 1.0 / geometry_.h;
  const int d = dim();
  const std::size_t n = base_.size();
  parallel_for(n, [&](std::size_t c) {
    const double ub = node_value(base_[c], u, ghost);
    p[c * d] = xnext_[c] == kZero ? 0.0 : (node_value(xnext_[c], u, ghost) - ub) * inv_h;
    if (d == 2) p[c * 2 + 1] = ynext_[c] == kZero ? 0.0 : (node_value(ynext_[c], u, ghost) - ub) * inv_h;
  });
}

void Stencil::gradient_linear(std::span<const double> u, std::span<double> p) const { gradient(u, {}, p); }

void Stencil::transpose(std::span<const double> z, std::span<double> out) const {
  const double inv_h = 1.0 / geometry_.h;
  const int d = dim();
  parallel_for(out.size(), [&](std::size_t k) {
    double s = 0.0;
    if (plus_x_[k] >= 0) s += z[static_cast<std::size_t>(plus_x_[k]) * d];
    if (minus_x_[k] >= 0) s -= z[static_cast<std::size_t>(minus_x_[k]) * d];
    if (d == 2) {
      if (plus_y_[k] >= 0) s += z[static_cast<std::size_t>(plus_y_[k]) * 2 + 1];
      if (minus_y_[k] >= 0) s -= z[static_cast<std::size_t>(minus_y_[k]) * 2 + 1];
    }
    out[k] = s * inv_h;
  });
}

std::vector<Stencil::Entry> Stencil::matrix_entries() const {
  std::vector<Entry> out;
  const int d = dim();
  const double inv_h = 1.0 / geometry_.h;
  auto add_difference = [&](std::size_t c, int k, std::int32_t next) {
    if (next == kZero) return;
    const auto row = static_cast<std::int32_t>(c * d + k);
    if (base_[c] >= 0) out.push_back({row, base_[c], -inv_h});
    if (next >= 0) out.push_back({row, next, inv_h});
  };
  for (std::size_t c = 0; c < base_.size(); ++c) {
    add_difference(c, 0, xnext_[c]);
    if (d == 2) add_difference(c, 1, ynext_[c]);
  }
  return out;
}

double Stencil::norm_bound() const { return std::sqrt(4.0 * dim()) / geometry_.h; }

DualField gradient(const GridFunction& u) {
  DualField z(u.geometry());
  Stencil(u.geometry()).gradient(u.values(), u.ghost(), z.data);
  return z;
}

std::vector<double> divergence(const DualField& z) {
  std::vector<double> out(z.geometry.node_count());
  Stencil(z.geometry).transpose(z.data, out);
  for (double& v : out) v = -v;
  return out;
}

double l1_norm(std::span<const double> u, const GridGeometry& g) {
  std::vector<double> a(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) a[i] = std::abs(u[i]);
  return g.volume_element() * tree_sum(a);
}

namespace {

void require_same_geometry(const GridFunction& a, const GridFunction& b) {
  require(a.geometry() == b.geometry(), "grid functions have different geometry");
}

}  // namespace

double l1_distance(const GridFunction& a, const GridFunction& b) {
  require_same_geometry(a, b);
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(a[i] - b[i]);
  return a.geometry().volume_element() * tree_sum(d);
}

double sup_distance(const GridFunction& a, const GridFunction& b) {
  require_same_geometry(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double l2_norm_sq(std::span<const double> u, const GridGeometry& g) { return inner(u, u, g); }

double inner(std::span<const double> a, std::span<const double> b, const GridGeometry& g) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = a[i] * b[i];
  return g.volume_element() * tree_sum(t);
}

double gradient_distance_sq(const GridFunction& a, const GridFunction& b) {
  require_same_geometry(a, b);
  const GridGeometry& g = a.geometry();
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  std::vector<double> p(g.cell_count() * g.dim());
  Stencil(g).gradient_linear(d, p);
  return l2_norm_sq(p, g);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    fail(ErrorCode::io_error, "malformed number '" + s + "' in CSV");
  return v;
}

int parse_int(const std::string& s) {
  const double v = parse_double(s);
  if (v != std::floor(v) || v < 1 || v > 1e8) fail(ErrorCode::io_error, "malformed grid size '" + s + "'");
  return static_cast<int>(v);
}

bool next_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

GridGeometry read_header(std::istream& is) {
  std::string line;
  if (!next_line(is, line)) fail(ErrorCode::io_error, "empty grid CSV");
  auto cells = split_csv(line);
  if (cells.size() == 4 && cells[0] == "nx") {
    if (!next_line(is, line)) fail(ErrorCode::io_error, "grid CSV header without values");
    cells = split_csv(line);
  }
  if (cells.size() != 4) fail(ErrorCode::io_error, "grid CSV header must be nx,ny,h,bc");
  GridGeometry g;
  g.nx = parse_int(cells[0]);
  g.ny = parse_int(cells[1]);
  g.h = parse_double(cells[2]);
  try {
    g.bc = parse_boundary(cells[3]);
  } catch (const Error& e) {
    fail(ErrorCode::io_error, e.what());
  }
  if (!(g.h > 0.0)) fail(ErrorCode::io_error, "grid spacing must be positive");
  return g;
}

void write_header(std::ostream& os, const GridGeometry& g) {
  os << "nx,ny,h,bc\n" << g.nx << ',' << g.ny << ',' << g.h << ',' << to_string(g.bc) << '\n';
}

struct PrecisionGuard {
  std::ostream& os;
  std::streamsize old;
  explicit PrecisionGuard(std::ostream& s) : os(s), old(s.precision(std::numeric_limits<double>::max_digits10)) {}
  ~PrecisionGuard() { os.precision(old); }
};

}  // namespace

void write_csv(std::ostream& os, const GridFunction& u) {
  PrecisionGuard guard(os);
  const GridGeometry& g = u.geometry();
  write_header(os, g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) os << (i ? "," : "") << u.at(i, j);
    os << '\n';
  }
  if (g.bc == Boundary::dirichlet) {
    os << "ghost";
    for (double v : u.ghost()) os << ',' << v;
    os << '\n';
  }
}

GridFunction read_grid_csv(std::istream& is) {
  const GridGeometry g = read_header(is);
  std::vector<double> values;
  values.reserve(g.node_count());
  std::string line;
  for (int j = 0; j < g.ny; ++j) {
    if (!next_line(is, line)) fail(ErrorCode::io_error, "grid CSV has too few rows");
    const auto cells = split_csv(line);
    if (cells.size() != static_cast<std::size_t>(g.nx)) fail(ErrorCode::io_error, "grid CSV row has the wrong length");
    for (const auto& c : cells) values.push_back(parse_double(c));
  }
  std::vector<double> ghost;
  if (g.bc == Boundary::dirichlet) {
    if (!next_line(is, line)) fail(ErrorCode::io_error, "Dirichlet grid CSV is missing its ghost row");
    const auto cells = split_csv(line);
    if (cells.empty() || cells[0] != "ghost" || cells.size() != g.ghost_count() + 1)
      fail(ErrorCode::io_error, "malformed ghost row");
    for (std::size_t k = 1; k < cells.size(); ++k) ghost.push_back(parse_double(cells[k]));
  }
  return GridFunction(g, std::move(values), std::move(ghost));
}

void write_csv(std::ostream& os, const DualField& z) {
  PrecisionGuard guard(os);
  write_header(os, z.geometry);
  const int d = z.components();
  for (std::size_t c = 0; c < z.cells(); ++c) {
    os << z.data[c * d] << ',' << (d == 2 ? z.data[c * 2 + 1] : 0.0) << '\n';
  }
}

DualField read_dual_csv(std::istream& is) {
  DualField z(read_header(is));
  const int d = z.components();
  std::string line;
  for (std::size_t c = 0; c < z.cells(); ++c) {
    if (!next_line(is, line)) fail(ErrorCode::io_error, "dual CSV has too few rows");
    const auto cells = split_csv(line);
    if (cells.size() != 2) fail(ErrorCode::io_error, "dual CSV rows must have two columns");
    z.data[c * d] = parse_double(cells[0]);
    if (d == 2) z.data[c * 2 + 1] = parse_double(cells[1]);
  }
  return z;
}

}  // namespace l1flow
