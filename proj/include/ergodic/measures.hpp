#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ergodic {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

// Uniform partition of [lower, upper) into n_cells cells.
struct Grid {
  double lower = 0.0;
  double upper = 1.0;
  Eigen::Index n_cells = 1;

  Grid() = default;
  Grid(double lo, double hi, Eigen::Index n) : lower(lo), upper(hi), n_cells(n) {
    if (!(lo < hi) || n <= 0) throw std::invalid_argument("Grid: need lower < upper and n_cells > 0");
  }

  double spacing() const { return (upper - lower) / static_cast<double>(n_cells); }
  double midpoint(Eigen::Index i) const { return lower + (static_cast<double>(i) + 0.5) * spacing(); }
  double left(Eigen::Index i) const { return lower + static_cast<double>(i) * spacing(); }

  // Containing cell; points outside are clamped to the end cells.
  Eigen::Index cell_of(double x) const {
    auto i = static_cast<Eigen::Index>(std::floor((x - lower) / spacing()));
    return std::clamp<Eigen::Index>(i, 0, n_cells - 1);
  }

  VectorXd midpoints() const {
    VectorXd x(n_cells);
    for (Eigen::Index i = 0; i < n_cells; ++i) x[i] = midpoint(i);
    return x;
  }

  bool operator==(const Grid& o) const {
    return n_cells == o.n_cells && lower == o.lower && upper == o.upper;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }
};

class GridMismatch : public std::invalid_argument {
 public:
  GridMismatch() : std::invalid_argument("grid mismatch") {}
};

// Bounded function sampled at cell midpoints, plus a separate sample at the left endpoint.
template <typename Scalar = double>
struct GridFunction {
  Grid grid;
  Vec<Scalar> values;
  Scalar boundary0 = Scalar(0);

  GridFunction() = default;
  GridFunction(const Grid& g, Vec<Scalar> v) : grid(g), values(std::move(v)) {
    if (values.size() != g.n_cells) throw std::invalid_argument("GridFunction: size mismatch");
    boundary0 = values.size() ? values[0] : Scalar(0);
  }
  GridFunction(const Grid& g, Vec<Scalar> v, Scalar b0) : GridFunction(g, std::move(v)) { boundary0 = b0; }

  static GridFunction constant(const Grid& g, Scalar c) {
    return GridFunction(g, Vec<Scalar>::Constant(g.n_cells, c), c);
  }

  template <typename F>
  static GridFunction from(const Grid& g, F&& f) {
    Vec<Scalar> v(g.n_cells);
    for (Eigen::Index i = 0; i < g.n_cells; ++i) v[i] = f(g.midpoint(i));
    return GridFunction(g, std::move(v), f(g.lower));
  }

  // Nearest-sample rule; the left endpoint itself reads boundary0.
  Scalar at(double x) const { return x == grid.lower ? boundary0 : values[grid.cell_of(x)]; }

  Scalar sup_norm() const {
    Scalar s = std::abs(boundary0);
    if (values.size()) s = std::max<Scalar>(s, values.cwiseAbs().maxCoeff());
    return s;
  }
};

template <typename Scalar = double>
struct Atom {
  double location;
  Scalar weight;
};

// Signed measure: cell masses (density × spacing) plus point masses.
template <typename Scalar = double>
struct HybridMeasure {
  Grid grid;
  Vec<Scalar> density_weights;
  std::vector<Atom<Scalar>> atoms;

  HybridMeasure() = default;
  explicit HybridMeasure(const Grid& g) : grid(g), density_weights(Vec<Scalar>::Zero(g.n_cells)) {}
  HybridMeasure(const Grid& g, Vec<Scalar> w) : grid(g), density_weights(std::move(w)) {
    if (density_weights.size() != g.n_cells) throw std::invalid_argument("HybridMeasure: size mismatch");
  }

  static HybridMeasure dirac(const Grid& g, double x, Scalar w = Scalar(1)) {
    if (x < g.lower || x >= g.upper) throw std::invalid_argument("HybridMeasure: atom outside grid");
    HybridMeasure m(g);
    m.atoms.push_back({x, w});
    return m;
  }

  static HybridMeasure uniform(const Grid& g) {
    return HybridMeasure(g, Vec<Scalar>::Constant(g.n_cells, Scalar(1) / Scalar(g.n_cells)));
  }

  // Cell masses from a density evaluated at midpoints.
  template <typename F>
  static HybridMeasure from_density(const Grid& g, F&& density) {
    Vec<Scalar> w(g.n_cells);
    for (Eigen::Index i = 0; i < g.n_cells; ++i) w[i] = density(g.midpoint(i)) * g.spacing();
    return HybridMeasure(g, std::move(w));
  }

  void add_atom(double x, Scalar w) {
    if (x < grid.lower || x >= grid.upper) throw std::invalid_argument("HybridMeasure: atom outside grid");
    atoms.push_back({x, w});
  }

  Scalar total_mass() const {
    Scalar s = density_weights.sum();
    for (const auto& a : atoms) s += a.weight;
    return s;
  }

  // Atoms pushed into their containing cell.
  Vec<Scalar> projected() const {
    Vec<Scalar> w = density_weights;
    for (const auto& a : atoms) w[grid.cell_of(a.location)] += a.weight;
    return w;
  }

  HybridMeasure& operator+=(const HybridMeasure& o) {
    if (grid != o.grid) throw GridMismatch();
    density_weights += o.density_weights;
    atoms.insert(atoms.end(), o.atoms.begin(), o.atoms.end());
    return *this;
  }
  HybridMeasure& operator*=(Scalar c) {
    density_weights *= c;
    for (auto& a : atoms) a.weight *= c;
    return *this;
  }
  friend HybridMeasure operator+(HybridMeasure a, const HybridMeasure& b) { return a += b; }
  friend HybridMeasure operator-(HybridMeasure a, HybridMeasure b) { return a += (b *= Scalar(-1)); }
  friend HybridMeasure operator*(Scalar c, HybridMeasure a) { return a *= c; }
};

namespace detail {
template <typename Scalar>
std::vector<Atom<Scalar>> merged_atoms(const std::vector<Atom<Scalar>>& atoms) {
  std::map<double, Scalar> acc;
  for (const auto& a : atoms) acc[a.location] += a.weight;
  std::vector<Atom<Scalar>> out;
  out.reserve(acc.size());
  for (const auto& [x, w] : acc) out.push_back({x, w});
  return out;
}
}  // namespace detail

// Atoms sharing a location are merged; atoms are never cancelled against the density part.
template <typename Scalar>
Scalar tv_norm(const HybridMeasure<Scalar>& mu) {
  Scalar s = mu.density_weights.cwiseAbs().sum();
  for (const auto& a : detail::merged_atoms(mu.atoms)) s += std::abs(a.weight);
  return s;
}

template <typename Scalar>
Scalar pair(const HybridMeasure<Scalar>& mu, const GridFunction<Scalar>& f) {
  if (mu.grid != f.grid) throw GridMismatch();
  Scalar s = mu.density_weights.dot(f.values);
  for (const auto& a : mu.atoms) s += a.weight * f.at(a.location);
  return s;
}

template <typename Scalar>
std::pair<HybridMeasure<Scalar>, HybridMeasure<Scalar>> jordan(const HybridMeasure<Scalar>& mu) {
  HybridMeasure<Scalar> plus(mu.grid, mu.density_weights.cwiseMax(Scalar(0)));
  HybridMeasure<Scalar> minus(mu.grid, (-mu.density_weights).cwiseMax(Scalar(0)));
  for (const auto& a : detail::merged_atoms(mu.atoms)) {
    if (a.weight > 0) plus.atoms.push_back(a);
    if (a.weight < 0) minus.atoms.push_back({a.location, -a.weight});
  }
  return {std::move(plus), std::move(minus)};
}

template <typename Scalar>
bool is_probability(const HybridMeasure<Scalar>& mu, Scalar tol = Scalar(1e-10)) {
  if ((mu.density_weights.array() < Scalar(0)).any()) return false;
  for (const auto& a : mu.atoms)
    if (a.weight < 0) return false;
  return std::abs(mu.total_mass() - Scalar(1)) <= tol;
}

// TV distance between plain cell-weight vectors (no atoms).
template <typename A, typename B>
typename A::Scalar tv_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return (a - b).cwiseAbs().sum();
}

// CSV: header "# grid lower upper n", then "location,weight" rows (cells first, then atoms).
template <typename Scalar>
std::string to_csv(const HybridMeasure<Scalar>& mu) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "# grid %.17g %.17g %ld\nlocation,weight\n", mu.grid.lower, mu.grid.upper,
                static_cast<long>(mu.grid.n_cells));
  out += buf;
  for (Eigen::Index i = 0; i < mu.grid.n_cells; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", mu.grid.midpoint(i), static_cast<double>(mu.density_weights[i]));
    out += buf;
  }
  for (const auto& a : mu.atoms) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", a.location, static_cast<double>(a.weight));
    out += buf;
  }
  return out;
}

template <typename Scalar>
std::string to_csv(const GridFunction<Scalar>& f) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "# grid %.17g %.17g %ld\nlocation,value\n", f.grid.lower, f.grid.upper,
                static_cast<long>(f.grid.n_cells));
  out += buf;
  std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", f.grid.lower, static_cast<double>(f.boundary0));
  out += buf;
  for (Eigen::Index i = 0; i < f.grid.n_cells; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", f.grid.midpoint(i), static_cast<double>(f.values[i]));
    out += buf;
  }
  return out;
}

}  // namespace ergodic
