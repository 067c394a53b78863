#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fredse {

/// Axis-aligned box; lower < upper in every coordinate.
class Domain {
 public:
  Domain(std::vector<double> lower, std::vector<double> upper);
  /// One-dimensional interval [lo, hi].
  static Domain interval(double lo, double hi) { return Domain({lo}, {hi}); }

  int dimension() const noexcept { return static_cast<int>(lower_.size()); }
  const std::vector<double>& lower() const noexcept { return lower_; }
  const std::vector<double>& upper() const noexcept { return upper_; }
  double volume() const noexcept { return volume_; }
  bool contains(std::span<const double> point) const;

  bool operator==(const Domain&) const = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
  double volume_;
};

/*
 * Monte Carlo nodes for the nested integrals of the Fredholm loss.
 * Points are stored column-wise (dimension x count). The outer measure is
 * the uniform probability measure on the t-domain, so each outer node
 * carries weight 1/J1; inner nodes carry weight inner_volume/J2.
 */
struct QuadratureGrid {
  Domain t_domain;
  Domain s_domain;
  Eigen::MatrixXd outer_points;
  Eigen::MatrixXd inner_points;
  double inner_volume;

  Eigen::Index j1() const noexcept { return outer_points.cols(); }
  Eigen::Index j2() const noexcept { return inner_points.cols(); }
  double inner_weight() const noexcept { return inner_volume / static_cast<double>(j2()); }
  double outer_weight() const noexcept { return 1.0 / static_cast<double>(j1()); }
};

/// i.i.d. uniform nodes; outer points are drawn first, then inner points,
/// coordinate by coordinate, from one stream seeded with `seed`.
QuadratureGrid sample_grid(const Domain& t_domain, const Domain& s_domain, int j1, int j2, std::uint64_t seed);

/*
 * Deterministic equal-weight nodes for one-dimensional domains: each domain
 * is cut into count/2 panels carrying the two Gauss-Legendre points of the
 * panel. Every node keeps weight volume/count, and integrals of cubics are
 * exact. Used for analytic fixtures whose reference solutions must satisfy
 * the discretised equation to rounding error. Counts must be even.
 */
QuadratureGrid gauss_grid(const Domain& t_domain, const Domain& s_domain, int j1, int j2);

using PointFunction = std::function<double(std::span<const double>)>;

/// volume * mean of f over the columns of `points`.
double mc_integral(const PointFunction& f, const Eigen::MatrixXd& points, double volume);

/// Debug dump: columns kind,index,x1..xd (kind = t or s).
void write_grid_csv(std::ostream& os, const QuadratureGrid& grid);

}  // namespace fredse
