#include "fredse/quadrature.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "fredse/error.hpp"
#include "fredse/rng.hpp"
#include "fredse/util/format.hpp"

namespace fredse {

Domain::Domain(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)), volume_(1.0) {
  if (lower_.empty() || lower_.size() != upper_.size()) throw ConfigError("domain", "bounds must be non-empty and of equal length");
  for (std::size_t k = 0; k < lower_.size(); ++k) {
    if (!std::isfinite(lower_[k]) || !std::isfinite(upper_[k]) || !(lower_[k] < upper_[k])) {
      throw ConfigError("domain", "coordinate " + std::to_string(k) + " needs finite lower < upper");
    }
    volume_ *= upper_[k] - lower_[k];
  }
  if (!std::isfinite(volume_) || !(volume_ > 0.0)) throw ConfigError("domain", "volume must be positive and finite");
}

bool Domain::contains(std::span<const double> point) const {
  if (point.size() != lower_.size()) return false;
  for (std::size_t k = 0; k < point.size(); ++k) {
    if (point[k] < lower_[k] || point[k] > upper_[k]) return false;
  }
  return true;
}

namespace {

Eigen::MatrixXd draw_points(const Domain& d, int count, Rng& rng) {
  Eigen::MatrixXd pts(d.dimension(), count);
  for (int c = 0; c < count; ++c) {
    for (int k = 0; k < d.dimension(); ++k) pts(k, c) = rng.uniform(d.lower()[k], d.upper()[k]);
  }
  return pts;
}

}  // namespace

QuadratureGrid sample_grid(const Domain& t_domain, const Domain& s_domain, int j1, int j2, std::uint64_t seed) {
  if (j1 < 1) throw ConfigError("j1", "must be >= 1");
  if (j2 < 1) throw ConfigError("j2", "must be >= 1");
  Rng rng(seed);
  Eigen::MatrixXd outer = draw_points(t_domain, j1, rng);
  Eigen::MatrixXd inner = draw_points(s_domain, j2, rng);
  return QuadratureGrid{t_domain, s_domain, std::move(outer), std::move(inner), s_domain.volume()};
}

namespace {

Eigen::MatrixXd gauss_nodes(const Domain& d, int count, const char* key) {
  if (d.dimension() != 1) throw ConfigError(key, "Gauss nodes need a one-dimensional domain");
  if (count < 2 || count % 2 != 0) throw ConfigError(key, "Gauss nodes need an even count >= 2");
  const int panels = count / 2;
  const double lo = d.lower()[0];
  const double width = (d.upper()[0] - lo) / panels;
  const double off = 0.5 / std::sqrt(3.0);
  Eigen::MatrixXd pts(1, count);
  for (int k = 0; k < panels; ++k) {
    const double mid = lo + (k + 0.5) * width;
    pts(0, 2 * k) = mid - off * width;
    pts(0, 2 * k + 1) = mid + off * width;
  }
  return pts;
}

}  // namespace

QuadratureGrid gauss_grid(const Domain& t_domain, const Domain& s_domain, int j1, int j2) {
  return QuadratureGrid{t_domain, s_domain, gauss_nodes(t_domain, j1, "j1"), gauss_nodes(s_domain, j2, "j2"),
                        s_domain.volume()};
}

double mc_integral(const PointFunction& f, const Eigen::MatrixXd& points, double volume) {
  if (points.cols() == 0) throw ConfigError("points", "Monte Carlo node set is empty");
  double sum = 0.0;
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    const double v = f(std::span<const double>(points.col(c).data(), static_cast<std::size_t>(points.rows())));
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "integrand is not finite at point (";
      for (Eigen::Index k = 0; k < points.rows(); ++k) msg << (k ? ", " : "") << points(k, c);
      msg << ")";
      throw NumericError(msg.str());
    }
    sum += v;
  }
  return volume * (sum / static_cast<double>(points.cols()));
}

void write_grid_csv(std::ostream& os, const QuadratureGrid& grid) {
  const auto dims = std::max(grid.outer_points.rows(), grid.inner_points.rows());
  os << "kind,index";
  for (Eigen::Index k = 0; k < dims; ++k) os << ",x" << (k + 1);
  os << '\n';
  auto emit = [&](const char* kind, const Eigen::MatrixXd& pts) {
    for (Eigen::Index c = 0; c < pts.cols(); ++c) {
      os << kind << ',' << c;
      for (Eigen::Index k = 0; k < dims; ++k) os << ',' << (k < pts.rows() ? format_double(pts(k, c)) : std::string("NA"));
      os << '\n';
    }
  };
  emit("t", grid.outer_points);
  emit("s", grid.inner_points);
}

}  // namespace fredse
