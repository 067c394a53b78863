#include "fredse/solution.hpp"

#include <cmath>

#include "fredse/error.hpp"

namespace fredse {

Eigen::VectorXd SolutionFn::operator()(std::span<const double> input) const {
  if (static_cast<int>(input.size()) != input_dim()) throw ShapeError("solution input has wrong dimension");
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
  return evaluate(in).col(0);
}

Eigen::MatrixXd FunctionSolution::evaluate(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != in_) throw ShapeError("solution input has wrong dimension");
  Eigen::MatrixXd out(out_, inputs.cols());
  for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
    fn_(std::span<const double>(inputs.col(c).data(), static_cast<std::size_t>(in_)),
        std::span<double>(out.col(c).data(), static_cast<std::size_t>(out_)));
  }
  return out;
}

std::size_t total_degree_count(int dim, int degree) {
  // C(dim + degree, degree) computed incrementally to stay exact.
  std::size_t c = 1;
  for (int k = 1; k <= degree; ++k) c = c * static_cast<std::size_t>(dim + k) / static_cast<std::size_t>(k);
  return c;
}

namespace {

void enumerate_total_degree(int dim, int degree, std::vector<std::vector<int>>& out) {
  // Graded order: all degree-0 terms, then degree 1, ... ; within a degree,
  // lexicographic with the first coordinate's exponent descending.
  std::vector<int> e(static_cast<std::size_t>(dim), 0);
  for (int total = 0; total <= degree; ++total) {
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == dim - 1) {
        e[static_cast<std::size_t>(pos)] = left;
        out.push_back(e);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[static_cast<std::size_t>(pos)] = k;
        rec(pos + 1, left - k);
      }
    };
    rec(0, total);
  }
}

}  // namespace

PolynomialBasis::PolynomialBasis(Family family, int input_dim, int point_dim, int degree,
                                 std::vector<std::vector<int>> exps)
    : family_(family), input_dim_(input_dim), point_dim_(point_dim), degree_(degree), exponents_(std::move(exps)) {}

PolynomialBasis PolynomialBasis::total_degree(int input_dim, int degree) {
  if (input_dim < 1) throw ConfigError("degree", "polynomial basis needs at least one input");
  if (degree < 0) throw ConfigError("degree", "must be >= 0");
  if (total_degree_count(input_dim, degree) > 10000) {
    throw ConfigError("degree", "polynomial basis would exceed 10000 coefficients");
  }
  std::vector<std::vector<int>> exps;
  enumerate_total_degree(input_dim, degree, exps);
  return PolynomialBasis(Family::TotalDegree, input_dim, input_dim, degree, std::move(exps));
}

PolynomialBasis PolynomialBasis::point_poly_covariate_linear(int point_dim, int covariate_dim, int degree) {
  if (point_dim < 1 || covariate_dim < 0) throw ConfigError("degree", "invalid basis dimensions");
  if (degree < 0) throw ConfigError("degree", "must be >= 0");
  std::vector<std::vector<int>> point_exps;
  enumerate_total_degree(point_dim, degree, point_exps);
  if (point_exps.size() * static_cast<std::size_t>(covariate_dim + 1) > 10000) {
    throw ConfigError("degree", "polynomial basis would exceed 10000 coefficients");
  }
  const int dim = point_dim + covariate_dim;
  std::vector<std::vector<int>> exps;
  for (int c = -1; c < covariate_dim; ++c) {
    for (const auto& pe : point_exps) {
      std::vector<int> e(static_cast<std::size_t>(dim), 0);
      std::copy(pe.begin(), pe.end(), e.begin());
      if (c >= 0) e[static_cast<std::size_t>(point_dim + c)] = 1;
      exps.push_back(std::move(e));
    }
  }
  return PolynomialBasis(Family::PointPolyCovariateLinear, dim, point_dim, degree, std::move(exps));
}

Eigen::MatrixXd PolynomialBasis::evaluate(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_dim_) throw ShapeError("polynomial basis input has wrong dimension");
  const auto P = inputs.cols();
  // Power tables per coordinate up to the needed degree.
  int max_pow = std::max(degree_, 1);
  std::vector<Eigen::MatrixXd> powers(static_cast<std::size_t>(input_dim_));
  for (int k = 0; k < input_dim_; ++k) {
    auto& tab = powers[static_cast<std::size_t>(k)];
    tab.resize(max_pow + 1, P);
    tab.row(0).setOnes();
    for (int e = 1; e <= max_pow; ++e) tab.row(e) = tab.row(e - 1).cwiseProduct(inputs.row(k));
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(exponents_.size()), P);
  for (std::size_t m = 0; m < exponents_.size(); ++m) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Ones(P);
    for (int k = 0; k < input_dim_; ++k) {
      const int e = exponents_[m][static_cast<std::size_t>(k)];
      if (e > 0) row = row.cwiseProduct(powers[static_cast<std::size_t>(k)].row(e));
    }
    out.row(static_cast<Eigen::Index>(m)) = row;
  }
  return out;
}

Eigen::MatrixXd PolynomialSolution::evaluate(const Eigen::MatrixXd& inputs) const {
  return c_.coeffs.transpose() * c_.basis.evaluate(inputs);
}

nlohmann::json coefficients_to_json(const PolynomialCoefficients& c) {
  nlohmann::json j;
  j["degree"] = c.degree();
  j["family"] = c.basis.family() == PolynomialBasis::Family::TotalDegree ? "total_degree" : "point_poly_covariate_linear";
  j["input_dim"] = c.basis.input_dim();
  j["point_dim"] = c.basis.point_dim();
  nlohmann::json cols = nlohmann::json::array();
  for (Eigen::Index k = 0; k < c.coeffs.cols(); ++k) {
    std::vector<double> v(c.coeffs.col(k).data(), c.coeffs.col(k).data() + c.coeffs.rows());
    cols.push_back(v);
  }
  j["coeffs"] = cols;
  return j;
}

PolynomialCoefficients coefficients_from_json(const nlohmann::json& j) {
  try {
    const int degree = j.at("degree").get<int>();
    const int input_dim = j.at("input_dim").get<int>();
    const int point_dim = j.value("point_dim", input_dim);
    const std::string family = j.value("family", std::string("total_degree"));
    PolynomialBasis basis = family == "total_degree"
                                ? PolynomialBasis::total_degree(input_dim, degree)
                                : PolynomialBasis::point_poly_covariate_linear(point_dim, input_dim - point_dim, degree);
    const auto cols = j.at("coeffs").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd coeffs(static_cast<Eigen::Index>(basis.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k].size() != basis.size()) throw ShapeError("coefficient block has wrong length");
      for (std::size_t m = 0; m < basis.size(); ++m) coeffs(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = cols[k][m];
    }
    return PolynomialCoefficients{std::move(basis), std::move(coeffs)};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("coeffs", e.what());
  }
}

}  // namespace fredse
