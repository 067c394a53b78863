#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fredse/nn.hpp"
#include "json.hpp"

namespace fredse {

/*
 * An evaluable approximation b(point, covariates) -> R^q. Inputs are laid
 * out column-wise as [point coordinates..., covariates...].
 */
class SolutionFn {
 public:
  virtual ~SolutionFn() = default;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  /// inputs: input_dim x P; returns output_dim x P.
  virtual Eigen::MatrixXd evaluate(const Eigen::MatrixXd& inputs) const = 0;

  Eigen::VectorXd operator()(std::span<const double> input) const;
};

class NeuralSolution final : public SolutionFn {
 public:
  explicit NeuralSolution(NetworkWeights w) : w_(std::move(w)) {}
  int input_dim() const override { return w_.arch().input_dim(); }
  int output_dim() const override { return w_.arch().output_dim(); }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& inputs) const override { return forward_batch(w_, inputs); }
  const NetworkWeights& weights() const noexcept { return w_; }

 private:
  NetworkWeights w_;
};

/// Wraps a closed-form function; used for analytic reference solutions.
class FunctionSolution final : public SolutionFn {
 public:
  using Fn = std::function<void(std::span<const double> input, std::span<double> out)>;
  FunctionSolution(int input_dim, int output_dim, Fn fn) : in_(input_dim), out_(output_dim), fn_(std::move(fn)) {}
  int input_dim() const override { return in_; }
  int output_dim() const override { return out_; }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& inputs) const override;

 private:
  int in_;
  int out_;
  Fn fn_;
};

/*
 * Monomial basis given by exponent vectors over the input coordinates.
 * Two families are provided: all monomials of total degree <= d, and
 * "point polynomial times covariate-linear" (degree <= d in the point
 * coordinates, each term optionally multiplied by one covariate).
 */
class PolynomialBasis {
 public:
  enum class Family { TotalDegree, PointPolyCovariateLinear };

  static PolynomialBasis total_degree(int input_dim, int degree);
  static PolynomialBasis point_poly_covariate_linear(int point_dim, int covariate_dim, int degree);

  Family family() const noexcept { return family_; }
  int input_dim() const noexcept { return input_dim_; }
  int point_dim() const noexcept { return point_dim_; }
  int degree() const noexcept { return degree_; }
  std::size_t size() const noexcept { return exponents_.size(); }
  const std::vector<std::vector<int>>& exponents() const noexcept { return exponents_; }

  /// size() x P matrix of basis values.
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& inputs) const;

 private:
  PolynomialBasis(Family family, int input_dim, int point_dim, int degree, std::vector<std::vector<int>> exps);

  Family family_;
  int input_dim_;
  int point_dim_;
  int degree_;
  std::vector<std::vector<int>> exponents_;
};

/// Number of monomials of total degree <= d in `dim` variables: C(dim + d, d).
std::size_t total_degree_count(int dim, int degree);

/// One coefficient column per output component.
struct PolynomialCoefficients {
  PolynomialBasis basis;
  Eigen::MatrixXd coeffs;  // basis.size() x q
  bool rank_deficient = false;

  int degree() const noexcept { return basis.degree(); }
};

class PolynomialSolution final : public SolutionFn {
 public:
  explicit PolynomialSolution(PolynomialCoefficients c) : c_(std::move(c)) {}
  int input_dim() const override { return c_.basis.input_dim(); }
  int output_dim() const override { return static_cast<int>(c_.coeffs.cols()); }
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& inputs) const override;
  const PolynomialCoefficients& coefficients() const noexcept { return c_; }

 private:
  PolynomialCoefficients c_;
};

/// {"degree": d, "family": ..., "input_dim": ..., "point_dim": ..., "coeffs": [[...], ...]}
nlohmann::json coefficients_to_json(const PolynomialCoefficients& c);
PolynomialCoefficients coefficients_from_json(const nlohmann::json& j);

}  // namespace fredse
