#pragma once

#include <optional>
#include <utility>

#include <Eigen/Dense>

namespace otmpc {

/// Probability vector: nonnegative entries summing to one (1e-9 absolute).
class Simplex {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit Simplex(Eigen::VectorXd weights);

  static Simplex uniform(Eigen::Index n);

  /// Max-shifted softmax of `scores`: w_j = exp(s_j - max s) / sum_k exp(s_k - max s).
  static Simplex softmax(const Eigen::VectorXd& scores);

  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  Eigen::Index size() const noexcept { return weights_.size(); }
  double operator[](Eigen::Index i) const { return weights_[i]; }

 private:
  Eigen::VectorXd weights_;
};

/// N x M transport cost; rows index particles, columns index proposals.
class CostMatrix {
 public:
  explicit CostMatrix(Eigen::MatrixXd entries);

  const Eigen::MatrixXd& entries() const noexcept { return entries_; }
  Eigen::Index rows() const noexcept { return entries_.rows(); }
  Eigen::Index cols() const noexcept { return entries_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }

  double max() const { return entries_.maxCoeff(); }
  /// Median over all entries (mean of the two middle values for even counts).
  double median() const;

 private:
  Eigen::MatrixXd entries_;
};

/// Transport costs between points stored as matrix rows.
enum class Metric {
  kHalfSquaredEuclidean,   // 0.5 ||z - y||^2
  kWeightedQuadratic,      // (z - y)^T W (z - y)
  kRegularizedQuadratic,   // ||z - y||^2 + lambda ||z||^2
  kCircular,               // sum_d 2 (1 - cos(z_d - y_d))
  kKullbackLeibler,        // sum_d z_d log(z_d / y_d) - z_d + y_d
};

struct MetricParams {
  Eigen::MatrixXd weight_matrix;  // W for kWeightedQuadratic (SPD, d x d)
  double lambda = 0.0;            // for kRegularizedQuadratic
};

/// C_ij = c(particles.row(i), proposals.row(j)).
/// Throws DomainError on dimension mismatch or points outside the metric's domain.
CostMatrix build_cost_matrix(const Eigen::MatrixXd& particles,
                             const Eigen::MatrixXd& proposals,
                             Metric metric = Metric::kHalfSquaredEuclidean,
                             const MetricParams& params = {});

/// Dual scalings in log form: Gamma_ij = exp(log_u_i - C_ij / eps + log_v_j).
struct Scalings {
  Eigen::VectorXd log_u;
  Eigen::VectorXd log_v;
};

struct SinkhornConfig {
  double epsilon = 1.0;
  double tolerance = 1e-6;     // L1 row-marginal error that ends the iteration
  int max_iterations = 500;
  std::optional<Scalings> warm_start;
  /// Fall back to log-sum-exp updates when exp(-C/eps) underflows. When
  /// disabled, underflow raises SolverFailure instead.
  bool allow_log_domain = true;

  void validate(Eigen::Index rows, Eigen::Index cols) const;
};

struct Coupling {
  Eigen::MatrixXd plan;
  Scalings scalings;
  double epsilon = 0.0;
  double row_marginal_error = 0.0;
  double col_marginal_error = 0.0;
  int iterations_used = 0;
  bool converged = false;
  bool log_domain = false;

  Eigen::Index rows() const noexcept { return plan.rows(); }
  Eigen::Index cols() const noexcept { return plan.cols(); }
};

/// Entropic OT by alternating scaling (Sinkhorn). Exits once the L1 row
/// marginal error drops below cfg.tolerance; hitting max_iterations returns a
/// best-effort coupling with `converged == false`.
Coupling sinkhorn(const CostMatrix& cost, const Simplex& q, const Simplex& p,
                  const SinkhornConfig& cfg);

/// H(Gamma) = -sum Gamma_ij (log Gamma_ij - 1), zero entries contribute nothing.
double entropy(const Eigen::MatrixXd& plan);

/// <C, Gamma> - epsilon * H(Gamma).
double eot_objective(const CostMatrix& cost, const Eigen::MatrixXd& plan, double epsilon);

/// (||Gamma 1 - q||_1, ||Gamma^T 1 - p||_1).
std::pair<double, double> marginal_errors(const Eigen::MatrixXd& plan, const Simplex& q,
                                          const Simplex& p);

}  // namespace otmpc
