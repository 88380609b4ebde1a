#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "otmpc/transport.hpp"

namespace otmpc {

/// Row-normalized coupling: w_ij = Gamma_ij / sum_k Gamma_ik.
class BarycentricWeights {
 public:
  /// Rows whose total mass is at or below this threshold are rejected.
  static constexpr double kMinRowMass = 1e-15;

  /// Normalizes the rows of a coupling plan. Throws DegenerateCoupling.
  static BarycentricWeights from_plan(const Eigen::MatrixXd& plan);
  /// Takes rows that are already simplices (checked to 1e-9).
  static BarycentricWeights from_rows(Eigen::MatrixXd weights);

  const Eigen::MatrixXd& matrix() const noexcept { return weights_; }
  Eigen::Index rows() const noexcept { return weights_.rows(); }
  Eigen::Index cols() const noexcept { return weights_.cols(); }

 private:
  explicit BarycentricWeights(Eigen::MatrixXd w) : weights_(std::move(w)) {}
  Eigen::MatrixXd weights_;
};

class Rotation3 {
 public:
  static constexpr double kTolerance = 1e-8;

  /// Validates R^T R = I and det R = +1 to kTolerance.
  explicit Rotation3(const Eigen::Matrix3d& m);

  static Rotation3 identity() { return Rotation3(Eigen::Matrix3d::Identity()); }
  static Rotation3 from_axis_angle(const Eigen::Vector3d& axis, double angle);

  const Eigen::Matrix3d& matrix() const noexcept { return m_; }
  /// Rotation angle in [0, pi].
  double angle() const;

 private:
  Eigen::Matrix3d m_;
};

class SpdMatrix {
 public:
  explicit SpdMatrix(Eigen::MatrixXd m);

  const Eigen::MatrixXd& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }
  double min_eigenvalue() const;

 private:
  Eigen::MatrixXd m_;
};

Eigen::Matrix3d hat(const Eigen::Vector3d& w);
Eigen::Vector3d vee(const Eigen::Matrix3d& s);

/// Principal logarithm via the axis-angle formula.
/// Throws BranchAmbiguity when the angle is within 1e-6 of pi.
Eigen::Matrix3d matrix_log_so3(const Rotation3& r);
/// Rodrigues exponential of a skew-symmetric matrix.
Rotation3 matrix_exp_so3(const Eigen::Matrix3d& skew);

/// Eigendecomposition log; throws NearSingular for eigenvalues <= 1e-12.
Eigen::MatrixXd matrix_log_spd(const SpdMatrix& p);
/// Exponential of a symmetric matrix, always SPD.
SpdMatrix matrix_exp_sym(const Eigen::MatrixXd& s);

/// z*_i = sum_j Gamma_ij y_j / sum_k Gamma_ik, one output row per coupling row.
/// Outputs are confined to the per-dimension bounding box of the proposals.
Eigen::MatrixXd barycentric_update(const Eigen::MatrixXd& plan, const Eigen::MatrixXd& proposals);
inline Eigen::MatrixXd barycentric_update(const Coupling& c, const Eigen::MatrixXd& proposals) {
  return barycentric_update(c.plan, proposals);
}

/// Vector-valued cost families with closed-form minimizers f^{-1}(sum_j w_ij g(y_j)).
enum class CostFamily {
  kWeightedQuadratic,     // (z-y)^T W (z-y): sum_j w_ij y_j
  kRegularizedQuadratic,  // ||z-y||^2 + lambda ||z||^2: (1+lambda)^{-1} sum_j w_ij y_j
  kCircular,              // 2(1 - cos(z-y)) per coordinate: arg(sum_j w_ij e^{i y_j})
  kKullbackLeibler,       // generalized KL: prod_j y_j^{w_ij} elementwise
};

struct FamilyParams {
  Eigen::MatrixXd weight_matrix;  // optional for kWeightedQuadratic; validated if set
  double lambda = 0.0;
};

/// Minimum resultant length below which a circular mean is undefined.
inline constexpr double kMinResultant = 1e-12;

Eigen::MatrixXd generalized_update(const BarycentricWeights& w, const Eigen::MatrixXd& proposals,
                                   CostFamily family, const FamilyParams& params = {});

/// Log-Euclidean mean exp(sum_j w_ij log S_j) on SO(3).
std::vector<Rotation3> generalized_update(const BarycentricWeights& w,
                                          std::span<const Rotation3> proposals);

/// Log-Euclidean mean exp(sum_j w_ij log Q_j) on SPD(n).
std::vector<SpdMatrix> generalized_update(const BarycentricWeights& w,
                                          std::span<const SpdMatrix> proposals);

/// ||log R - log S||_F^2 cost matrix.
CostMatrix build_cost_matrix(std::span<const Rotation3> particles,
                             std::span<const Rotation3> proposals);
/// ||log P - log Q||_F^2 cost matrix.
CostMatrix build_cost_matrix(std::span<const SpdMatrix> particles,
                             std::span<const SpdMatrix> proposals);

}  // namespace otmpc
