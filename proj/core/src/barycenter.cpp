#include "otmpc/barycenter.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "otmpc/errors.hpp"

namespace otmpc {

namespace {

constexpr double kBranchMargin = 1e-6;
constexpr double kSmallAngle = 1e-4;
constexpr double kMinEigenvalue = 1e-12;
constexpr double kSymmetryTolerance = 1e-10;

void check_columns(const BarycentricWeights& w, Eigen::Index proposals) {
  if (w.cols() != proposals) {
    throw DomainError("weights have " + std::to_string(w.cols()) + " columns but there are " +
                      std::to_string(proposals) + " proposals");
  }
}

// Index of the only nonzero weight in row i, if the row is one-hot.
std::optional<Eigen::Index> one_hot(const Eigen::MatrixXd& w, Eigen::Index i) {
  std::optional<Eigen::Index> hit;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    if (w(i, j) != 0.0) {
      if (hit) return std::nullopt;
      hit = j;
    }
  }
  return hit;
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

BarycentricWeights BarycentricWeights::from_plan(const Eigen::MatrixXd& plan) {
  if ((plan.array() < 0.0).any() || !plan.allFinite()) {
    throw DomainError("coupling entries must be finite and nonnegative");
  }
  Eigen::MatrixXd w = plan;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double mass = w.row(i).sum();
    if (!(mass > kMinRowMass)) throw DegenerateCoupling(static_cast<std::size_t>(i));
    w.row(i) /= mass;
  }
  return BarycentricWeights(std::move(w));
}

BarycentricWeights BarycentricWeights::from_rows(Eigen::MatrixXd weights) {
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    if ((weights.row(i).array() < 0.0).any() || !weights.row(i).allFinite() ||
        std::abs(weights.row(i).sum() - 1.0) > Simplex::kSumTolerance) {
      throw DomainError("weight row " + std::to_string(i) + " is not a simplex");
    }
  }
  return BarycentricWeights(std::move(weights));
}

Rotation3::Rotation3(const Eigen::Matrix3d& m) : m_(m) {
  if (!m.allFinite()) throw DomainError("rotation has non-finite entries");
  if ((m.transpose() * m - Eigen::Matrix3d::Identity()).norm() > kTolerance) {
    throw DomainError("rotation is not orthogonal");
  }
  if (std::abs(m.determinant() - 1.0) > kTolerance) {
    throw DomainError("rotation determinant is not +1");
  }
}

Rotation3 Rotation3::from_axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Rotation3(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
}

double Rotation3::angle() const {
  const double s = 0.5 * vee(m_ - m_.transpose()).norm();
  const double c = 0.5 * (m_.trace() - 1.0);
  return std::atan2(s, c);
}

SpdMatrix::SpdMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0) throw DomainError("SPD matrix must be square");
  if (!m_.allFinite()) throw DomainError("SPD matrix has non-finite entries");
  if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
    throw DomainError("matrix is not symmetric");
  }
  if (!(min_eigenvalue() > 0.0)) throw DomainError("matrix is not positive definite");
}

double SpdMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

Eigen::Vector3d vee(const Eigen::Matrix3d& s) { return {s(2, 1), s(0, 2), s(1, 0)}; }

Eigen::Matrix3d matrix_log_so3(const Rotation3& r) {
  const Eigen::Matrix3d& m = r.matrix();
  const double theta = r.angle();
  if (theta >= std::numbers::pi - kBranchMargin) {
    throw BranchAmbiguity("SO(3) logarithm is ambiguous at rotation angle " +
                          std::to_string(theta));
  }
  const Eigen::Matrix3d anti = m - m.transpose();
  double scale;
  if (theta < kSmallAngle) {
    scale = 0.5 * (1.0 + theta * theta / 6.0);
  } else {
    scale = theta / (2.0 * std::sin(theta));
  }
  Eigen::Matrix3d log = scale * anti;
  return 0.5 * (log - log.transpose());
}

Rotation3 matrix_exp_so3(const Eigen::Matrix3d& skew) {
  const Eigen::Vector3d w = vee(0.5 * (skew - skew.transpose()));
  const double theta = w.norm();
  const Eigen::Matrix3d k = hat(w);
  double a, b;  // sin(t)/t and (1 - cos t)/t^2
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Rotation3(Eigen::Matrix3d::Identity() + a * k + b * k * k);
}

Eigen::MatrixXd matrix_log_spd(const SpdMatrix& p) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.matrix());
  const Eigen::VectorXd& lambda = es.eigenvalues();
  if (lambda.minCoeff() <= kMinEigenvalue) {
    throw NearSingular("SPD matrix has eigenvalue " + std::to_string(lambda.minCoeff()));
  }
  const Eigen::MatrixXd& v = es.eigenvectors();
  return symmetrize(v * lambda.array().log().matrix().asDiagonal() * v.transpose());
}

SpdMatrix matrix_exp_sym(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols()) throw DomainError("matrix exponential needs a square matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(s));
  const Eigen::MatrixXd& v = es.eigenvectors();
  return SpdMatrix(symmetrize(v * es.eigenvalues().array().exp().matrix().asDiagonal() *
                              v.transpose()));
}

Eigen::MatrixXd barycentric_update(const Eigen::MatrixXd& plan, const Eigen::MatrixXd& proposals) {
  if (plan.cols() != proposals.rows()) {
    throw DomainError("coupling has " + std::to_string(plan.cols()) + " columns but there are " +
                      std::to_string(proposals.rows()) + " proposals");
  }
  const auto w = BarycentricWeights::from_plan(plan);
  Eigen::MatrixXd z = w.matrix() * proposals;
  // Round-off can push a convex combination an ulp outside the hull box.
  const Eigen::RowVectorXd lo = proposals.colwise().minCoeff();
  const Eigen::RowVectorXd hi = proposals.colwise().maxCoeff();
  for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i) = z.row(i).cwiseMax(lo).cwiseMin(hi);
  return z;
}

Eigen::MatrixXd generalized_update(const BarycentricWeights& w, const Eigen::MatrixXd& proposals,
                                   CostFamily family, const FamilyParams& params) {
  check_columns(w, proposals.rows());
  const Eigen::MatrixXd& wm = w.matrix();
  const Eigen::Index d = proposals.cols();
  Eigen::MatrixXd z(wm.rows(), d);

  switch (family) {
    case CostFamily::kWeightedQuadratic: {
      const auto& mat = params.weight_matrix;
      if (mat.size() != 0) {
        if (mat.rows() != d || mat.cols() != d) throw DomainError("weight matrix has wrong shape");
        if (Eigen::LLT<Eigen::MatrixXd>(mat).info() != Eigen::Success) {
          throw DomainError("weight matrix is not positive definite");
        }
      }
      // W appears in both f and g and cancels.
      z = wm * proposals;
      break;
    }
    case CostFamily::kRegularizedQuadratic:
      if (params.lambda < 0.0) throw DomainError("regularization lambda must be nonnegative");
      z = (wm * proposals) / (1.0 + params.lambda);
      break;
    case CostFamily::kCircular: {
      const Eigen::MatrixXd s = wm * proposals.array().sin().matrix();
      const Eigen::MatrixXd c = wm * proposals.array().cos().matrix();
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index k = 0; k < d; ++k) {
          if (std::hypot(s(i, k), c(i, k)) < kMinResultant) {
            throw UndefinedMean("circular mean undefined for row " + std::to_string(i) +
                                ", coordinate " + std::to_string(k));
          }
          z(i, k) = std::atan2(s(i, k), c(i, k));
        }
      break;
    }
    case CostFamily::kKullbackLeibler:
      if ((proposals.array() <= 0.0).any()) {
        throw DomainError("KL family requires strictly positive proposals");
      }
      z = (wm * proposals.array().log().matrix()).array().exp();
      break;
  }

  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (auto j = one_hot(wm, i)) {
      z.row(i) = family == CostFamily::kRegularizedQuadratic
                     ? Eigen::RowVectorXd(proposals.row(*j) / (1.0 + params.lambda))
                     : Eigen::RowVectorXd(proposals.row(*j));
    }
  }
  return z;
}

std::vector<Rotation3> generalized_update(const BarycentricWeights& w,
                                          std::span<const Rotation3> proposals) {
  check_columns(w, static_cast<Eigen::Index>(proposals.size()));
  std::vector<Eigen::Matrix3d> logs;
  logs.reserve(proposals.size());
  for (const auto& s : proposals) logs.push_back(matrix_log_so3(s));

  std::vector<Rotation3> out;
  out.reserve(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (auto j = one_hot(w.matrix(), i)) {
      out.push_back(proposals[static_cast<std::size_t>(*j)]);
      continue;
    }
    Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
    for (std::size_t j = 0; j < logs.size(); ++j) acc += w.matrix()(i, static_cast<Eigen::Index>(j)) * logs[j];
    out.push_back(matrix_exp_so3(acc));
  }
  return out;
}

std::vector<SpdMatrix> generalized_update(const BarycentricWeights& w,
                                          std::span<const SpdMatrix> proposals) {
  check_columns(w, static_cast<Eigen::Index>(proposals.size()));
  if (proposals.empty()) return {};
  const Eigen::Index n = proposals.front().dim();
  std::vector<Eigen::MatrixXd> logs;
  logs.reserve(proposals.size());
  for (const auto& q : proposals) {
    if (q.dim() != n) throw DomainError("SPD proposals have mixed dimensions");
    logs.push_back(matrix_log_spd(q));
  }

  std::vector<SpdMatrix> out;
  out.reserve(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (auto j = one_hot(w.matrix(), i)) {
      out.push_back(proposals[static_cast<std::size_t>(*j)]);
      continue;
    }
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t j = 0; j < logs.size(); ++j) acc += w.matrix()(i, static_cast<Eigen::Index>(j)) * logs[j];
    out.push_back(matrix_exp_sym(acc));
  }
  return out;
}

CostMatrix build_cost_matrix(std::span<const Rotation3> particles,
                             std::span<const Rotation3> proposals) {
  std::vector<Eigen::Matrix3d> lz, ly;
  for (const auto& r : particles) lz.push_back(matrix_log_so3(r));
  for (const auto& s : proposals) ly.push_back(matrix_log_so3(s));
  Eigen::MatrixXd c(static_cast<Eigen::Index>(lz.size()), static_cast<Eigen::Index>(ly.size()));
  for (std::size_t i = 0; i < lz.size(); ++i)
    for (std::size_t j = 0; j < ly.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (lz[i] - ly[j]).squaredNorm();
  return CostMatrix(std::move(c));
}

CostMatrix build_cost_matrix(std::span<const SpdMatrix> particles,
                             std::span<const SpdMatrix> proposals) {
  std::vector<Eigen::MatrixXd> lz, ly;
  for (const auto& p : particles) lz.push_back(matrix_log_spd(p));
  for (const auto& q : proposals) ly.push_back(matrix_log_spd(q));
  Eigen::MatrixXd c(static_cast<Eigen::Index>(lz.size()), static_cast<Eigen::Index>(ly.size()));
  for (std::size_t i = 0; i < lz.size(); ++i)
    for (std::size_t j = 0; j < ly.size(); ++j) {
      if (lz[i].rows() != ly[j].rows()) throw DomainError("SPD dimension mismatch");
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (lz[i] - ly[j]).squaredNorm();
    }
  return CostMatrix(std::move(c));
}

}  // namespace otmpc
