#include "otmpc/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "otmpc/errors.hpp"

namespace otmpc {

namespace {

// A kernel row or column whose largest entry is below this goes to the log
// domain. Keeping it far above DBL_MIN makes flushed subnormals irrelevant.
constexpr double kUnderflow = 1e-200;

// Subnormal entries carry no usable mass and make every later product slow.
void flush_subnormals(Eigen::MatrixXd& a) {
  a = (a.array() < std::numeric_limits<double>::min()).select(0.0, a);
}

std::string shape(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// log(sum_k exp(x_k)); -inf for an all -inf input.
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace

Simplex::Simplex(Eigen::VectorXd weights) : weights_(std::move(weights)) {
  if (weights_.size() == 0) throw DomainError("simplex must be nonempty");
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    if (!std::isfinite(weights_[i]) || weights_[i] < 0.0) {
      throw DomainError("simplex entry " + std::to_string(i) + " is negative or non-finite");
    }
  }
  const double sum = weights_.sum();
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw DomainError("simplex entries sum to " + std::to_string(sum));
  }
}

Simplex Simplex::uniform(Eigen::Index n) {
  if (n < 1) throw DomainError("simplex must be nonempty");
  return Simplex(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

Simplex Simplex::softmax(const Eigen::VectorXd& scores) {
  if (scores.size() == 0) throw DomainError("softmax of an empty score vector");
  if (!scores.allFinite()) throw DomainError("softmax scores must be finite");
  Eigen::VectorXd w = (scores.array() - scores.maxCoeff()).exp();
  w /= w.sum();
  return Simplex(std::move(w));
}

CostMatrix::CostMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (!entries_.allFinite()) throw DomainError("cost matrix has non-finite entries");
}

double CostMatrix::median() const {
  std::vector<double> v(entries_.data(), entries_.data() + entries_.size());
  if (v.empty()) throw DomainError("median of an empty cost matrix");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

CostMatrix build_cost_matrix(const Eigen::MatrixXd& particles, const Eigen::MatrixXd& proposals,
                             Metric metric, const MetricParams& params) {
  if (particles.cols() != proposals.cols()) {
    throw DomainError("particle dimension " + std::to_string(particles.cols()) +
                      " does not match proposal dimension " + std::to_string(proposals.cols()));
  }
  const Eigen::Index n = particles.rows();
  const Eigen::Index m = proposals.rows();
  const Eigen::Index d = particles.cols();
  Eigen::MatrixXd c(n, m);

  switch (metric) {
    case Metric::kHalfSquaredEuclidean: {
      // Points as contiguous columns; this is the hot path inside MPC.
      const Eigen::MatrixXd zt = particles.transpose();
      const Eigen::MatrixXd yt = proposals.transpose();
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) c(i, j) = 0.5 * (zt.col(i) - yt.col(j)).squaredNorm();
      break;
    }

    case Metric::kWeightedQuadratic: {
      const auto& w = params.weight_matrix;
      if (w.rows() != d || w.cols() != d) {
        throw DomainError("weight matrix is " + shape(w.rows(), w.cols()) + ", expected " +
                          shape(d, d));
      }
      if (!w.isApprox(w.transpose(), 1e-10)) throw DomainError("weight matrix is not symmetric");
      Eigen::LLT<Eigen::MatrixXd> llt(w);
      if (llt.info() != Eigen::Success) throw DomainError("weight matrix is not positive definite");
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
          const Eigen::RowVectorXd diff = particles.row(i) - proposals.row(j);
          c(i, j) = diff * w * diff.transpose();
        }
      break;
    }

    case Metric::kRegularizedQuadratic:
      if (params.lambda < 0.0) throw DomainError("regularization lambda must be nonnegative");
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
          c(i, j) = (particles.row(i) - proposals.row(j)).squaredNorm() +
                    params.lambda * particles.row(i).squaredNorm();
      break;

    case Metric::kCircular:
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
          c(i, j) = (2.0 * (1.0 - (particles.row(i) - proposals.row(j)).array().cos())).sum();
      break;

    case Metric::kKullbackLeibler:
      if ((particles.array() <= 0.0).any() || (proposals.array() <= 0.0).any()) {
        throw DomainError("KL cost requires strictly positive entries");
      }
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto z = particles.row(i).array();
          const auto y = proposals.row(j).array();
          c(i, j) = (z * (z / y).log() - z + y).sum();
        }
      break;
  }
  return CostMatrix(std::move(c));
}

void SinkhornConfig::validate(Eigen::Index rows, Eigen::Index cols) const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("sinkhorn epsilon must be > 0");
  if (!(tolerance > 0.0)) throw ConfigError("sinkhorn tolerance must be > 0");
  if (max_iterations < 1) throw ConfigError("sinkhorn max_iterations must be >= 1");
  if (warm_start) {
    if (warm_start->log_u.size() != rows || warm_start->log_v.size() != cols) {
      throw ConfigError("warm-start scalings have lengths " +
                        std::to_string(warm_start->log_u.size()) + "/" +
                        std::to_string(warm_start->log_v.size()) + ", expected " +
                        std::to_string(rows) + "/" + std::to_string(cols));
    }
    // Finite log-scalings <=> strictly positive scalings.
    if (!warm_start->log_u.allFinite() || !warm_start->log_v.allFinite()) {
      throw ConfigError("warm-start scalings must be strictly positive");
    }
  }
}

namespace {

struct Iterate {
  Eigen::MatrixXd plan;
  Scalings scalings;
  double row_error = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool ok = false;  // false: iterate became non-finite
};

// Scaling-domain Sinkhorn exactly as alternating projections on u and v.
Iterate scaling_domain(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& q,
                       const Eigen::VectorXd& p, const SinkhornConfig& cfg) {
  Iterate it;
  Eigen::VectorXd u = Eigen::VectorXd::Ones(q.size());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(p.size());
  if (cfg.warm_start) {
    u = cfg.warm_start->log_u.array().exp();
    v = cfg.warm_start->log_v.array().exp();
  }
  Eigen::VectorXd kv = kernel * v;
  for (int k = 0; k < cfg.max_iterations; ++k) {
    u = q.array() / kv.array();
    v = p.array() / (kernel.transpose() * u).array();
    kv.noalias() = kernel * v;
    ++it.iterations;
    if (!u.allFinite() || !v.allFinite()) return it;
    it.row_error = (u.array() * kv.array() - q.array()).abs().sum();
    if (it.row_error < cfg.tolerance) break;
  }
  it.plan = u.asDiagonal() * kernel * v.asDiagonal();
  it.scalings.log_u = u.array().log();
  it.scalings.log_v = v.array().log();
  it.ok = it.plan.allFinite();
  return it;
}

// Same fixed point on dual potentials with log-sum-exp reductions.
Iterate log_domain(const Eigen::MatrixXd& log_kernel, const Eigen::VectorXd& q,
                   const Eigen::VectorXd& p, const SinkhornConfig& cfg, int already_used) {
  Iterate it;
  it.iterations = already_used;
  const Eigen::Index n = q.size();
  const Eigen::Index m = p.size();
  const Eigen::VectorXd log_q = q.array().log();
  const Eigen::VectorXd log_p = p.array().log();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  if (cfg.warm_start) {
    f = cfg.warm_start->log_u;
    g = cfg.warm_start->log_v;
  }
  Eigen::VectorXd row_lse(n);
  Eigen::VectorXd col_lse(m);
  auto update_rows = [&] {
    for (Eigen::Index i = 0; i < n; ++i) row_lse[i] = log_sum_exp(log_kernel.row(i).transpose() + g);
  };
  update_rows();
  for (int k = it.iterations; k < cfg.max_iterations; ++k) {
    f = log_q - row_lse;
    for (Eigen::Index j = 0; j < m; ++j) col_lse[j] = log_sum_exp(log_kernel.col(j) + f);
    g = log_p - col_lse;
    update_rows();
    ++it.iterations;
    it.row_error = ((f + row_lse).array().exp() - q.array()).abs().sum();
    if (!std::isfinite(it.row_error)) return it;
    if (it.row_error < cfg.tolerance) break;
  }
  it.plan.resize(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) it.plan(i, j) = std::exp(f[i] + log_kernel(i, j) + g[j]);
  it.scalings.log_u = std::move(f);
  it.scalings.log_v = std::move(g);
  it.ok = it.plan.allFinite();
  return it;
}

}  // namespace

Coupling sinkhorn(const CostMatrix& cost, const Simplex& q, const Simplex& p,
                  const SinkhornConfig& cfg) {
  if (cost.rows() != q.size() || cost.cols() != p.size()) {
    throw DomainError("cost matrix is " + shape(cost.rows(), cost.cols()) +
                      " but marginals have lengths " + std::to_string(q.size()) + "/" +
                      std::to_string(p.size()));
  }
  cfg.validate(cost.rows(), cost.cols());

  const Eigen::MatrixXd log_kernel = -cost.entries() / cfg.epsilon;
  Eigen::MatrixXd kernel = log_kernel.array().exp();
  flush_subnormals(kernel);
  const bool underflow = !kernel.allFinite() ||
                         kernel.rowwise().maxCoeff().minCoeff() < kUnderflow ||
                         kernel.colwise().maxCoeff().minCoeff() < kUnderflow;

  Iterate it;
  bool used_log = false;
  if (!underflow) it = scaling_domain(kernel, q.weights(), p.weights(), cfg);
  if (underflow || !it.ok) {
    if (!cfg.allow_log_domain) {
      throw SolverFailure("Sinkhorn kernel exp(-C/epsilon) underflowed", cfg.epsilon);
    }
    it = log_domain(log_kernel, q.weights(), p.weights(), cfg, underflow ? 0 : it.iterations);
    used_log = true;
    if (!it.ok) throw SolverFailure("log-domain Sinkhorn produced non-finite potentials", cfg.epsilon);
  }

  Coupling out;
  out.plan = std::move(it.plan);
  flush_subnormals(out.plan);
  out.scalings = std::move(it.scalings);
  out.epsilon = cfg.epsilon;
  out.iterations_used = it.iterations;
  out.converged = it.row_error < cfg.tolerance;
  out.log_domain = used_log;
  std::tie(out.row_marginal_error, out.col_marginal_error) = marginal_errors(out.plan, q, p);
  return out;
}

double entropy(const Eigen::MatrixXd& plan) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < plan.cols(); ++j)
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      const double g = plan(i, j);
      if (g > 0.0) h -= g * (std::log(g) - 1.0);
    }
  return h;
}

double eot_objective(const CostMatrix& cost, const Eigen::MatrixXd& plan, double epsilon) {
  if (cost.rows() != plan.rows() || cost.cols() != plan.cols()) {
    throw DomainError("coupling is " + shape(plan.rows(), plan.cols()) + " but cost is " +
                      shape(cost.rows(), cost.cols()));
  }
  const double transport = cost.entries().cwiseProduct(plan).sum();
  if (epsilon == 0.0) return transport;
  return transport - epsilon * entropy(plan);
}

std::pair<double, double> marginal_errors(const Eigen::MatrixXd& plan, const Simplex& q,
                                          const Simplex& p) {
  if (plan.rows() != q.size() || plan.cols() != p.size()) {
    throw DomainError("coupling is " + shape(plan.rows(), plan.cols()) +
                      " but marginals have lengths " + std::to_string(q.size()) + "/" +
                      std::to_string(p.size()));
  }
  const double row = (plan.rowwise().sum() - q.weights()).lpNorm<1>();
  const double col = (plan.colwise().sum().transpose() - p.weights()).lpNorm<1>();
  return {row, col};
}

}  // namespace otmpc
