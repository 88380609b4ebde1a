#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "otmpc/barycenter.hpp"
#include "otmpc/errors.hpp"

using namespace otmpc;
using testing_support::random_simplex;
using testing_support::uniform_matrix;

namespace {

Eigen::MatrixXd random_rows(std::mt19937_64& gen, Eigen::Index n, Eigen::Index m) {
  Eigen::MatrixXd w(n, m);
  for (Eigen::Index i = 0; i < n; ++i) w.row(i) = random_simplex(gen, m).weights().transpose();
  return w;
}

// Plain gradient descent on sum_j w_j 0.5 ||z - y_j||^2.
Eigen::VectorXd descend_quadratic(const Eigen::VectorXd& w, const Eigen::MatrixXd& y) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(y.cols());
  for (int k = 0; k < 2000; ++k) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(y.cols());
    for (Eigen::Index j = 0; j < y.rows(); ++j) grad += w[j] * (z - y.row(j).transpose());
    z -= 0.5 * grad;
  }
  return z;
}

Eigen::MatrixXd random_spd(std::mt19937_64& gen, int n) {
  const Eigen::MatrixXd a = uniform_matrix(gen, n, n, -1, 1);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

Rotation3 random_rotation(std::mt19937_64& gen, double max_angle) {
  std::normal_distribution<double> n01;
  Eigen::Vector3d axis(n01(gen), n01(gen), n01(gen));
  std::uniform_real_distribution<double> ang(0.0, max_angle);
  return Rotation3::from_axis_angle(axis.normalized(), ang(gen));
}

}  // namespace

TEST_SUITE("barycenter") {
  TEST_CASE("permutation plan returns the matched proposals") {
    Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(3, 3);
    plan(0, 2) = plan(1, 0) = plan(2, 1) = 1.0 / 3;
    Eigen::MatrixXd y(3, 2);
    y << 1, 2, 3, 4, 5, 6;
    const Eigen::MatrixXd z = barycentric_update(plan, y);
    CHECK(z.row(0) == y.row(2));
    CHECK(z.row(1) == y.row(0));
    CHECK(z.row(2) == y.row(1));
  }

  TEST_CASE("product plan sends every particle to the p-mean") {
    std::mt19937_64 gen(2);
    const Simplex q = random_simplex(gen, 4), p = random_simplex(gen, 6);
    const Eigen::MatrixXd y = uniform_matrix(gen, 6, 3, -5, 5);
    const Eigen::MatrixXd z = barycentric_update(q.weights() * p.weights().transpose(), y);
    const Eigen::RowVectorXd mean = p.weights().transpose() * y;
    for (int i = 0; i < 4; ++i) CHECK((z.row(i) - mean).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("update matches gradient descent on the weighted quadratic loss") {
    std::mt19937_64 gen(8);
    const Eigen::MatrixXd plan = uniform_matrix(gen, 5, 7, 0.01, 1.0);
    const Eigen::MatrixXd y = uniform_matrix(gen, 7, 3, -2, 2);
    const Eigen::MatrixXd z = barycentric_update(plan, y);
    for (int i = 0; i < 5; ++i) {
      const Eigen::VectorXd w = plan.row(i).transpose() / plan.row(i).sum();
      CHECK((z.row(i).transpose() - descend_quadratic(w, y)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  TEST_CASE("outputs stay inside the proposal bounding box") {
    std::mt19937_64 gen(13);
    for (int t = 0; t < 50; ++t) {
      const Eigen::MatrixXd plan = uniform_matrix(gen, 6, 9, 0.0, 1.0);
      const Eigen::MatrixXd y = uniform_matrix(gen, 9, 4, -3, 3);
      const Eigen::MatrixXd z = barycentric_update(plan, y);
      for (int d = 0; d < 4; ++d) {
        CHECK(z.col(d).minCoeff() >= y.col(d).minCoeff());
        CHECK(z.col(d).maxCoeff() <= y.col(d).maxCoeff());
      }
    }
  }

  TEST_CASE("degenerate row names its index") {
    Eigen::MatrixXd plan(3, 2);
    plan << 0.5, 0.5, 0.0, 0.0, 0.2, 0.8;
    try {
      barycentric_update(plan, Eigen::MatrixXd::Ones(2, 2));
      FAIL("expected DegenerateCoupling");
    } catch (const DegenerateCoupling& e) {
      CHECK(e.row() == 1);
    }
    CHECK_THROWS_AS(BarycentricWeights::from_rows(plan), DomainError);
  }

  TEST_CASE("weighted quadratic: W does not change the minimizer") {
    std::mt19937_64 gen(5);
    const BarycentricWeights w = BarycentricWeights::from_rows(random_rows(gen, 3, 5));
    const Eigen::MatrixXd y = uniform_matrix(gen, 5, 2, -1, 1);
    FamilyParams a;
    a.weight_matrix = Eigen::Matrix2d::Identity();
    FamilyParams b;
    b.weight_matrix = Eigen::Matrix2d(Eigen::Vector2d(10.0, 0.1).asDiagonal());
    const Eigen::MatrixXd za = generalized_update(w, y, CostFamily::kWeightedQuadratic, a);
    const Eigen::MatrixXd zb = generalized_update(w, y, CostFamily::kWeightedQuadratic, b);
    CHECK((za - zb).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((za - w.matrix() * y).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("regularized quadratic shrinks toward the origin") {
    std::mt19937_64 gen(6);
    const BarycentricWeights w = BarycentricWeights::from_rows(random_rows(gen, 2, 4));
    const Eigen::MatrixXd y = uniform_matrix(gen, 4, 3, -1, 1);
    FamilyParams prm;
    prm.lambda = 0.5;
    const Eigen::MatrixXd z = generalized_update(w, y, CostFamily::kRegularizedQuadratic, prm);
    CHECK((z - w.matrix() * y / 1.5).cwiseAbs().maxCoeff() < 1e-14);
    // Stationarity of sum_j w_j (||z - y_j||^2 + lambda ||z||^2).
    for (int i = 0; i < 2; ++i) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
      for (int j = 0; j < 4; ++j)
        g += w.matrix()(i, j) * (2.0 * (z.row(i) - y.row(j)).transpose() + 2.0 * prm.lambda * z.row(i).transpose());
      CHECK(g.norm() < 1e-12);
    }
  }

  TEST_CASE("circular mean: wraps across pi and rejects a vanishing resultant") {
    Eigen::MatrixXd w(1, 2);
    w << 0.5, 0.5;
    Eigen::MatrixXd y(2, 1);
    y << std::numbers::pi - 0.1, -std::numbers::pi + 0.1;
    const Eigen::MatrixXd z = generalized_update(BarycentricWeights::from_rows(w), y, CostFamily::kCircular);
    CHECK(std::abs(std::abs(z(0, 0)) - std::numbers::pi) < 1e-12);

    y << 0.0, std::numbers::pi;
    CHECK_THROWS_AS(generalized_update(BarycentricWeights::from_rows(w), y, CostFamily::kCircular), UndefinedMean);
  }

  TEST_CASE("circular mean satisfies the first-order condition") {
    std::mt19937_64 gen(31);
    const BarycentricWeights w = BarycentricWeights::from_rows(random_rows(gen, 4, 6));
    const Eigen::MatrixXd y = uniform_matrix(gen, 6, 2, -1.5, 1.5);
    const Eigen::MatrixXd z = generalized_update(w, y, CostFamily::kCircular);
    for (int i = 0; i < 4; ++i)
      for (int d = 0; d < 2; ++d) {
        double g = 0.0;
        for (int j = 0; j < 6; ++j) g += w.matrix()(i, j) * std::sin(z(i, d) - y(j, d));
        CHECK(std::abs(g) < 1e-12);
      }
  }

  TEST_CASE("KL family gives the weighted geometric mean") {
    Eigen::MatrixXd w(1, 2);
    w << 0.5, 0.5;
    Eigen::MatrixXd y(2, 2);
    y << 1.0, 2.0, 4.0, 8.0;
    const Eigen::MatrixXd z = generalized_update(BarycentricWeights::from_rows(w), y, CostFamily::kKullbackLeibler);
    CHECK(z(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(z(0, 1) == doctest::Approx(4.0).epsilon(1e-14));
    y(0, 0) = 0.0;
    CHECK_THROWS_AS(generalized_update(BarycentricWeights::from_rows(w), y, CostFamily::kKullbackLeibler), DomainError);
  }

  TEST_CASE("KL first-order condition in log space") {
    std::mt19937_64 gen(41);
    const BarycentricWeights w = BarycentricWeights::from_rows(random_rows(gen, 3, 5));
    const Eigen::MatrixXd y = uniform_matrix(gen, 5, 3, 0.1, 4.0);
    const Eigen::MatrixXd z = generalized_update(w, y, CostFamily::kKullbackLeibler);
    for (int i = 0; i < 3; ++i)
      for (int d = 0; d < 3; ++d) {
        double g = 0.0;
        for (int j = 0; j < 5; ++j) g += w.matrix()(i, j) * (std::log(z(i, d)) - std::log(y(j, d)));
        CHECK(std::abs(g) < 1e-12);
      }
  }

  TEST_CASE("one-hot weights select the proposal exactly") {
    std::mt19937_64 gen(3);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, 4);
    w(0, 1) = 1.0;
    w(1, 3) = 1.0;
    const BarycentricWeights bw = BarycentricWeights::from_rows(w);
    const Eigen::MatrixXd y = uniform_matrix(gen, 4, 3, 0.2, 2.5);
    for (CostFamily f : {CostFamily::kWeightedQuadratic, CostFamily::kRegularizedQuadratic, CostFamily::kCircular,
                         CostFamily::kKullbackLeibler}) {
      const Eigen::MatrixXd z = generalized_update(bw, y, f);
      CHECK(z.row(0) == y.row(1));
      CHECK(z.row(1) == y.row(3));
    }
    std::vector<Rotation3> rots;
    std::vector<SpdMatrix> spds;
    for (int j = 0; j < 4; ++j) {
      rots.push_back(random_rotation(gen, 2.5));
      spds.emplace_back(random_spd(gen, 3));
    }
    const auto rz = generalized_update(bw, std::span<const Rotation3>(rots));
    CHECK(rz[0].matrix() == rots[1].matrix());
    CHECK(rz[1].matrix() == rots[3].matrix());
    const auto sz = generalized_update(bw, std::span<const SpdMatrix>(spds));
    CHECK(sz[0].matrix() == spds[1].matrix());
    CHECK(sz[1].matrix() == spds[3].matrix());
  }

  TEST_CASE("SO(3) log and exp") {
    CHECK(matrix_log_so3(Rotation3::identity()).cwiseAbs().maxCoeff() < 1e-15);
    const Rotation3 rz = Rotation3::from_axis_angle(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2);
    const Eigen::Vector3d w = vee(matrix_log_so3(rz));
    CHECK((w - Eigen::Vector3d(0, 0, std::numbers::pi / 2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(matrix_log_so3(Rotation3::from_axis_angle(Eigen::Vector3d::UnitX(), std::numbers::pi)),
                    BranchAmbiguity);
    CHECK_THROWS_AS(Rotation3(2.0 * Eigen::Matrix3d::Identity()), DomainError);

    std::mt19937_64 gen(77);
    for (int t = 0; t < 200; ++t) {
      const Rotation3 r = random_rotation(gen, std::numbers::pi - 1e-3);
      const Rotation3 back = matrix_exp_so3(matrix_log_so3(r));
      CHECK((back.matrix() - r.matrix()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("SO(3) mean of rotations about one axis averages the angles") {
    Eigen::MatrixXd w(1, 2);
    w << 0.25, 0.75;
    const std::vector<Rotation3> rots{Rotation3::from_axis_angle(Eigen::Vector3d::UnitY(), 0.2),
                                      Rotation3::from_axis_angle(Eigen::Vector3d::UnitY(), 1.0)};
    const auto z = generalized_update(BarycentricWeights::from_rows(w), std::span<const Rotation3>(rots));
    const Rotation3 expect = Rotation3::from_axis_angle(Eigen::Vector3d::UnitY(), 0.8);
    CHECK((z[0].matrix() - expect.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("SPD log and exp round trip, singular rejection") {
    std::mt19937_64 gen(19);
    for (int t = 0; t < 50; ++t) {
      const SpdMatrix p(random_spd(gen, 4));
      const SpdMatrix back = matrix_exp_sym(matrix_log_spd(p));
      CHECK((back.matrix() - p.matrix()).cwiseAbs().maxCoeff() < 1e-9 * p.matrix().norm());
    }
    const Eigen::Matrix2d d = Eigen::Vector2d(std::exp(1.0), std::exp(-2.0)).asDiagonal();
    const Eigen::MatrixXd l = matrix_log_spd(SpdMatrix(d));
    CHECK(l(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(l(1, 1) == doctest::Approx(-2.0).epsilon(1e-14));
    Eigen::Matrix2d near;
    near << 1.0, 0.0, 0.0, 1e-13;
    CHECK_THROWS_AS(matrix_log_spd(SpdMatrix(near)), NearSingular);
    CHECK_THROWS_AS(SpdMatrix(Eigen::Matrix2d(Eigen::Vector2d(1.0, -1.0).asDiagonal())), DomainError);
  }

  TEST_CASE("SPD log-Euclidean mean satisfies the first-order condition") {
    std::mt19937_64 gen(23);
    const BarycentricWeights w = BarycentricWeights::from_rows(random_rows(gen, 2, 5));
    std::vector<SpdMatrix> ys;
    for (int j = 0; j < 5; ++j) ys.emplace_back(random_spd(gen, 3));
    const auto z = generalized_update(w, std::span<const SpdMatrix>(ys));
    for (int i = 0; i < 2; ++i) {
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 3);
      const Eigen::MatrixXd lz = matrix_log_spd(z[static_cast<std::size_t>(i)]);
      for (int j = 0; j < 5; ++j) g += w.matrix()(i, j) * (lz - matrix_log_spd(ys[static_cast<std::size_t>(j)]));
      CHECK(g.norm() < 1e-10);
    }
  }

  TEST_CASE("manifold cost matrices") {
    const std::vector<Rotation3> a{Rotation3::identity()};
    const std::vector<Rotation3> b{Rotation3::from_axis_angle(Eigen::Vector3d::UnitZ(), 0.5)};
    // ||hat(w)||_F^2 = 2 |w|^2.
    CHECK(build_cost_matrix(std::span<const Rotation3>(a), std::span<const Rotation3>(b))(0, 0) ==
          doctest::Approx(0.5).epsilon(1e-12));
    const std::vector<SpdMatrix> s{SpdMatrix(Eigen::Matrix2d::Identity())};
    const std::vector<SpdMatrix> t{SpdMatrix(Eigen::Matrix2d(Eigen::Vector2d(std::exp(1.0), 1.0).asDiagonal()))};
    CHECK(build_cost_matrix(std::span<const SpdMatrix>(s), std::span<const SpdMatrix>(t))(0, 0) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}
