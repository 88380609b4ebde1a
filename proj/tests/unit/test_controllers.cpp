#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "otmpc/bench.hpp"
#include "otmpc/controllers.hpp"
#include "otmpc/envs.hpp"
#include "otmpc/errors.hpp"

using namespace otmpc;
using testing_support::random_simplex;
using testing_support::uniform_matrix;

namespace {

// x_{t+1} = x_t + dt u_t on a line; cost w (x - goal)^2, or zero when w = 0.
class LineEnv final : public Environment {
 public:
  LineEnv(double lo, double hi, double w) : w_(w) {
    bounds_.lower = Eigen::VectorXd::Constant(1, lo);
    bounds_.upper = Eigen::VectorXd::Constant(1, hi);
  }
  std::string id() const override { return "line"; }
  int state_dim() const override { return 1; }
  int control_dim() const override { return 1; }
  const ControlBounds& bounds() const override { return bounds_; }
  StateVector initial_state() const override { return StateVector::Zero(1); }
  StateVector step(const StateVector& x, const ControlVector& u) const override {
    StateVector n(1);
    n[0] = x[0] + 0.1 * u[0];
    return n;
  }
  double running_cost(const StateVector& x, const ControlVector&) const override { return terminal_cost(x); }
  double terminal_cost(const StateVector& x) const override { return w_ * (x[0] - 1.0) * (x[0] - 1.0); }
  bool in_collision(const StateVector&) const override { return false; }
  double goal_distance(const StateVector& x) const override { return std::abs(x[0] - 1.0); }
  double success_radius() const override { return 0.1; }
  Eigen::Vector2d position(const StateVector& x) const override { return {x[0], 0.0}; }

 private:
  double w_;
  ControlBounds bounds_;
};

ObstacleField open_field(double speed) {
  ObstacleField f;
  f.start = {0.0, 0.0};
  f.goal = {5.0, 0.0};
  f.start_speed = speed;
  f.bounds = {-10.0, 10.0, -10.0, 10.0};
  return f;
}

ControlBounds box(double lo, double hi, int m) {
  return ControlBounds{Eigen::VectorXd::Constant(m, lo), Eigen::VectorXd::Constant(m, hi)};
}

BenchmarkConfig bimodal_config(const std::string& controller) {
  ConfigMap m;
  m.set("environment.id", std::string("bimodal"));
  m.set("controller.id", controller);
  return BenchmarkConfig::from_map(m);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_SUITE("controllers") {
  TEST_CASE("rollout: double integrator at rest pays only the distance term") {
    ObstacleField f = open_field(0.0);
    f.goal = {3.0, 4.0};
    const DoubleIntegratorEnv env(f, TaskCostWeights{1.0, 100.0, 0.0});
    const RolloutResult r = rollout(env, env.initial_state(), Eigen::MatrixXd::Zero(12, 2));
    CHECK(r.states.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.per_step_costs.size() == 13);
    CHECK((r.per_step_costs.array() == 25.0).all());
    CHECK(r.total_cost == doctest::Approx(13 * 25.0));
    CHECK_FALSE(r.crashed);
  }

  TEST_CASE("rollout: bicycle coasts one metre in ten steps") {
    const BicycleEnv env(open_field(1.0), TaskCostWeights{});
    const RolloutResult r = rollout(env, env.initial_state(), Eigen::MatrixXd::Zero(10, 2));
    CHECK(r.states(10, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(r.states(10, 1)) < 1e-15);
    CHECK(r.states(10, 3) == 1.0);
  }

  TEST_CASE("rollout: total equals resummation and the fast path") {
    std::mt19937_64 gen(12);
    const auto env = bimodal_toy(kBimodalWeights);
    for (int t = 0; t < 20; ++t) {
      Eigen::MatrixXd u = uniform_matrix(gen, 40, 2, -1, 1);
      u.col(0) = (u.col(0).array() + 1.0).matrix();  // forward acceleration
      u.col(1) *= 0.6;
      const RolloutResult a = rollout(*env, env->initial_state(), u);
      long double s = 0.0L;
      for (Eigen::Index k = 0; k < a.per_step_costs.size(); ++k) s += a.per_step_costs[k];
      CHECK(std::abs(a.total_cost - static_cast<double>(s)) <= 1e-12 * std::max(1.0, a.total_cost));
      Eigen::MatrixXd flat(1, 80);
      for (int k = 0; k < 40; ++k) flat.block(0, 2 * k, 1, 2) = u.row(k);
      const double fast = rollout_costs(*env, env->initial_state(), flat)[0];
      CHECK(std::abs(fast - a.total_cost) <= 1e-12 * std::max(1.0, a.total_cost));
      const RolloutResult b = rollout(*env, env->initial_state(), u);
      CHECK(a.states == b.states);
      CHECK(a.total_cost == b.total_cost);
    }
  }

  TEST_CASE("rollout: state freezes after a crash") {
    const auto env = bimodal_toy(kBimodalWeights);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(40, 2);
    u.col(0).setConstant(2.0);
    const RolloutResult r = rollout(*env, env->initial_state(), u);
    CHECK(r.crashed);
    Eigen::Index first = -1;
    for (Eigen::Index t = 0; t < r.states.rows(); ++t) {
      StateVector x = r.states.row(t).transpose();
      if (env->in_collision(x)) {
        first = t;
        break;
      }
    }
    REQUIRE(first > 0);
    for (Eigen::Index t = first; t < r.states.rows(); ++t) CHECK(r.states.row(t) == r.states.row(first));
    CHECK(r.per_step_costs[39] >= kBimodalWeights.w_obstacle);
  }

  TEST_CASE("rollout: width mismatch is a domain error") {
    const auto env = bimodal_toy(kBimodalWeights);
    CHECK_THROWS_AS(rollout(*env, env->initial_state(), Eigen::MatrixXd::Zero(3, 3)), DomainError);
  }

  TEST_CASE("gibbs weights: closed forms") {
    const Simplex eq = gibbs_weights(Eigen::VectorXd::Constant(5, 3.7), 2.0);
    CHECK((eq.weights().array() - 0.2).abs().maxCoeff() < 1e-15);
    const Simplex cold = gibbs_weights(Eigen::Vector3d(0.0, 100.0, -4.0), 0.0);
    CHECK((cold.weights().array() - 1.0 / 3).abs().maxCoeff() < 1e-15);
    const Simplex two = gibbs_weights(Eigen::Vector2d(0.0, std::log(2.0)), 1.0);
    CHECK(two[0] == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(two[1] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    // Crash-penalty scale costs stay finite.
    const Simplex big = gibbs_weights(Eigen::Vector2d(1e5, 1e5 + 1.0), 480.0);
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK_THROWS_AS(gibbs_weights(Eigen::Vector2d(0.0, 1.0), -1.0), DomainError);
  }

  TEST_CASE("gibbs weights: brute-force oracle") {
    std::mt19937_64 gen(101);
    std::uniform_real_distribution<double> beta(0.0, 5.0);
    for (int t = 0; t < 200; ++t) {
      const Eigen::VectorXd s = uniform_matrix(gen, 17, 1, 0, 10).col(0);
      const double b = beta(gen);
      CHECK((gibbs_weights(s, b).weights() - oracle::gibbs(s, b)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("mppi update: degenerate and symmetric cases") {
    const ControlBounds b = box(-5, 5, 2);
    Eigen::VectorXd mean(4);
    mean << 0.1, -0.2, 0.3, 0.0;
    Eigen::MatrixXd one(1, 4);
    one << 0.5, 0.5, -0.5, 1.0;
    for (double beta : {0.0, 1.0, 100.0})
      CHECK((mppi_update(mean, one, Eigen::VectorXd::Constant(1, 7.0), beta, b) - (mean + one.row(0).transpose()))
                .cwiseAbs()
                .maxCoeff() < 1e-15);
    Eigen::MatrixXd sym(2, 4);
    sym.row(0) = one.row(0);
    sym.row(1) = -one.row(0);
    CHECK((mppi_update(mean, sym, Eigen::Vector2d(3.0, 3.0), 1.0, b) - mean).cwiseAbs().maxCoeff() < 1e-15);
    // Clamping.
    Eigen::MatrixXd far(1, 4);
    far << 10, -10, 0, 0;
    const Eigen::VectorXd c = mppi_update(mean, far, Eigen::VectorXd::Zero(1), 1.0, b);
    CHECK(c[0] == 5.0);
    CHECK(c[1] == -5.0);
  }

  TEST_CASE("mppi update: weighted-sum oracle") {
    std::mt19937_64 gen(202);
    const ControlBounds b{Eigen::Vector2d(-2.0, -0.6), Eigen::Vector2d(2.0, 0.6)};
    for (int t = 0; t < 200; ++t) {
      const Eigen::VectorXd mean = uniform_matrix(gen, 10, 1, -0.5, 0.5).col(0);
      const Eigen::MatrixXd pert = uniform_matrix(gen, 12, 10, -1, 1);
      const Eigen::VectorXd s = uniform_matrix(gen, 12, 1, 0, 5).col(0);
      const Eigen::VectorXd got = mppi_update(mean, pert, s, 1.3, b);
      CHECK((got - oracle::mppi(mean, pert, s, 1.3, b.lower, b.upper)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("cem update: closed forms and errors") {
    std::mt19937_64 gen(303);
    const Eigen::MatrixXd x = uniform_matrix(gen, 10, 6, -1, 1);
    const CemStats prior{Eigen::VectorXd::Zero(6), Eigen::VectorXd::Ones(6)};
    CemParams all;
    all.elite_fraction = 1.0;
    all.alpha = 1.0;
    all.std_floor = 0.0;
    const CemStats s = cem_update(x, uniform_matrix(gen, 10, 1).col(0), all, prior);
    CHECK((s.mean - x.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-15);

    Eigen::VectorXd costs = Eigen::VectorXd::Constant(10, 5.0);
    costs[7] = -1.0;
    CemParams one;
    one.elite_fraction = 0.1;
    one.std_floor = 1e-3;
    const CemStats j = cem_update(x, costs, one, prior);
    CHECK(j.mean == x.row(7).transpose());
    CHECK((j.std.array() == 1e-3).all());

    CemParams none;
    none.elite_fraction = 0.05;
    CHECK_THROWS_AS(cem_update(x, costs, none, prior), ConfigError);
  }

  TEST_CASE("cem update: sort-and-average oracle") {
    std::mt19937_64 gen(404);
    for (int t = 0; t < 200; ++t) {
      const Eigen::MatrixXd x = uniform_matrix(gen, 40, 8, -2, 2);
      Eigen::VectorXd c = uniform_matrix(gen, 40, 1).col(0);
      c[3] = c[9];  // a tie
      const CemStats prior{uniform_matrix(gen, 8, 1).col(0), uniform_matrix(gen, 8, 1, 0.1, 1).col(0)};
      const CemParams p{0.25, 0.7, 0.05};
      const CemStats got = cem_update(x, c, p, prior);
      const oracle::Cem ref = oracle::cem(x, c, p.elite_fraction, p.alpha, p.std_floor, prior.mean, prior.std);
      CHECK((got.mean - ref.mean).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((got.std - ref.std).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("proposals: rho = 1 ignores the particles") {
    const ControlBounds b = box(-1, 1, 2);
    ProposalConfig cfg;
    cfg.rho = 1.0;
    cfg.local_sigma = Eigen::Vector2d(0.3, 0.3);
    for (GlobalKind k : {GlobalKind::kUniformInBounds, GlobalKind::kBroadGaussian}) {
      cfg.global_kind = k;
      cfg.global_scale = Eigen::Vector2d(1.0, 1.0);
      Rng r1(5), r2(5);
      const Eigen::MatrixXd a = sample_proposals(Eigen::MatrixXd::Zero(3, 10), 50, cfg, b, r1);
      const Eigen::MatrixXd c = sample_proposals(Eigen::MatrixXd::Constant(7, 10, 0.9), 50, cfg, b, r2);
      CHECK(a == c);
      CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
    }
  }

  TEST_CASE("proposals: vanishing noise returns particles") {
    std::mt19937_64 gen(6);
    const ControlBounds b = box(-1, 1, 2);
    const Eigen::MatrixXd z = uniform_matrix(gen, 4, 10, -0.9, 0.9);
    ProposalConfig cfg;
    cfg.rho = 0.0;
    cfg.local_sigma = Eigen::Vector2d(1e-300, 1e-300);
    Rng rng(9);
    const Eigen::MatrixXd y = sample_proposals(z, 40, cfg, b, rng);
    std::vector<int> hits(4, 0);
    for (Eigen::Index k = 0; k < y.rows(); ++k) {
      bool matched = false;
      for (int i = 0; i < 4; ++i)
        if (y.row(k) == z.row(i)) {
          matched = true;
          ++hits[static_cast<std::size_t>(i)];
        }
      CHECK(matched);
    }
    for (int h : hits) CHECK(h > 0);
  }

  TEST_CASE("proposals: AR(1) lag-one autocorrelation") {
    const ControlBounds b = box(-1e6, 1e6, 1);
    ProposalConfig cfg;
    cfg.rho = 0.0;
    cfg.local_sigma = Eigen::VectorXd::Constant(1, 0.5);
    cfg.temporal_correlation = 0.9;
    Rng rng(2024);
    const Eigen::MatrixXd y = sample_proposals(Eigen::MatrixXd::Zero(1, 30), 10000, cfg, b, rng);
    double num = 0.0, den = 0.0, var0 = 0.0;
    for (Eigen::Index k = 0; k < y.rows(); ++k) {
      for (Eigen::Index t = 0; t + 1 < y.cols(); ++t) {
        num += y(k, t) * y(k, t + 1);
        den += y(k, t) * y(k, t);
      }
      var0 += y(k, 0) * y(k, 0);
    }
    CHECK(std::abs(num / den - 0.9) < 0.03);
    // Stationary from the first step.
    CHECK(std::sqrt(var0 / 10000.0) == doctest::Approx(0.5).epsilon(0.03));
  }

  TEST_CASE("proposals: invalid config") {
    const ControlBounds b = box(-1, 1, 2);
    ProposalConfig cfg;
    cfg.local_sigma = Eigen::Vector2d(0.3, 0.3);
    Rng rng(1);
    cfg.rho = 1.5;
    CHECK_THROWS_AS(sample_proposals(Eigen::MatrixXd::Zero(1, 4), 3, cfg, b, rng), ConfigError);
    cfg.rho = 0.1;
    cfg.temporal_correlation = 1.0;
    CHECK_THROWS_AS(sample_proposals(Eigen::MatrixXd::Zero(1, 4), 3, cfg, b, rng), ConfigError);
    cfg.temporal_correlation = 0.5;
    cfg.local_sigma = Eigen::Vector2d(0.3, 0.0);
    CHECK_THROWS_AS(sample_proposals(Eigen::MatrixXd::Zero(1, 4), 3, cfg, b, rng), ConfigError);
  }

  TEST_CASE("shift repeats the last control") {
    Eigen::MatrixXd s(2, 6);
    s << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    shift_sequences(s, 2);
    Eigen::MatrixXd e(2, 6);
    e << 3, 4, 5, 6, 5, 6, 9, 10, 11, 12, 11, 12;
    CHECK(s == e);
    CHECK(unflatten(s.row(0), 2)(2, 1) == 6.0);
  }

  TEST_CASE("otmpc cycle: one particle matches the mppi update on the same batch") {
    const auto env = bimodal_toy(kBimodalWeights);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      OtMpcConfig o;
      o.horizon = 20;
      o.num_particles = 1;
      o.num_proposals = 100;
      o.inner_iterations = 1;
      o.beta = 0.05;
      o.init = InitKind::kZeros;
      o.scd.eta = 1.0;
      o.scd.epsilon_rule = EpsilonRule::kMaxMultiple;
      o.scd.epsilon_multiplier = 1e6;
      o.proposal = o.proposal.with_defaults(env->bounds());
      MppiConfig m;
      m.horizon = 20;
      m.num_samples = 100;
      m.iterations = 1;
      m.beta = 0.05;
      m.proposal = o.proposal;
      Rng ra(seed), rb(seed);
      OtMpcController oc(o, *env, ra);
      MppiController mc(m, *env);
      const StateVector x = env->initial_state();
      const CycleResult a = oc.cycle(*env, x, ra);
      const CycleResult b = mc.cycle(*env, x, rb);
      CHECK((a.action - b.action).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((a.planned - b.planned).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  TEST_CASE("otmpc cycle: identical proposals pull every particle onto them") {
    const LineEnv env(0.7, 0.7, 1.0);
    OtMpcConfig cfg;
    cfg.horizon = 5;
    cfg.num_particles = 4;
    cfg.num_proposals = 10;
    cfg.inner_iterations = 1;
    cfg.scd.eta = 1.0;
    cfg.proposal.local_sigma = Eigen::VectorXd::Constant(1, 0.1);
    cfg.proposal.rho = 1.0;
    std::mt19937_64 gen(1);
    Rng rng(3);
    const OtMpcCycleOutput out = otmpc_cycle(uniform_matrix(gen, 4, 5, -1, 1), env.initial_state(), env, cfg, rng);
    CHECK((out.ensemble.array() == 0.7).all());
    CHECK(out.action[0] == 0.7);
  }

  TEST_CASE("otmpc cycle: lowest index wins ties") {
    const LineEnv env(-1, 1, 0.0);
    OtMpcConfig cfg;
    cfg.horizon = 4;
    cfg.num_particles = 3;
    cfg.num_proposals = 8;
    cfg.inner_iterations = 1;
    cfg.proposal.local_sigma = Eigen::VectorXd::Constant(1, 0.1);
    Rng rng(4);
    const OtMpcCycleOutput out = otmpc_cycle(Eigen::MatrixXd::Zero(3, 4), env.initial_state(), env, cfg, rng);
    CHECK(out.selected == 0);
  }

  TEST_CASE("bimodal toy: one cycle leaves particles steering both ways") {
    const BenchmarkConfig cfg = bimodal_config("otmpc");
    int both = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      Rng env_rng(derive_seed(1, s));
      const auto env = make_environment(cfg, env_rng);
      Rng rng(derive_seed(2, s));
      auto c = make_controller(cfg, *env, rng);
      const CycleResult r = c->cycle(*env, env->initial_state(), rng);
      REQUIRE(r.planned.rows() == 8);
      const bool left = (r.planned.col(1).array() > 0.0).any();
      const bool right = (r.planned.col(1).array() < 0.0).any();
      both += left && right;
    }
    CHECK(both >= 90);
  }

  TEST_CASE("bimodal toy: otmpc keeps single-mode steering, mppi averages it away") {
    const BenchmarkConfig co = bimodal_config("otmpc");
    const BenchmarkConfig cm = bimodal_config("mppi");
    std::vector<double> ot_ratio, mp_ratio;
    for (std::uint64_t s = 0; s < 100; ++s) {
      Rng env_rng(derive_seed(1, s));
      const auto env = make_environment(co, env_rng);
      const StateVector x = env->initial_state();
      Rng ra(derive_seed(2, s)), rb(derive_seed(2, s));
      auto oc = make_controller(co, *env, ra);
      auto mc = make_controller(cm, *env, rb);
      const double ot = std::abs(oc->cycle(*env, x, ra).action[1]);
      const double mp = std::abs(mc->cycle(*env, x, rb).action[1]);
      // Best single proposal from the same mixture about a zero sequence.
      const auto* otc = dynamic_cast<const OtMpcController*>(oc.get());
      REQUIRE(otc != nullptr);
      Rng rr(derive_seed(3, s));
      const Eigen::MatrixXd y = sample_proposals(Eigen::MatrixXd::Zero(1, otc->config().horizon * 2), 1600,
                                                 otc->config().proposal, env->bounds(), rr);
      Eigen::Index best = 0;
      rollout_costs(*env, x, y).minCoeff(&best);
      const double ref = std::abs(y(best, 1));
      ot_ratio.push_back(ot / ref);
      mp_ratio.push_back(mp / ref);
    }
    CHECK(median(ot_ratio) >= 0.5);
    CHECK(median(mp_ratio) < 0.25);
  }

  TEST_CASE("mppi on a flat landscape is an unbiased random walk") {
    const LineEnv env(-1, 1, 0.0);
    MppiConfig cfg;
    cfg.horizon = 5;
    cfg.num_samples = 16;
    cfg.iterations = 1;
    cfg.proposal.rho = 0.0;
    cfg.proposal.local_sigma = Eigen::VectorXd::Constant(1, 0.2);
    double sum = 0.0, sum2 = 0.0;
    const int n = 1000;
    for (int s = 0; s < n; ++s) {
      MppiController c(cfg, env);
      Rng rng(derive_seed(77, static_cast<std::uint64_t>(s)));
      const double a = c.cycle(env, env.initial_state(), rng).action[0];
      sum += a;
      sum2 += a * a;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / (n - 1));
    CHECK(se > 0.0);
    CHECK(std::abs(mean) < 3.0 * se);
  }

  TEST_CASE("warm start shifts the planned ensemble and keeps bounds") {
    const auto env = bimodal_toy(kBimodalWeights);
    OtMpcConfig cfg;
    cfg.horizon = 15;
    cfg.num_particles = 5;
    cfg.num_proposals = 60;
    cfg.inner_iterations = 2;
    cfg.beta = 0.05;
    Rng rng(8);
    OtMpcController c(cfg, *env, rng);
    StateVector x = env->initial_state();
    const ControlBounds& b = env->bounds();
    for (int step = 0; step < 6; ++step) {
      const CycleResult r = c.cycle(*env, x, rng);
      const Eigen::MatrixXd next = c.candidates();
      CHECK(next.leftCols(28) == r.planned.rightCols(28));
      CHECK(next.rightCols(2) == r.planned.rightCols(2));
      CHECK(b.contains(r.action.cast<double>()));
      for (Eigen::Index i = 0; i < next.rows(); ++i)
        for (Eigen::Index k = 0; k < next.cols(); ++k) {
          CHECK(next(i, k) >= b.lower[k % 2]);
          CHECK(next(i, k) <= b.upper[k % 2]);
        }
      x = env->step(x, r.action);
    }
  }

  TEST_CASE("same seed gives bit-identical action traces") {
    for (const std::string id : {"otmpc", "mppi", "cem"}) {
      const BenchmarkConfig cfg = bimodal_config(id);
      std::vector<std::vector<double>> traces;
      for (int rep = 0; rep < 2; ++rep) {
        Rng env_rng(11);
        const auto env = make_environment(cfg, env_rng);
        Rng rng(12);
        auto c = make_controller(cfg, *env, rng);
        StateVector x = env->initial_state();
        std::vector<double> tr;
        for (int t = 0; t < 3; ++t) {
          const CycleResult r = c->cycle(*env, x, rng);
          tr.push_back(r.action[0]);
          tr.push_back(r.action[1]);
          x = env->step(x, r.action);
        }
        traces.push_back(tr);
      }
      CHECK(traces[0] == traces[1]);
    }
  }

  TEST_CASE("config validation") {
    OtMpcConfig o;
    o.proposal.local_sigma = Eigen::Vector2d(0.1, 0.1);
    CHECK_NOTHROW(o.validate(2));
    o.beta = 0.0;
    CHECK_THROWS_AS(o.validate(2), ConfigError);
    o.beta = 1.0;
    o.num_particles = 0;
    CHECK_THROWS_AS(o.validate(2), ConfigError);
    CemConfig c;
    c.initial_std = Eigen::Vector2d(1.0, 1.0);
    c.num_samples = 5;
    c.cem.elite_fraction = 0.1;
    CHECK_THROWS_AS(c.validate(2), ConfigError);
  }
}
