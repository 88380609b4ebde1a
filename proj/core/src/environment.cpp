#include "otmpc/environment.hpp"

#include "otmpc/errors.hpp"

namespace otmpc {

bool ControlBounds::contains(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  if (u.size() != dim()) return false;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    if (!(u[j] >= lower[j] && u[j] <= upper[j])) return false;
  }
  return true;
}

void ControlBounds::clamp_sequence(Eigen::Ref<Eigen::VectorXd> flat) const {
  const Eigen::Index m = dim();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = clamp(i % m, flat[i]);
}

double Environment::sequence_cost(const StateVector& x0, const double* controls,
                                  int horizon) const {
  const int m = control_dim();
  StateVector x = x0;
  ControlVector u(m);
  bool crashed = false;
  double total = 0.0;
  for (int t = 0; t < horizon; ++t) {
    for (int j = 0; j < m; ++j) u[j] = controls[t * m + j];
    total += running_cost(x, u);
    crashed = crashed || in_collision(x);
    if (!crashed) {
      x = step(x, u);
      if (!x.allFinite()) throw EnvironmentFault("non-finite state from dynamics", t);
    }
  }
  return total + terminal_cost(x);
}

}  // namespace otmpc
