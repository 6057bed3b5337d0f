#include "nullctl/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace nullctl {

QuadGrid make_quad_grid(double horizon, int panels) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon: must be positive and finite");
  if (panels < 1) throw std::invalid_argument("quad_nodes: need at least one panel");

  // Four-point Gauss-Legendre abscissae/weights on [-1, 1].
  static const double xi[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                               0.8611363115940526};
  static const double wi[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                               0.3478548451374538};

  QuadGrid grid;
  grid.horizon = horizon;
  grid.panels = panels;
  grid.nodes.reserve(4 * static_cast<std::size_t>(panels));
  grid.weights.reserve(4 * static_cast<std::size_t>(panels));
  const double dt = horizon / panels;
  for (int j = 0; j < panels; ++j) {
    const double a = dt * j;
    const double mid = a + 0.5 * dt;
    for (int i = 0; i < 4; ++i) {
      grid.nodes.push_back(mid + 0.5 * dt * xi[i]);
      grid.weights.push_back(0.5 * dt * wi[i]);
    }
  }
  return grid;
}

}  // namespace nullctl
