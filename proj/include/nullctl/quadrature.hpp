#pragma once

#include <vector>

namespace nullctl {

/// Composite Gauss-Legendre rule on [0, horizon]: `panels` equal panels with
/// four Gauss points each. Nodes are strictly increasing and interior.
struct QuadGrid {
  std::vector<double> nodes;
  std::vector<double> weights;
  double horizon = 0.0;
  int panels = 0;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

[[nodiscard]] QuadGrid make_quad_grid(double horizon, int panels);

}  // namespace nullctl
