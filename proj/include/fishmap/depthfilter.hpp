#pragma once

#include "fishmap/image.hpp"

namespace fishmap {

struct FilterConfig {
  double alphaUpper = 0.05;
  double alphaLower = 0.3;
  /// Rows above this use alphaUpper; negative means height / 2.
  int horizonRow = -1;
  double beta = 1.2;
  double gamma = 0.5;
  double delta = 0.3;
  int consistencyWindow = 5;

  void validate() const;
};

struct FilterToggles {
  bool bestCost = true;
  bool uniqueness = true;
  bool consistency = true;
};

/// Drops pixels whose best matching cost exceeds the region's alpha.
DepthMap bestCostFilter(const DepthMap& depth, const FilterConfig& cfg);

/// Keeps a pixel iff second / max(best, 1e-6) >= beta.
DepthMap uniquenessFilter(const DepthMap& depth, const FilterConfig& cfg);

/// Drops pixels for which fewer than delta of the window neighbors (center
/// excluded, invalid neighbors counted as inconsistent) lie within gamma.
/// Reads only the input map.
DepthMap consistencyFilter(const DepthMap& depth, const FilterConfig& cfg);

/// Cost, uniqueness, continuity, in that order.
DepthMap applyFilters(const DepthMap& depth, const FilterConfig& cfg, const FilterToggles& toggles = {});

}  // namespace fishmap
