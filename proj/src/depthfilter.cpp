#include "fishmap/depthfilter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fishmap {

void FilterConfig::validate() const {
  if (!(alphaUpper > 0 && alphaUpper <= 1 && alphaLower > 0 && alphaLower <= 1)) {
    throw std::invalid_argument("FilterConfig: alpha must lie in (0, 1]");
  }
  if (!(beta >= 1)) throw std::invalid_argument("FilterConfig: beta must be >= 1");
  if (!(gamma > 0)) throw std::invalid_argument("FilterConfig: gamma must be positive");
  if (!(delta > 0 && delta <= 1)) throw std::invalid_argument("FilterConfig: delta must lie in (0, 1]");
  if (consistencyWindow < 3 || consistencyWindow % 2 == 0) {
    throw std::invalid_argument("FilterConfig: consistency window must be odd and >= 3");
  }
}

DepthMap bestCostFilter(const DepthMap& depth, const FilterConfig& cfg) {
  DepthMap out = depth;
  const int horizon = cfg.horizonRow < 0 ? depth.height() / 2 : cfg.horizonRow;
  for (int r = 0; r < depth.height(); ++r) {
    const double alpha = r < horizon ? cfg.alphaUpper : cfg.alphaLower;
    for (int c = 0; c < depth.width(); ++c) {
      if (out.valid(r, c) && out.bestCost(r, c) > alpha) out.invalidate(r, c);
    }
  }
  return out;
}

DepthMap uniquenessFilter(const DepthMap& depth, const FilterConfig& cfg) {
  DepthMap out = depth;
  for (int r = 0; r < depth.height(); ++r) {
    for (int c = 0; c < depth.width(); ++c) {
      if (!out.valid(r, c)) continue;
      const double ratio = double(out.secondCost(r, c)) / std::max(double(out.bestCost(r, c)), 1e-6);
      if (!(ratio >= cfg.beta)) out.invalidate(r, c);
    }
  }
  return out;
}

DepthMap consistencyFilter(const DepthMap& depth, const FilterConfig& cfg) {
  DepthMap out = depth;
  const int half = cfg.consistencyWindow / 2;
  const int neighbors = cfg.consistencyWindow * cfg.consistencyWindow - 1;
  const int W = depth.width(), H = depth.height();
#pragma omp parallel for
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!depth.valid(r, c)) continue;
      const float center = depth.depth(r, c);
      int consistent = 0;
      for (int dr = -half; dr <= half; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= H) continue;
        for (int dc = -half; dc <= half; ++dc) {
          const int cc = c + dc;
          if ((dr == 0 && dc == 0) || cc < 0 || cc >= W || !depth.valid(rr, cc)) continue;
          if (std::abs(depth.depth(rr, cc) - center) < cfg.gamma) ++consistent;
        }
      }
      if (double(consistent) / neighbors < cfg.delta) out.invalidate(r, c);
    }
  }
  return out;
}

DepthMap applyFilters(const DepthMap& depth, const FilterConfig& cfg, const FilterToggles& toggles) {
  cfg.validate();
  DepthMap out = depth;
  if (toggles.bestCost) out = bestCostFilter(out, cfg);
  if (toggles.uniqueness) out = uniquenessFilter(out, cfg);
  if (toggles.consistency) out = consistencyFilter(out, cfg);
  return out;
}

}  // namespace fishmap
