#include "drew/entropy.hpp"

#include <cmath>
#include <limits>

#include <boost/math/tools/roots.hpp>

#include "drew/error.hpp"

namespace drew {

double binary_entropy(double p) {
  require(p >= 0.0 && p <= 1.0, "binary_entropy requires p in [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double capacity_rate(double p_flip) {
  require(p_flip >= 0.0 && p_flip <= 0.5, "capacity_rate requires p in [0, 0.5]");
  return 1.0 - binary_entropy(p_flip);
}

double max_tolerable_flip_rate(double rate) {
  require(rate >= 0.0 && rate <= 1.0, "code rate must lie in [0, 1]");
  if (rate == 1.0) return 0.0;
  if (rate == 0.0) return 0.5;
  auto f = [rate](double p) { return capacity_rate(p) - rate; };
  boost::uintmax_t max_iter = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(
      f, 0.0, 0.5, boost::math::tools::eps_tolerance<double>(52), max_iter);
  return 0.5 * (lo + hi);
}

double min_redundancy(double p_flip) {
  const double c = capacity_rate(p_flip);
  return c > 0.0 ? 1.0 / c : std::numeric_limits<double>::infinity();
}

}  // namespace drew
