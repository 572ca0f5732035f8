#pragma once

namespace drew {

/// H(p) in bits, with H(0) = H(1) = 0.
double binary_entropy(double p);

/// Shannon limit on the code rate k/n for a channel that flips each bit with
/// probability p_flip: 1 - H(p_flip).
double capacity_rate(double p_flip);

/// Largest flip rate in [0, 0.5] the given code rate can tolerate, i.e. the
/// root of 1 - H(p) = rate.
double max_tolerable_flip_rate(double rate);

/// Minimum redundancy n/k = 1 / (1 - H(p_flip)); +inf at p_flip = 0.5.
double min_redundancy(double p_flip);

}  // namespace drew
