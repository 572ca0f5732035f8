#include "drew/polar_code.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace drew {

namespace {

bool is_sorted_unique_in_range(const std::vector<int>& v, int limit) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < 0 || v[i] >= limit) return false;
    if (i > 0 && v[i] <= v[i - 1]) return false;
  }
  return true;
}

std::vector<Bit> frozen_mask(const PolarCodeSpec& spec) {
  std::vector<Bit> mask(static_cast<std::size_t>(spec.block_len), 0);
  for (int i : spec.frozen_set) mask[static_cast<std::size_t>(i)] = 1;
  return mask;
}

// Recursive SC over one sub-block. `llr` holds the channel-side LLRs of the
// sub-block, `x` receives the re-encoded hard decisions, `depth` indexes the
// scratch buffers and `first` is the input index of the sub-block's first bit.
class ScDecoder {
 public:
  ScDecoder(const std::vector<Bit>& frozen, CheckNodeRule rule, int block_len)
      : frozen_(frozen), rule_(rule), u_(static_cast<std::size_t>(block_len), 0) {
    for (int h = block_len / 2; h >= 1; h /= 2) scratch_.emplace_back(static_cast<std::size_t>(h));
  }

  void run(std::span<const double> llr, std::span<Bit> x, std::size_t depth, std::size_t first) {
    const std::size_t len = llr.size();
    if (len == 1) {
      leaf(llr[0], x[0], first);
      return;
    }
    const std::size_t h = len / 2;
    std::span<double> child(scratch_[depth].data(), h);
    for (std::size_t j = 0; j < h; ++j) child[j] = check(llr[j], llr[j + h]);
    run(child, x.subspan(0, h), depth + 1, first);
    for (std::size_t j = 0; j < h; ++j) child[j] = variable_node(llr[j], llr[j + h], x[j]);
    run(child, x.subspan(h, h), depth + 1, first + h);
    for (std::size_t j = 0; j < h; ++j) x[j] ^= x[j + h];
  }

  const std::vector<Bit>& decisions() const { return u_; }
  const std::vector<double>& info_llrs() const { return info_llrs_; }

 private:
  double check(double a, double b) const {
    return rule_ == CheckNodeRule::exact ? check_node_exact(a, b) : check_node_min_sum(a, b);
  }

  void leaf(double llr, Bit& x, std::size_t index) {
    Bit u = 0;
    if (!frozen_[index]) {
      u = llr < 0.0 ? 1 : 0;
      info_llrs_.push_back(llr);
    }
    u_[index] = u;
    x = u;
  }

  const std::vector<Bit>& frozen_;
  CheckNodeRule rule_;
  std::vector<std::vector<double>> scratch_;
  std::vector<Bit> u_;
  std::vector<double> info_llrs_;
};

}  // namespace

std::vector<int> PolarCodeSpec::information_set() const {
  std::vector<int> info;
  info.reserve(static_cast<std::size_t>(k));
  auto it = frozen_set.begin();
  for (int i = 0; i < block_len; ++i) {
    if (it != frozen_set.end() && *it == i) {
      ++it;
      continue;
    }
    info.push_back(i);
  }
  return info;
}

void PolarCodeSpec::validate() const {
  require(k >= 1 && k <= n, "polar code requires 1 <= k <= n");
  require(design_p > 0.0 && design_p < 0.5, "design_p must lie in (0, 0.5)");
  require(block_len >= 1 && std::has_single_bit(static_cast<unsigned>(block_len)),
          "block_len must be a power of two");
  require(n <= block_len && (block_len == 1 || n > block_len / 2),
          "block_len must be the smallest power of two >= n");
  require(static_cast<int>(frozen_set.size()) + k == block_len, "frozen set size must be block_len - k");
  require(static_cast<int>(shortened_set.size()) == block_len - n,
          "shortened set size must be block_len - n");
  require(is_sorted_unique_in_range(frozen_set, block_len), "frozen set must be sorted, unique, in range");
  require(is_sorted_unique_in_range(shortened_set, block_len),
          "shortened set must be sorted, unique, in range");
  for (int s = 0; s < block_len - n; ++s) {
    require(shortened_set[static_cast<std::size_t>(s)] == n + s,
            "shortened set must be the trailing block_len - n positions");
  }
  for (int s : shortened_set) {
    require(std::binary_search(frozen_set.begin(), frozen_set.end(), s),
            "shortened positions must be frozen");
  }
}

nlohmann::json to_json(const PolarCodeSpec& spec) {
  return nlohmann::json{{"k", spec.k},
                        {"n", spec.n},
                        {"block_len", spec.block_len},
                        {"design_p", spec.design_p},
                        {"frozen_set", spec.frozen_set},
                        {"shortened_set", spec.shortened_set}};
}

PolarCodeSpec polar_spec_from_json(const nlohmann::json& doc) {
  PolarCodeSpec spec;
  try {
    spec.k = doc.at("k").get<int>();
    spec.n = doc.at("n").get<int>();
    spec.block_len = doc.at("block_len").get<int>();
    spec.design_p = doc.at("design_p").get<double>();
    spec.frozen_set = doc.at("frozen_set").get<std::vector<int>>();
    spec.shortened_set = doc.at("shortened_set").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, std::string("malformed polar code spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::vector<double> bhattacharyya_parameters(int block_len, double design_p,
                                             std::span<const int> shortened_set) {
  require(block_len >= 1 && std::has_single_bit(static_cast<unsigned>(block_len)),
          "block_len must be a power of two");
  require(design_p > 0.0 && design_p < 0.5, "design_p must lie in (0, 0.5)");
  const auto len = static_cast<std::size_t>(block_len);
  std::vector<double> z(len, 2.0 * std::sqrt(design_p * (1.0 - design_p)));
  for (int s : shortened_set) z.at(static_cast<std::size_t>(s)) = 0.0;

  // Outermost butterfly stage first: that is the split the decoder sees first.
  for (std::size_t h = len / 2; h >= 1; h /= 2) {
    for (std::size_t base = 0; base < len; base += 2 * h) {
      for (std::size_t j = base; j < base + h; ++j) {
        const double a = z[j];
        const double b = z[j + h];
        z[j] = a + b - a * b;
        z[j + h] = a * b;
      }
    }
  }
  return z;
}

PolarCodeSpec construct_code(int k, int n, double design_p) {
  require(n >= 1, "key length n must be positive");
  require(k >= 1, "information length k must be positive");
  require(k <= n, "information length k must not exceed key length n");
  require(design_p > 0.0 && design_p < 0.5, "design_p must lie in (0, 0.5)");

  PolarCodeSpec spec;
  spec.k = k;
  spec.n = n;
  spec.design_p = design_p;
  spec.block_len = static_cast<int>(std::bit_ceil(static_cast<unsigned>(n)));
  for (int i = n; i < spec.block_len; ++i) spec.shortened_set.push_back(i);

  const std::vector<double> z = bhattacharyya_parameters(spec.block_len, design_p, spec.shortened_set);

  // Most reliable first; equal parameters prefer the later index.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double za = z[static_cast<std::size_t>(a)];
    const double zb = z[static_cast<std::size_t>(b)];
    if (za != zb) return za < zb;
    return a > b;
  });

  std::vector<Bit> info(static_cast<std::size_t>(spec.block_len), 0);
  for (int j = 0; j < k; ++j) info[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = 1;
  for (int i = 0; i < spec.block_len; ++i) {
    if (!info[static_cast<std::size_t>(i)]) spec.frozen_set.push_back(i);
  }
  spec.validate();
  return spec;
}

void polar_transform(std::span<Bit> bits) {
  const std::size_t len = bits.size();
  require(len >= 1 && std::has_single_bit(len), "polar transform length must be a power of two");
  for (std::size_t h = 1; h < len; h *= 2) {
    for (std::size_t base = 0; base < len; base += 2 * h) {
      for (std::size_t j = base; j < base + h; ++j) bits[j] ^= bits[j + h];
    }
  }
}

WatermarkKey encode(const PolarCodeSpec& spec, const ClusterCode& code) {
  if (static_cast<int>(code.size()) != spec.k) {
    fail(Errc::invalid_argument, "cluster code length " + std::to_string(code.size()) +
                                     " does not match k=" + std::to_string(spec.k));
  }
  std::vector<Bit> u(static_cast<std::size_t>(spec.block_len), 0);
  const std::vector<int> info = spec.information_set();
  for (std::size_t j = 0; j < info.size(); ++j) u[static_cast<std::size_t>(info[j])] = code[j];
  polar_transform(u);
  u.resize(static_cast<std::size_t>(spec.n));
  return WatermarkKey(std::move(u));
}

std::vector<double> llr_from_key(const PolarCodeSpec& spec, const WatermarkKey& key, double channel_p) {
  require(channel_p > 0.0 && channel_p < 0.5, "channel_p must lie in (0, 0.5)");
  if (static_cast<int>(key.size()) != spec.n) {
    fail(Errc::invalid_argument, "key length " + std::to_string(key.size()) +
                                     " does not match n=" + std::to_string(spec.n));
  }
  const double magnitude = std::log((1.0 - channel_p) / channel_p);
  std::vector<double> llr(static_cast<std::size_t>(spec.block_len), kKnownBitLlr);
  for (std::size_t i = 0; i < key.size(); ++i) llr[i] = key[i] ? -magnitude : magnitude;
  return llr;
}

std::vector<double> noiseless_llrs(const PolarCodeSpec& spec, const WatermarkKey& key) {
  require(static_cast<int>(key.size()) == spec.n, "key length does not match n");
  std::vector<double> llr(static_cast<std::size_t>(spec.block_len), kKnownBitLlr);
  for (std::size_t i = 0; i < key.size(); ++i) llr[i] = key[i] ? -kKnownBitLlr : kKnownBitLlr;
  return llr;
}

double check_node_exact(double a, double b) noexcept {
  // 2 atanh(tanh(a/2) tanh(b/2)) rewritten with log1p so large magnitudes
  // never saturate to +/-inf.
  const double abs_a = std::fabs(a);
  const double abs_b = std::fabs(b);
  const double magnitude = std::min(abs_a, abs_b) + std::log1p(std::exp(-(abs_a + abs_b))) -
                           std::log1p(std::exp(-std::fabs(abs_a - abs_b)));
  const double sign = (std::signbit(a) != std::signbit(b)) ? -1.0 : 1.0;
  return sign * std::max(0.0, magnitude);
}

double check_node_min_sum(double a, double b) noexcept {
  const double sign = (std::signbit(a) != std::signbit(b)) ? -1.0 : 1.0;
  return sign * std::min(std::fabs(a), std::fabs(b));
}

std::string_view to_string(ReliabilityMode mode) noexcept {
  return mode == ReliabilityMode::last_bit ? "last-bit" : "min-bit";
}

ReliabilityMode reliability_mode_from_string(std::string_view text) {
  if (text == "last-bit") return ReliabilityMode::last_bit;
  if (text == "min-bit") return ReliabilityMode::min_bit;
  fail(Errc::invalid_argument, "reliability mode must be 'last-bit' or 'min-bit'");
}

DecodeOutcome decode(const PolarCodeSpec& spec, std::span<const double> llrs, const DecoderOptions& options) {
  if (static_cast<int>(llrs.size()) != spec.block_len) {
    fail(Errc::invalid_argument, "LLR vector length " + std::to_string(llrs.size()) +
                                     " does not match block_len=" + std::to_string(spec.block_len));
  }
  for (double v : llrs) require(std::isfinite(v), "LLR input must be finite");
  require(options.threshold >= 0.0, "reliability threshold must be nonnegative");

  const std::vector<Bit> frozen = frozen_mask(spec);
  ScDecoder sc(frozen, options.check_node, spec.block_len);
  std::vector<Bit> x(static_cast<std::size_t>(spec.block_len), 0);
  sc.run(llrs, x, 0, 0);

  const std::vector<int> info = spec.information_set();
  std::vector<Bit> bits(info.size());
  for (std::size_t j = 0; j < info.size(); ++j) bits[j] = sc.decisions()[static_cast<std::size_t>(info[j])];

  DecodeOutcome out;
  out.code = ClusterCode(std::move(bits));
  const std::vector<double>& decided = sc.info_llrs();
  out.last_bit_score = std::fabs(decided.back());
  out.min_bit_score = std::numeric_limits<double>::infinity();
  for (double v : decided) out.min_bit_score = std::min(out.min_bit_score, std::fabs(v));
  out.reliability_score = options.mode == ReliabilityMode::last_bit ? out.last_bit_score : out.min_bit_score;
  out.reliable = out.reliability_score >= options.threshold;
  return out;
}

}  // namespace drew
