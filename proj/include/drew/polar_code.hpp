#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "drew/bits.hpp"

namespace drew {

inline constexpr double kDefaultDesignP = 0.1;
inline constexpr double kDefaultReliabilityThreshold = 0.5;

/// Channel LLR assigned to positions whose value is known to be zero
/// (shortened codeword bits). Large enough to saturate tanh, small enough to
/// keep every intermediate finite.
inline constexpr double kKnownBitLlr = 1e6;

/// A shortened polar code mapping k information bits to an n-bit key.
///
/// Codewords are x = u * F^{(x)m} with F = [[1,0],[1,1]] in natural (not
/// bit-reversed) order. Because the transform is lower triangular, zeroing
/// the input positions [n, block_len) zeroes the codeword positions
/// [n, block_len), so the shortened set appears in both index spaces and is
/// always part of the frozen set.
struct PolarCodeSpec {
  int k = 0;
  int n = 0;
  int block_len = 0;
  double design_p = kDefaultDesignP;
  std::vector<int> frozen_set;     // sorted, size block_len - k
  std::vector<int> shortened_set;  // sorted, size block_len - n

  /// Information positions in ascending (= decoding) order.
  std::vector<int> information_set() const;

  /// Throws Error(invalid_argument) when any structural invariant is broken.
  void validate() const;

  friend bool operator==(const PolarCodeSpec&, const PolarCodeSpec&) = default;
};

nlohmann::json to_json(const PolarCodeSpec& spec);
PolarCodeSpec polar_spec_from_json(const nlohmann::json& doc);

/// Per-input-position Bhattacharyya parameters for a BSC with crossover
/// `design_p`; shortened codeword positions are treated as perfect (z = 0).
std::vector<double> bhattacharyya_parameters(int block_len, double design_p,
                                             std::span<const int> shortened_set);

PolarCodeSpec construct_code(int k, int n, double design_p = kDefaultDesignP);

WatermarkKey encode(const PolarCodeSpec& spec, const ClusterCode& code);

/// In-place butterfly x = u * F^{(x)m}; `bits.size()` must be a power of two.
void polar_transform(std::span<Bit> bits);

/// BSC soft input for the decoder, length block_len.
std::vector<double> llr_from_key(const PolarCodeSpec& spec, const WatermarkKey& key,
                                 double channel_p);

/// Error-free soft input: every transmitted position at +/-kKnownBitLlr.
std::vector<double> noiseless_llrs(const PolarCodeSpec& spec, const WatermarkKey& key);

enum class ReliabilityMode { last_bit, min_bit };
enum class CheckNodeRule { exact, min_sum };

std::string_view to_string(ReliabilityMode mode) noexcept;
ReliabilityMode reliability_mode_from_string(std::string_view text);

struct DecoderOptions {
  double threshold = kDefaultReliabilityThreshold;
  ReliabilityMode mode = ReliabilityMode::last_bit;
  CheckNodeRule check_node = CheckNodeRule::exact;
};

struct DecodeOutcome {
  ClusterCode code;
  double reliability_score = 0.0;  // per the configured mode
  bool reliable = false;
  double last_bit_score = 0.0;     // |decision LLR| of the final information bit
  double min_bit_score = 0.0;      // min |decision LLR| over information bits
};

/// Successive-cancellation decode with a reliability flag.
DecodeOutcome decode(const PolarCodeSpec& spec, std::span<const double> llrs,
                     const DecoderOptions& options = {});

// Node updates, exposed for testing.
double check_node_exact(double a, double b) noexcept;
double check_node_min_sum(double a, double b) noexcept;
inline double variable_node(double a, double b, Bit u) noexcept { return u ? b - a : b + a; }

}  // namespace drew
