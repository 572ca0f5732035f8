#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drew/channel.hpp"
#include "drew/pipeline.hpp"
#include "drew/roc.hpp"

namespace drew {

/// Number of standard errors allowed by every statistical check.
inline constexpr double kSigmaBand = 3.0;

struct EvalConfig {
  QueryConfig query;
  std::size_t n_queries = 1000;
  std::uint64_t seed = 0;
  std::vector<std::size_t> top_p = {2, 5, 10, 20};
  std::size_t roc_in = 1000;
  std::size_t roc_out = 1000;
  bool include_roc = true;
};

/// Held-out embeddings standing in for data that was never stored.
EmbeddingMatrix make_holdout(std::size_t count, int dim, std::uint64_t seed);

/// i.i.d. Gaussian rows (uniform directions after normalization), ids 0..N-1.
std::vector<RawRow> synthetic_rows(std::size_t count, int dim, std::uint64_t seed);

/// `count` attacked queries from entries drawn uniformly with replacement.
std::vector<Query> sample_queries(const Store& store, const AttackConfig& attack, std::size_t count,
                                  AttackStreams& streams, const EmbeddingMatrix* holdout);

struct EpsilonEstimate {
  std::size_t n_trials = 0;
  std::size_t n_reliable = 0;
  std::size_t n_wrong_reliable = 0;

  /// P(c != c_gt | r = 1); 0 when no trial was reliable.
  double value() const noexcept {
    return n_reliable == 0 ? 0.0 : static_cast<double>(n_wrong_reliable) / static_cast<double>(n_reliable);
  }
  double stderr_value() const noexcept;
  /// Fewer than 1% of trials (or none) were flagged reliable.
  bool low_support() const noexcept { return n_reliable == 0 || n_reliable * 100 < n_trials; }
};

EpsilonEstimate estimate_epsilon_r(const Store& store, const AttackConfig& attack, std::size_t n_trials,
                                   std::uint64_t seed, const QueryConfig& cfg = {});

struct EpsilonPoint {
  double p_flip = 0.0;
  EpsilonEstimate estimate;
};

std::vector<EpsilonPoint> epsilon_r_curve(const Store& store, std::span<const double> p_grid,
                                          std::size_t n_trials, std::uint64_t seed, const QueryConfig& cfg = {});

/// (alpha_p - alpha) * (1 - 2^-k)^(p-1), one term of the top-p bound.
double top_p_bound_term(double alpha, double alpha_p, std::size_t p, int k);

struct RocComparison {
  RocResult drew;
  RocResult naive;
};

/// Counts from one paired run of both methods over the same queries.
struct AttackRecord {
  AttackConfig attack;
  std::uint64_t seed = 0;
  std::size_t n_queries = 0;
  int k = 0;
  std::vector<std::size_t> top_p;

  std::size_t drew_correct = 0;
  std::size_t naive_correct = 0;
  std::size_t reliable = 0;
  std::size_t reliable_wrong_cluster = 0;
  std::size_t oracle_correct = 0;          // x* = x_i under true-cluster routing
  std::size_t oracle_gain = 0;             // x* = x_i and naive wrong
  std::size_t gain_events = 0;             // oracle_gain and r = 1 and c = c_gt
  std::size_t unreliable_mismatch = 0;     // drew != naive while r = 0 (must be 0)
  std::size_t empty_cluster_fallbacks = 0;
  std::vector<std::size_t> top_p_hits;     // aligned with top_p
  std::size_t no_match_drew = 0;
  std::size_t no_match_naive = 0;
  // Sums over queries of d_i = drew_i - naive_i and s_i = d_i - gain_i + loss_i.
  long long diff_sum = 0;
  long long diff_sq = 0;
  long long slack_sum = 0;
  long long slack_sq = 0;

  std::optional<RocComparison> roc;

  double acc_drew() const;
  double acc_naive() const;
  double difference() const;
  double difference_stderr() const;
  double slack_stderr() const;
  double p_reliable() const;
  double p_correct_cluster_given_reliable() const;
  EpsilonEstimate epsilon() const;
  double gain_term() const;
  double loss_term() const;
  double alpha() const;
  std::map<std::size_t, double> alpha_p() const;
  double top_p_bound_lhs() const;
  double top_p_bound() const;
  std::size_t top_p_bound_best_p() const;
  double top_p_bound_stderr() const;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Paired evaluation of one attack: drew and naive on the same queries,
/// plus the oracle-routed and top-p quantities the bounds are built from.
AttackRecord evaluate_attack(const Store& store, const AttackConfig& attack, const EvalConfig& cfg,
                             const EmbeddingMatrix& holdout);

struct GainLossTerms {
  double gain = 0.0;
  double loss = 0.0;
  double difference = 0.0;
  double stderr_value = 0.0;
  bool holds = false;
};

GainLossTerms gain_loss_decomposition(const Store& store, const AttackConfig& attack, std::size_t n_queries,
                           std::uint64_t seed, const QueryConfig& cfg = {});
GainLossTerms gain_loss_terms(const AttackRecord& record);

struct TopPBoundTerms {
  double alpha = 0.0;
  std::map<std::size_t, double> alpha_p;
  double lhs = 0.0;
  double bound = 0.0;
  std::size_t best_p = 0;
  double stderr_value = 0.0;
  bool holds = false;
};

/// Oracle-routed check of the top-p bound at k cluster bits. Clusters for k
/// come from the store's nested partition, so k = store k reproduces the
/// store's own clusters.
TopPBoundTerms top_p_bound_check(const Store& store, const AttackConfig& attack, int k, std::span<const std::size_t> p_list,
                         std::size_t n_queries, std::uint64_t seed);

RocComparison roc_eval(const Store& store, const AttackConfig& attack, std::size_t n_in, std::size_t n_out,
                       std::uint64_t seed, const QueryConfig& cfg, const EmbeddingMatrix& holdout);

struct CapacityRow {
  double p_flip = 0.0;
  double rate = 0.0;        // 1 - H(p)
  double redundancy = 0.0;  // 1 / rate
  bool unbounded = false;   // redundancy above the reporting cap
};

inline constexpr double kRedundancyCap = 1e3;

std::vector<CapacityRow> capacity_curve(std::span<const double> p_grid);

struct SubsetAccuracyRow {
  int k = 0;
  std::size_t correct = 0;
  std::size_t n_queries = 0;
  double accuracy() const { return n_queries ? static_cast<double>(correct) / static_cast<double>(n_queries) : 0.0; }
};

/// Accuracy with the scope forced to the ground-truth cluster, per k (k = 0
/// is the whole store).
std::vector<SubsetAccuracyRow> cluster_subset_accuracy(const Store& store, const AttackConfig& attack,
                                                       std::span<const int> k_grid, std::size_t n_queries,
                                                       std::uint64_t seed);

/// Invariant checks on one paired record: fallback identity, the gain/loss
/// bound on the accuracy difference, never-worse and the oracle-routed
/// top-p bound.
std::vector<CheckResult> record_checks(const AttackRecord& record);
/// drew AUROC >= naive AUROC - band, band = tolerance + P(r = 1, c != c_gt)
/// plus its sampling noise: misrouted in-dataset queries are the only way
/// routing can lower an in-dataset score below every out-of-dataset one.
CheckResult roc_check(const AttackRecord& record, double tolerance = 0.01);

struct EvalReport {
  nlohmann::json meta;
  std::vector<AttackRecord> records;
  std::vector<EpsilonPoint> epsilon_curve;
  std::vector<CapacityRow> capacity;
  std::vector<SubsetAccuracyRow> cluster_subset;
  std::vector<CheckResult> checks;

  bool all_passed() const;
};

EvalReport run_accuracy_eval(const Store& store, std::span<const AttackConfig> suite, const EvalConfig& cfg,
                             const EmbeddingMatrix& holdout);

nlohmann::json to_json(const AttackRecord& record);
nlohmann::json to_json(const EvalReport& report);
/// Rows `attack,p_A,sigma,metric,value,stderr,seed`.
std::string curves_csv(const EvalReport& report);

/// Golden epsilon_r curve file: the parameters it was calibrated with plus
/// raw counts per flip rate.
nlohmann::json epsilon_golden_json(std::span<const EpsilonPoint> curve, const PolarCodeSpec& spec,
                                   const QueryConfig& cfg, std::size_t n_trials, std::uint64_t seed);

enum class GoldenStatus { pass, fail, calibration_required };

struct GoldenComparison {
  GoldenStatus status = GoldenStatus::calibration_required;
  std::vector<CheckResult> checks;
};

/// Two-sample binomial comparison at kSigmaBand per flip rate.
GoldenComparison compare_epsilon_golden(const nlohmann::json& golden, std::span<const EpsilonPoint> measured,
                                        const PolarCodeSpec& spec, const QueryConfig& cfg);

/// Flip rates of the calibrated epsilon_r curve: 0.05, 0.10, ..., 0.30.
std::vector<double> default_epsilon_grid();

}  // namespace drew
