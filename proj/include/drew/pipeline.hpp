#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drew/channel.hpp"
#include "drew/embedding_store.hpp"
#include "drew/polar_code.hpp"

namespace drew {

struct QueryConfig {
  double reliability_threshold = kDefaultReliabilityThreshold;
  double tau_r = -1.0;  // similarity below this is reported as no match
  ReliabilityMode reliability_mode = ReliabilityMode::last_bit;
  CheckNodeRule check_node = CheckNodeRule::exact;

  void validate() const;
  DecoderOptions decoder_options() const {
    return DecoderOptions{reliability_threshold, reliability_mode, check_node};
  }
};

struct RoutingDecision {
  ClusterCode code;
  double reliability_score = 0.0;
  bool reliable = false;
};

struct QueryResult {
  std::optional<EntryId> matched;      // nullopt is NO_MATCH
  std::optional<double> similarity;    // nullopt only when the scope was empty
  std::optional<RoutingDecision> routing;  // absent for the naive baseline
  std::size_t scope_size = 0;
  bool empty_cluster_fallback = false;  // decoded cluster was empty, searched everything

  bool reliable() const noexcept { return routing && routing->reliable; }
  friend bool same_outcome(const QueryResult& a, const QueryResult& b) {
    return a.matched == b.matched && a.similarity == b.similarity && a.scope_size == b.scope_size;
  }
};

/// Random partition into 2^k clusters and key attachment. Injecting the key
/// into the media itself is outside this library; the simulator reads the
/// attached key through the channel model.
Store preprocess(const Store& raw, int k, std::uint64_t seed, const PolarCodeSpec& spec);

/// Decodes the observed key at the code's design crossover probability.
RoutingDecision route(const Store& store, const WatermarkKey& observed, const QueryConfig& cfg);

QueryResult drew_query(const Store& store, const Query& query, const QueryConfig& cfg);
QueryResult naive_query(const Store& store, const Query& query, const QueryConfig& cfg);

/// Batched forms; element i equals the single-query result for query i.
std::vector<QueryResult> drew_query_batch(const Store& store, std::span<const Query> queries,
                                          const QueryConfig& cfg);
std::vector<QueryResult> naive_query_batch(const Store& store, std::span<const Query> queries,
                                           const QueryConfig& cfg);

/// One JSON-lines record: {query_id, matched_id, similarity, decoded_code,
/// reliable, scope_size, ground_truth_id}.
nlohmann::json query_result_json(const nlohmann::json& query_id, const QueryResult& result,
                                 const std::optional<EntryId>& ground_truth);

}  // namespace drew
