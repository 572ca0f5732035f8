#include "drew/pipeline.hpp"

#include <cmath>

namespace drew {

namespace {

void check_query(const Store& store, const Query& q) {
  require(store.clustered(), "query requires a preprocessed store");
  if (static_cast<int>(q.embedding.size()) != store.dim()) {
    fail(Errc::dimension_mismatch, "query embedding dimension " + std::to_string(q.embedding.size()) +
                                       " does not match store dimension " + std::to_string(store.dim()));
  }
  if (static_cast<int>(q.observed_key.size()) != store.spec().n) {
    fail(Errc::invalid_argument, "observed key length " + std::to_string(q.observed_key.size()) +
                                     " does not match n=" + std::to_string(store.spec().n));
  }
}

QueryResult finish(const MatchList& top, std::size_t scope_size, const QueryConfig& cfg) {
  QueryResult r;
  r.scope_size = scope_size;
  if (!top.empty()) {
    r.similarity = top.front().similarity;
    if (top.front().similarity >= cfg.tau_r) r.matched = top.front().id;
  }
  return r;
}

}  // namespace

void QueryConfig::validate() const {
  require(reliability_threshold >= 0.0 && std::isfinite(reliability_threshold),
          "reliability threshold must be a nonnegative number");
  require(tau_r >= -1.0 && tau_r <= 1.0, "tau_r must lie in [-1, 1]");
}

Store preprocess(const Store& raw, int k, std::uint64_t seed, const PolarCodeSpec& spec) {
  return assign_clusters(raw, k, seed, spec);
}

RoutingDecision route(const Store& store, const WatermarkKey& observed, const QueryConfig& cfg) {
  const PolarCodeSpec& spec = store.spec();
  const DecodeOutcome d = decode(spec, llr_from_key(spec, observed, spec.design_p), cfg.decoder_options());
  return RoutingDecision{d.code, d.reliability_score, d.reliable};
}

QueryResult drew_query(const Store& store, const Query& query, const QueryConfig& cfg) {
  cfg.validate();
  check_query(store, query);
  RoutingDecision routing = route(store, query.observed_key, cfg);
  bool fallback = false;
  if (routing.reliable) {
    const std::uint32_t c = routing.code.index();
    if (!store.members(c).empty()) {
      QueryResult r = finish(top_matches(store, Scope::cluster(c), query.embedding, 1), store.members(c).size(), cfg);
      r.routing = std::move(routing);
      return r;
    }
    routing.reliable = false;
    fallback = true;
  }
  QueryResult r = finish(top_matches(store, Scope::full(), query.embedding, 1), store.size(), cfg);
  r.routing = std::move(routing);
  r.empty_cluster_fallback = fallback;
  return r;
}

QueryResult naive_query(const Store& store, const Query& query, const QueryConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(query.embedding.size()) != store.dim()) {
    fail(Errc::dimension_mismatch, "query embedding dimension does not match store dimension");
  }
  return finish(top_matches(store, Scope::full(), query.embedding, 1), store.size(), cfg);
}

std::vector<QueryResult> drew_query_batch(const Store& store, std::span<const Query> queries,
                                          const QueryConfig& cfg) {
  cfg.validate();
  std::vector<QueryResult> out(queries.size());
  std::vector<std::size_t> full_idx;
  std::vector<std::span<const float>> full_vecs;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Query& q = queries[i];
    check_query(store, q);
    RoutingDecision routing = route(store, q.observed_key, cfg);
    bool fallback = false;
    if (routing.reliable) {
      const std::uint32_t c = routing.code.index();
      if (!store.members(c).empty()) {
        out[i] = finish(top_matches(store, Scope::cluster(c), q.embedding, 1), store.members(c).size(), cfg);
        out[i].routing = std::move(routing);
        continue;
      }
      routing.reliable = false;
      fallback = true;
    }
    out[i].routing = std::move(routing);
    out[i].empty_cluster_fallback = fallback;
    full_idx.push_back(i);
    full_vecs.emplace_back(q.embedding);
  }
  const std::vector<MatchList> tops = top_matches_batch(store, Scope::full(), full_vecs, 1);
  for (std::size_t j = 0; j < full_idx.size(); ++j) {
    QueryResult& slot = out[full_idx[j]];
    QueryResult r = finish(tops[j], store.size(), cfg);
    r.routing = std::move(slot.routing);
    r.empty_cluster_fallback = slot.empty_cluster_fallback;
    slot = std::move(r);
  }
  return out;
}

std::vector<QueryResult> naive_query_batch(const Store& store, std::span<const Query> queries,
                                           const QueryConfig& cfg) {
  cfg.validate();
  std::vector<std::span<const float>> vecs;
  vecs.reserve(queries.size());
  for (const Query& q : queries) vecs.emplace_back(q.embedding);
  const std::vector<MatchList> tops = top_matches_batch(store, Scope::full(), vecs, 1);
  std::vector<QueryResult> out;
  out.reserve(tops.size());
  for (const MatchList& t : tops) out.push_back(finish(t, store.size(), cfg));
  return out;
}

nlohmann::json query_result_json(const nlohmann::json& query_id, const QueryResult& result,
                                 const std::optional<EntryId>& ground_truth) {
  nlohmann::json j;
  j["query_id"] = query_id;
  j["matched_id"] = result.matched ? nlohmann::json(result.matched->value) : nlohmann::json(-1);
  j["similarity"] = result.similarity ? nlohmann::json(*result.similarity) : nlohmann::json(nullptr);
  if (result.routing) {
    j["decoded_code"] = result.routing->code.to_string();
    j["reliable"] = result.routing->reliable;
    j["reliability_score"] = result.routing->reliability_score;
  } else {
    j["decoded_code"] = nullptr;
    j["reliable"] = nullptr;
  }
  j["scope_size"] = result.scope_size;
  j["ground_truth_id"] = ground_truth ? nlohmann::json(ground_truth->value) : nlohmann::json(nullptr);
  if (result.empty_cluster_fallback) j["empty_cluster_fallback"] = true;
  return j;
}

}  // namespace drew
