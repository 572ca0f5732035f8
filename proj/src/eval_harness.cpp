#include "drew/eval_harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "drew/entropy.hpp"

namespace drew {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double binomial_stderr(double p, std::size_t n) {
  return n == 0 ? 0.0 : std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

double sample_mean_stderr(long long sum, long long sq, std::size_t n) {
  if (n < 2) return 0.0;
  const double nn = static_cast<double>(n);
  const double mean = static_cast<double>(sum) / nn;
  const double var = (static_cast<double>(sq) - nn * mean * mean) / (nn - 1.0);
  return std::sqrt(std::max(0.0, var) / nn);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Best entry among `positions` by similarity, ties by ascending id.
std::optional<Match> best_among(const Store& store, std::span<const std::uint32_t> positions,
                                std::span<const float> q) {
  std::optional<Match> best;
  const auto dim = static_cast<std::size_t>(store.dim());
  const float* base = store.embeddings().data().data();
  for (std::uint32_t pos : positions) {
    const Match m{store.id(pos), static_cast<double>(dot(base + pos * dim, q.data(), dim))};
    if (!best || ranks_before(m, *best)) best = m;
  }
  return best;
}

std::vector<std::vector<std::uint32_t>> members_at(const std::vector<std::uint32_t>& words, int k) {
  std::vector<std::vector<std::uint32_t>> members(std::size_t{1} << k);
  for (std::size_t pos = 0; pos < words.size(); ++pos) {
    members[cluster_from_word(words[pos], k)].push_back(static_cast<std::uint32_t>(pos));
  }
  return members;
}

std::vector<std::span<const float>> embedding_views(std::span<const Query> queries) {
  std::vector<std::span<const float>> out;
  out.reserve(queries.size());
  for (const Query& q : queries) out.emplace_back(q.embedding);
  return out;
}

std::size_t rank_of(const MatchList& list, EntryId id) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].id == id) return i + 1;
  }
  return std::numeric_limits<std::size_t>::max();
}

double score_of(const QueryResult& r) { return r.similarity.value_or(-2.0); }

}  // namespace

EmbeddingMatrix make_holdout(std::size_t count, int dim, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "holdout");
  return random_unit_vectors(count, dim, rng);
}

std::vector<RawRow> synthetic_rows(std::size_t count, int dim, std::uint64_t seed) {
  require(dim >= 1, "dimension must be positive");
  Rng rng = Rng::derive(seed, "synthetic");
  std::vector<RawRow> rows(count);
  for (std::size_t i = 0; i < count; ++i) {
    rows[i].id = EntryId{i};
    rows[i].values.resize(static_cast<std::size_t>(dim));
    for (float& v : rows[i].values) v = static_cast<float>(rng.normal());
  }
  return rows;
}

std::vector<Query> sample_queries(const Store& store, const AttackConfig& attack, std::size_t count,
                                  AttackStreams& streams, const EmbeddingMatrix* holdout) {
  require(store.size() > 0, "cannot sample queries from an empty store");
  require(store.clustered(), "sampling queries requires a preprocessed store");
  std::vector<Query> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t pos = streams.sample.below(store.size());
    out.push_back(apply_attack(store.entry(pos), attack, streams, holdout));
  }
  return out;
}

double EpsilonEstimate::stderr_value() const noexcept { return binomial_stderr(value(), n_reliable); }

EpsilonEstimate estimate_epsilon_r(const Store& store, const AttackConfig& attack, std::size_t n_trials,
                                   std::uint64_t seed, const QueryConfig& cfg) {
  require(n_trials >= 1, "epsilon_r needs at least one trial");
  require(store.clustered() && store.size() > 0, "epsilon_r needs a non-empty preprocessed store");
  cfg.validate();
  AttackStreams streams = AttackStreams::derive(seed, "epsilon_r/" + attack.name);
  EpsilonEstimate est;
  est.n_trials = n_trials;
  for (std::size_t t = 0; t < n_trials; ++t) {
    const std::size_t pos = streams.sample.below(store.size());
    const WatermarkKey observed = flip_bits(store.key(pos), attack.p_flip, streams.key);
    const RoutingDecision r = route(store, observed, cfg);
    if (!r.reliable) continue;
    ++est.n_reliable;
    if (r.code.index() != store.cluster(pos)) ++est.n_wrong_reliable;
  }
  return est;
}

std::vector<EpsilonPoint> epsilon_r_curve(const Store& store, std::span<const double> p_grid,
                                          std::size_t n_trials, std::uint64_t seed, const QueryConfig& cfg) {
  std::vector<EpsilonPoint> out;
  for (double p : p_grid) {
    const AttackConfig attack{"flip@" + format_double(p), p, 0.0, false};
    out.push_back({p, estimate_epsilon_r(store, attack, n_trials, seed, cfg)});
  }
  return out;
}

std::vector<double> default_epsilon_grid() { return {0.05, 0.10, 0.15, 0.20, 0.25, 0.30}; }

double top_p_bound_term(double alpha, double alpha_p, std::size_t p, int k) {
  require(p >= 1, "p must be at least 1");
  const double keep = 1.0 - std::ldexp(1.0, -k);
  return (alpha_p - alpha) * std::pow(keep, static_cast<double>(p - 1));
}

// --- AttackRecord ----------------------------------------------------------

double AttackRecord::acc_drew() const { return ratio(drew_correct, n_queries); }
double AttackRecord::acc_naive() const { return ratio(naive_correct, n_queries); }
double AttackRecord::difference() const { return acc_drew() - acc_naive(); }
double AttackRecord::difference_stderr() const { return sample_mean_stderr(diff_sum, diff_sq, n_queries); }
double AttackRecord::slack_stderr() const { return sample_mean_stderr(slack_sum, slack_sq, n_queries); }
double AttackRecord::p_reliable() const { return ratio(reliable, n_queries); }
double AttackRecord::p_correct_cluster_given_reliable() const {
  return reliable == 0 ? 0.0 : ratio(reliable - reliable_wrong_cluster, reliable);
}
EpsilonEstimate AttackRecord::epsilon() const { return {n_queries, reliable, reliable_wrong_cluster}; }
double AttackRecord::gain_term() const { return ratio(gain_events, n_queries); }
double AttackRecord::loss_term() const { return ratio(reliable_wrong_cluster, n_queries); }
double AttackRecord::alpha() const { return acc_naive(); }

std::map<std::size_t, double> AttackRecord::alpha_p() const {
  std::map<std::size_t, double> out;
  for (std::size_t i = 0; i < top_p.size(); ++i) out[top_p[i]] = ratio(top_p_hits[i], n_queries);
  return out;
}

double AttackRecord::top_p_bound_lhs() const { return ratio(oracle_gain, n_queries); }

std::size_t AttackRecord::top_p_bound_best_p() const {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (const auto& [p, ap] : alpha_p()) {
    if (p < 2) continue;
    const double v = top_p_bound_term(alpha(), ap, p, k);
    if (v > best_value) {
      best_value = v;
      best = p;
    }
  }
  return best;
}

double AttackRecord::top_p_bound() const {
  const std::size_t p = top_p_bound_best_p();
  if (p == 0) return 0.0;
  return std::max(0.0, top_p_bound_term(alpha(), alpha_p().at(p), p, k));
}

double AttackRecord::top_p_bound_stderr() const {
  const double lhs = top_p_bound_lhs();
  double var = lhs * (1.0 - lhs) / static_cast<double>(std::max<std::size_t>(n_queries, 1));
  const std::size_t p = top_p_bound_best_p();
  if (p != 0) {
    const double gap = alpha_p().at(p) - alpha();
    const double factor = std::pow(1.0 - std::ldexp(1.0, -k), static_cast<double>(p - 1));
    var += factor * factor * gap * (1.0 - gap) / static_cast<double>(std::max<std::size_t>(n_queries, 1));
  }
  return std::sqrt(std::max(0.0, var));
}

// --- evaluation ------------------------------------------------------------

AttackRecord evaluate_attack(const Store& store, const AttackConfig& attack, const EvalConfig& cfg,
                             const EmbeddingMatrix& holdout) {
  require(cfg.n_queries >= 1, "n_queries must be positive");
  attack.validate();
  cfg.query.validate();

  AttackRecord rec;
  rec.attack = attack;
  rec.seed = cfg.seed;
  rec.n_queries = cfg.n_queries;
  rec.k = store.cluster_bits();
  rec.top_p = cfg.top_p;
  std::sort(rec.top_p.begin(), rec.top_p.end());
  rec.top_p.erase(std::unique(rec.top_p.begin(), rec.top_p.end()), rec.top_p.end());
  rec.top_p_hits.assign(rec.top_p.size(), 0);
  const std::size_t max_p = rec.top_p.empty() ? 1 : std::max<std::size_t>(1, rec.top_p.back());

  AttackStreams streams = AttackStreams::derive(cfg.seed, attack.name);
  const std::vector<Query> queries = sample_queries(store, attack, cfg.n_queries, streams, &holdout);

  const std::vector<QueryResult> drew = drew_query_batch(store, queries, cfg.query);
  const std::vector<MatchList> full = top_matches_batch(store, Scope::full(), embedding_views(queries), max_p);

  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Query& q = queries[i];
    const QueryResult& d = drew[i];
    QueryResult naive;
    naive.scope_size = store.size();
    if (!full[i].empty()) {
      naive.similarity = full[i].front().similarity;
      if (full[i].front().similarity >= cfg.query.tau_r) naive.matched = full[i].front().id;
    }

    const bool r = d.reliable();
    if (!r && !same_outcome(d, naive)) ++rec.unreliable_mismatch;
    if (d.empty_cluster_fallback) ++rec.empty_cluster_fallbacks;
    if (!d.matched) ++rec.no_match_drew;
    if (!naive.matched) ++rec.no_match_naive;
    if (r) ++rec.reliable;

    if (!q.ground_truth) {
      if (r) ++rec.reliable_wrong_cluster;  // any routing of an unwatermarked query is wrong
      continue;
    }

    const std::size_t gt_pos = *store.position(*q.ground_truth);
    const std::uint32_t gt_cluster = store.cluster(gt_pos);
    const bool cluster_ok = d.routing && d.routing->code.index() == gt_cluster;
    if (r && !cluster_ok) ++rec.reliable_wrong_cluster;

    const bool drew_ok = d.matched == q.ground_truth;
    const bool naive_ok = naive.matched == q.ground_truth;
    const auto oracle = best_among(store, store.members(gt_cluster), q.embedding);
    const bool oracle_ok = oracle && oracle->id == *q.ground_truth &&
                           oracle->similarity >= cfg.query.tau_r;

    rec.drew_correct += drew_ok;
    rec.naive_correct += naive_ok;
    rec.oracle_correct += oracle_ok;
    const bool oracle_gain = oracle_ok && !naive_ok;
    rec.oracle_gain += oracle_gain;
    const bool gain = oracle_gain && r && cluster_ok;
    rec.gain_events += gain;
    const bool loss = r && !cluster_ok;

    const long long diff = static_cast<long long>(drew_ok) - static_cast<long long>(naive_ok);
    const long long slack = diff - static_cast<long long>(gain) + static_cast<long long>(loss);
    rec.diff_sum += diff;
    rec.diff_sq += diff * diff;
    rec.slack_sum += slack;
    rec.slack_sq += slack * slack;

    const std::size_t rank = rank_of(full[i], *q.ground_truth);
    for (std::size_t j = 0; j < rec.top_p.size(); ++j) rec.top_p_hits[j] += rank <= rec.top_p[j];
  }
  return rec;
}

GainLossTerms gain_loss_terms(const AttackRecord& record) {
  GainLossTerms t;
  t.gain = record.gain_term();
  t.loss = record.loss_term();
  t.difference = record.difference();
  t.stderr_value = record.slack_stderr();
  // Compared on the integer slack so an exact identity is not lost to rounding.
  const double n = static_cast<double>(std::max<std::size_t>(record.n_queries, 1));
  t.holds = static_cast<double>(record.slack_sum) / n >= -kSigmaBand * t.stderr_value;
  return t;
}

GainLossTerms gain_loss_decomposition(const Store& store, const AttackConfig& attack, std::size_t n_queries,
                                      std::uint64_t seed, const QueryConfig& cfg) {
  EvalConfig ec;
  ec.query = cfg;
  ec.n_queries = n_queries;
  ec.seed = seed;
  ec.top_p.clear();
  const EmbeddingMatrix holdout = make_holdout(attack.out_of_dataset ? 1024 : 0, store.dim(), seed);
  return gain_loss_terms(evaluate_attack(store, attack, ec, holdout));
}

TopPBoundTerms top_p_bound_check(const Store& store, const AttackConfig& attack, int k,
                                 std::span<const std::size_t> p_list, std::size_t n_queries, std::uint64_t seed) {
  require(store.clustered(), "top-p bound check requires a preprocessed store");
  require(k >= 1 && k <= kMaxClusterBits, "k out of range");
  require(n_queries >= 1, "n_queries must be positive");
  require(!attack.out_of_dataset, "top-p bound check needs in-dataset queries");
  std::vector<std::size_t> ps(p_list.begin(), p_list.end());
  for (std::size_t p : ps) require(p >= 2 && p <= 50, "p values must lie in [2, 50]");
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  require(!ps.empty(), "p list must not be empty");

  const std::vector<std::uint32_t> words = partition_words(store.size(), store.partition_seed());
  const auto members = members_at(words, k);

  AttackStreams streams = AttackStreams::derive(seed, "top-p-bound/" + attack.name);
  const std::vector<Query> queries = sample_queries(store, attack, n_queries, streams, nullptr);
  const std::vector<MatchList> full = top_matches_batch(store, Scope::full(), embedding_views(queries), ps.back());

  std::size_t top1 = 0;
  std::size_t lhs = 0;
  std::vector<std::size_t> hits(ps.size(), 0);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const EntryId gt = *queries[i].ground_truth;
    const std::size_t pos = *store.position(gt);
    const std::size_t rank = rank_of(full[i], gt);
    const bool naive_ok = rank == 1;
    top1 += naive_ok;
    for (std::size_t j = 0; j < ps.size(); ++j) hits[j] += rank <= ps[j];
    const auto oracle = best_among(store, members[cluster_from_word(words[pos], k)], queries[i].embedding);
    lhs += (oracle && oracle->id == gt && !naive_ok);
  }

  TopPBoundTerms t;
  t.alpha = ratio(top1, n_queries);
  t.lhs = ratio(lhs, n_queries);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < ps.size(); ++j) {
    const double ap = ratio(hits[j], n_queries);
    t.alpha_p[ps[j]] = ap;
    const double term = top_p_bound_term(t.alpha, ap, ps[j], k);
    if (term > best) {
      best = term;
      t.best_p = ps[j];
    }
  }
  t.bound = std::max(0.0, best);
  const double gap = t.alpha_p[t.best_p] - t.alpha;
  const double factor = std::pow(1.0 - std::ldexp(1.0, -k), static_cast<double>(t.best_p - 1));
  const double n = static_cast<double>(n_queries);
  t.stderr_value = std::sqrt(t.lhs * (1.0 - t.lhs) / n + factor * factor * gap * (1.0 - gap) / n);
  t.holds = t.lhs >= t.bound - kSigmaBand * t.stderr_value;
  return t;
}

RocComparison roc_eval(const Store& store, const AttackConfig& attack, std::size_t n_in, std::size_t n_out,
                       std::uint64_t seed, const QueryConfig& cfg, const EmbeddingMatrix& holdout) {
  require(n_in >= 1 && n_out >= 1, "ROC evaluation needs n_in >= 1 and n_out >= 1");
  require(holdout.rows() > 0, "ROC evaluation needs a held-out pool");
  AttackConfig in_attack = attack;
  in_attack.out_of_dataset = false;
  AttackConfig out_attack{attack.name + "/ood", 0.5, attack.sigma, true};

  AttackStreams in_streams = AttackStreams::derive(seed, "roc/" + attack.name);
  AttackStreams out_streams = AttackStreams::derive(seed, "roc-ood/" + attack.name);
  const std::vector<Query> in_q = sample_queries(store, in_attack, n_in, in_streams, &holdout);
  const std::vector<Query> out_q = sample_queries(store, out_attack, n_out, out_streams, &holdout);

  auto scores = [](const std::vector<QueryResult>& rs) {
    std::vector<double> s;
    s.reserve(rs.size());
    for (const auto& r : rs) s.push_back(score_of(r));
    return s;
  };
  RocComparison out;
  out.drew = roc_curve(scores(drew_query_batch(store, in_q, cfg)), scores(drew_query_batch(store, out_q, cfg)));
  out.naive = roc_curve(scores(naive_query_batch(store, in_q, cfg)), scores(naive_query_batch(store, out_q, cfg)));
  return out;
}

std::vector<CapacityRow> capacity_curve(std::span<const double> p_grid) {
  std::vector<CapacityRow> rows;
  rows.reserve(p_grid.size());
  for (double p : p_grid) {
    require(p >= 0.0 && p < 0.5, "capacity grid points must lie in [0, 0.5)");
    CapacityRow row;
    row.p_flip = p;
    row.rate = capacity_rate(p);
    row.redundancy = min_redundancy(p);
    row.unbounded = !(row.redundancy <= kRedundancyCap);
    rows.push_back(row);
  }
  return rows;
}

std::vector<SubsetAccuracyRow> cluster_subset_accuracy(const Store& store, const AttackConfig& attack,
                                                       std::span<const int> k_grid, std::size_t n_queries,
                                                       std::uint64_t seed) {
  require(store.clustered(), "cluster subset accuracy requires a preprocessed store");
  require(n_queries >= 1, "n_queries must be positive");
  require(!attack.out_of_dataset, "cluster subset accuracy needs in-dataset queries");
  const std::vector<std::uint32_t> words = partition_words(store.size(), store.partition_seed());
  AttackStreams streams = AttackStreams::derive(seed, "cluster-subset/" + attack.name);
  const std::vector<Query> queries = sample_queries(store, attack, n_queries, streams, nullptr);

  std::vector<SubsetAccuracyRow> rows;
  for (int k : k_grid) {
    require(k >= 0 && k <= kMaxClusterBits, "k grid values must lie in [0, 16]");
    SubsetAccuracyRow row;
    row.k = k;
    row.n_queries = n_queries;
    if (k == 0) {
      const auto full = top_matches_batch(store, Scope::full(), embedding_views(queries), 1);
      for (std::size_t i = 0; i < queries.size(); ++i) {
        row.correct += !full[i].empty() && full[i].front().id == *queries[i].ground_truth;
      }
    } else {
      const auto members = members_at(words, k);
      for (const Query& q : queries) {
        const std::size_t pos = *store.position(*q.ground_truth);
        const auto best = best_among(store, members[cluster_from_word(words[pos], k)], q.embedding);
        row.correct += best && best->id == *q.ground_truth;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<CheckResult> record_checks(const AttackRecord& rec) {
  const std::string tag = rec.attack.name + ": ";
  std::vector<CheckResult> out;
  out.push_back({tag + "fallback-identity", rec.unreliable_mismatch == 0,
                 std::to_string(rec.unreliable_mismatch) + " unreliable queries where drew != naive"});
  if (rec.attack.out_of_dataset) return out;

  const GainLossTerms gl = gain_loss_terms(rec);
  out.push_back({tag + "gain-loss-bound", gl.holds,
                 "difference " + format_double(gl.difference) + " vs gain - loss " +
                     format_double(gl.gain - gl.loss) + " (stderr " + format_double(gl.stderr_value) + ")"});

  const double eps = rec.epsilon().value();
  const bool never_worse = rec.acc_drew() >= rec.acc_naive() - eps - kSigmaBand * rec.difference_stderr();
  out.push_back({tag + "never-worse", never_worse,
                 "acc_drew " + format_double(rec.acc_drew()) + " vs acc_naive " + format_double(rec.acc_naive()) +
                     " - epsilon_r " + format_double(eps)});

  if (!rec.top_p.empty() && rec.top_p.back() >= 2) {
    const double lhs = rec.top_p_bound_lhs();
    const double bound = rec.top_p_bound();
    out.push_back({tag + "top-p-bound", lhs >= bound - kSigmaBand * rec.top_p_bound_stderr(),
                   "oracle gain " + format_double(lhs) + " vs bound " + format_double(bound) + " at p=" +
                       std::to_string(rec.top_p_bound_best_p())});
  }
  return out;
}

CheckResult roc_check(const AttackRecord& rec, double tolerance) {
  CheckResult c;
  c.name = rec.attack.name + ": roc-auroc";
  if (!rec.roc) {
    c.passed = true;
    c.detail = "not evaluated";
    return c;
  }
  const double loss = rec.loss_term();
  const double band = tolerance + loss + kSigmaBand * binomial_stderr(loss, rec.n_queries);
  c.passed = rec.roc->drew.auroc >= rec.roc->naive.auroc - band;
  c.detail = "drew AUROC " + format_double(rec.roc->drew.auroc) + " vs naive " + format_double(rec.roc->naive.auroc) +
             " (band " + format_double(band) + ")";
  return c;
}

bool EvalReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

EvalReport run_accuracy_eval(const Store& store, std::span<const AttackConfig> suite, const EvalConfig& cfg,
                             const EmbeddingMatrix& holdout) {
  require(cfg.n_queries >= 1, "n_queries must be positive");
  EvalReport report;
  for (const AttackConfig& attack : suite) {
    AttackRecord rec = evaluate_attack(store, attack, cfg, holdout);
    if (cfg.include_roc && !attack.out_of_dataset) {
      rec.roc = roc_eval(store, attack, cfg.roc_in, cfg.roc_out, cfg.seed, cfg.query, holdout);
    }
    for (auto& c : record_checks(rec)) report.checks.push_back(std::move(c));
    if (rec.roc) report.checks.push_back(roc_check(rec));
    report.records.push_back(std::move(rec));
  }
  return report;
}

// --- serialization ---------------------------------------------------------

namespace {

nlohmann::json roc_json(const RocResult& r) {
  return nlohmann::json{{"auroc", r.auroc}, {"tpr_at_fpr_0_1", r.tpr_at_fpr}};
}

nlohmann::json prob_or_null(bool present, double v) { return present ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const AttackRecord& rec) {
  const bool in_dataset = !rec.attack.out_of_dataset;
  nlohmann::json j;
  j["attack"] = to_json(rec.attack);
  j["seed"] = rec.seed;
  j["n_queries"] = rec.n_queries;
  j["k"] = rec.k;
  j["counts"] = {{"drew_correct", rec.drew_correct},
                 {"naive_correct", rec.naive_correct},
                 {"reliable", rec.reliable},
                 {"reliable_wrong_cluster", rec.reliable_wrong_cluster},
                 {"oracle_correct", rec.oracle_correct},
                 {"oracle_gain", rec.oracle_gain},
                 {"gain_events", rec.gain_events},
                 {"unreliable_mismatch", rec.unreliable_mismatch},
                 {"empty_cluster_fallbacks", rec.empty_cluster_fallbacks},
                 {"no_match_drew", rec.no_match_drew},
                 {"no_match_naive", rec.no_match_naive},
                 {"top_p_hits", rec.top_p_hits}};
  j["acc_drew"] = prob_or_null(in_dataset, rec.acc_drew());
  j["acc_naive"] = prob_or_null(in_dataset, rec.acc_naive());
  const EpsilonEstimate eps = rec.epsilon();
  j["epsilon_r"] = eps.value();
  j["epsilon_r_low_support"] = eps.low_support();
  j["p_reliable"] = rec.p_reliable();
  j["p_correct_cluster_given_reliable"] = rec.p_correct_cluster_given_reliable();
  j["gain_term"] = prob_or_null(in_dataset, rec.gain_term());
  j["loss_term"] = rec.loss_term();
  j["difference"] = prob_or_null(in_dataset, rec.difference());
  j["alpha"] = prob_or_null(in_dataset, rec.alpha());
  nlohmann::json ap = nlohmann::json::object();
  for (const auto& [p, v] : rec.alpha_p()) ap[std::to_string(p)] = v;
  j["alpha_p"] = in_dataset ? ap : nlohmann::json(nullptr);
  j["top_p_bound"] = prob_or_null(in_dataset, rec.top_p_bound());
  j["top_p_bound_lhs"] = prob_or_null(in_dataset, rec.top_p_bound_lhs());
  if (rec.roc) {
    j["auroc"] = {{"drew", rec.roc->drew.auroc}, {"naive", rec.roc->naive.auroc}};
    j["tpr_at_fpr_0_1"] = {{"drew", rec.roc->drew.tpr_at_fpr}, {"naive", rec.roc->naive.tpr_at_fpr}};
    j["roc"] = {{"drew", roc_json(rec.roc->drew)}, {"naive", roc_json(rec.roc->naive)}};
  } else {
    j["auroc"] = nullptr;
    j["tpr_at_fpr_0_1"] = nullptr;
  }
  return j;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["meta"] = report.meta;
  j["records"] = nlohmann::json::array();
  for (const auto& r : report.records) j["records"].push_back(to_json(r));
  j["epsilon_curve"] = nlohmann::json::array();
  for (const auto& e : report.epsilon_curve) {
    j["epsilon_curve"].push_back({{"p_A", e.p_flip},
                                  {"n_trials", e.estimate.n_trials},
                                  {"n_reliable", e.estimate.n_reliable},
                                  {"n_wrong_reliable", e.estimate.n_wrong_reliable},
                                  {"epsilon_r", e.estimate.value()},
                                  {"low_support", e.estimate.low_support()}});
  }
  j["capacity_curve"] = nlohmann::json::array();
  for (const auto& c : report.capacity) {
    j["capacity_curve"].push_back({{"p_A", c.p_flip},
                                   {"rate", c.rate},
                                   {"redundancy", c.unbounded ? nlohmann::json(nullptr) : nlohmann::json(c.redundancy)},
                                   {"unbounded", c.unbounded}});
  }
  j["cluster_subset"] = nlohmann::json::array();
  for (const auto& s : report.cluster_subset) {
    j["cluster_subset"].push_back({{"k", s.k}, {"correct", s.correct}, {"n_queries", s.n_queries}, {"accuracy", s.accuracy()}});
  }
  j["checks"] = nlohmann::json::array();
  for (const auto& c : report.checks) j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["all_passed"] = report.all_passed();
  return j;
}

std::string curves_csv(const EvalReport& report) {
  std::string out = "attack,p_A,sigma,metric,value,stderr,seed\n";
  const std::string seed = report.meta.contains("seed") ? report.meta["seed"].dump() : "";
  auto row = [&](const std::string& attack, double p, double sigma, const std::string& metric, double value,
                 double err, const std::string& s) {
    out += attack + ',' + format_double(p) + ',' + format_double(sigma) + ',' + metric + ',' + format_double(value) +
           ',' + format_double(err) + ',' + s + '\n';
  };
  for (const auto& r : report.records) {
    const std::string s = std::to_string(r.seed);
    const auto& a = r.attack;
    const std::size_t n = r.n_queries;
    if (!a.out_of_dataset) {
      row(a.name, a.p_flip, a.sigma, "acc_drew", r.acc_drew(), binomial_stderr(r.acc_drew(), n), s);
      row(a.name, a.p_flip, a.sigma, "acc_naive", r.acc_naive(), binomial_stderr(r.acc_naive(), n), s);
      row(a.name, a.p_flip, a.sigma, "difference", r.difference(), r.difference_stderr(), s);
      row(a.name, a.p_flip, a.sigma, "gain_term", r.gain_term(), binomial_stderr(r.gain_term(), n), s);
    }
    row(a.name, a.p_flip, a.sigma, "loss_term", r.loss_term(), binomial_stderr(r.loss_term(), n), s);
    row(a.name, a.p_flip, a.sigma, "p_reliable", r.p_reliable(), binomial_stderr(r.p_reliable(), n), s);
    row(a.name, a.p_flip, a.sigma, "epsilon_r", r.epsilon().value(), r.epsilon().stderr_value(), s);
    if (!a.out_of_dataset) {
      for (const auto& [p, v] : r.alpha_p()) {
        row(a.name, a.p_flip, a.sigma, "alpha_" + std::to_string(p), v, binomial_stderr(v, n), s);
      }
      row(a.name, a.p_flip, a.sigma, "top_p_bound", r.top_p_bound(), r.top_p_bound_stderr(), s);
      row(a.name, a.p_flip, a.sigma, "top_p_bound_lhs", r.top_p_bound_lhs(), binomial_stderr(r.top_p_bound_lhs(), n), s);
    }
    if (r.roc) {
      row(a.name, a.p_flip, a.sigma, "auroc_drew", r.roc->drew.auroc, 0.0, s);
      row(a.name, a.p_flip, a.sigma, "auroc_naive", r.roc->naive.auroc, 0.0, s);
      row(a.name, a.p_flip, a.sigma, "tpr_at_fpr_0_1_drew", r.roc->drew.tpr_at_fpr, 0.0, s);
      row(a.name, a.p_flip, a.sigma, "tpr_at_fpr_0_1_naive", r.roc->naive.tpr_at_fpr, 0.0, s);
    }
  }
  for (const auto& e : report.epsilon_curve) {
    row("epsilon_r_curve", e.p_flip, 0.0, "epsilon_r", e.estimate.value(), e.estimate.stderr_value(), seed);
  }
  for (const auto& c : report.capacity) {
    row("capacity", c.p_flip, 0.0, "rate", c.rate, 0.0, seed);
    row("capacity", c.p_flip, 0.0, "redundancy", c.unbounded ? std::numeric_limits<double>::infinity() : c.redundancy,
        0.0, seed);
  }
  for (const auto& sub : report.cluster_subset) {
    row("cluster_subset", 0.0, 0.0, "accuracy_k" + std::to_string(sub.k), sub.accuracy(),
        binomial_stderr(sub.accuracy(), sub.n_queries), seed);
  }
  return out;
}

nlohmann::json epsilon_golden_json(std::span<const EpsilonPoint> curve, const PolarCodeSpec& spec,
                                   const QueryConfig& cfg, std::size_t n_trials, std::uint64_t seed) {
  nlohmann::json j;
  j["k"] = spec.k;
  j["n"] = spec.n;
  j["design_p"] = spec.design_p;
  j["threshold"] = cfg.reliability_threshold;
  j["reliability_mode"] = std::string(to_string(cfg.reliability_mode));
  j["check_node"] = cfg.check_node == CheckNodeRule::exact ? "exact" : "min-sum";
  j["n_trials"] = n_trials;
  j["seed"] = seed;
  j["points"] = nlohmann::json::array();
  for (const auto& e : curve) {
    j["points"].push_back({{"p_A", e.p_flip},
                           {"n_trials", e.estimate.n_trials},
                           {"n_reliable", e.estimate.n_reliable},
                           {"n_wrong_reliable", e.estimate.n_wrong_reliable},
                           {"epsilon_r", e.estimate.value()}});
  }
  return j;
}

GoldenComparison compare_epsilon_golden(const nlohmann::json& golden, std::span<const EpsilonPoint> measured,
                                        const PolarCodeSpec& spec, const QueryConfig& cfg) {
  GoldenComparison out;
  out.status = GoldenStatus::fail;
  try {
    const bool same_params = golden.at("k").get<int>() == spec.k && golden.at("n").get<int>() == spec.n &&
                             golden.at("design_p").get<double>() == spec.design_p &&
                             golden.at("threshold").get<double>() == cfg.reliability_threshold &&
                             golden.at("reliability_mode").get<std::string>() == to_string(cfg.reliability_mode) &&
                             golden.at("check_node").get<std::string>() ==
                                 (cfg.check_node == CheckNodeRule::exact ? "exact" : "min-sum");
    if (!same_params) {
      out.checks.push_back({"epsilon_r golden", false, "golden file was calibrated with different code parameters"});
      return out;
    }
    for (const auto& point : golden.at("points")) {
      const double p = point.at("p_A").get<double>();
      const auto it = std::find_if(measured.begin(), measured.end(),
                                   [p](const EpsilonPoint& e) { return std::fabs(e.p_flip - p) < 1e-12; });
      if (it == measured.end()) {
        out.checks.push_back({"epsilon_r@" + format_double(p), false, "no measurement at this flip rate"});
        return out;
      }
      const auto r1 = point.at("n_reliable").get<std::size_t>();
      const auto w1 = point.at("n_wrong_reliable").get<std::size_t>();
      const std::size_t r2 = it->estimate.n_reliable;
      const std::size_t w2 = it->estimate.n_wrong_reliable;
      const double e1 = ratio(w1, r1);
      const double e2 = ratio(w2, r2);
      bool pass = false;
      double se = 0.0;
      if (r1 == 0 || r2 == 0) {
        pass = r1 == r2 || (w1 == 0 && w2 == 0);
      } else {
        const double pooled = ratio(w1 + w2, r1 + r2);
        se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(r1) + 1.0 / static_cast<double>(r2)));
        pass = se == 0.0 ? e1 == e2 : std::fabs(e1 - e2) <= kSigmaBand * se;
      }
      out.checks.push_back({"epsilon_r@" + format_double(p), pass,
                            "golden " + format_double(e1) + " vs measured " + format_double(e2) + " (3 sigma band " +
                                format_double(kSigmaBand * se) + ")"});
    }
  } catch (const nlohmann::json::exception& e) {
    out.checks.clear();
    out.checks.push_back({"epsilon_r golden", false, std::string("malformed golden file: ") + e.what()});
    return out;
  }
  const bool ok = std::all_of(out.checks.begin(), out.checks.end(), [](const CheckResult& c) { return c.passed; });
  out.status = ok ? GoldenStatus::pass : GoldenStatus::fail;
  return out;
}

}  // namespace drew
