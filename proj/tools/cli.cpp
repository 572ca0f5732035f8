#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "drew/entropy.hpp"
#include "drew/error.hpp"
#include "drew/eval_harness.hpp"
#include "drew/pipeline.hpp"
#include "drew/polar_code.hpp"
#include "drew/store_io.hpp"

namespace drew::cli {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json to_json(const RunConfig& c) {
  return json{{"store", c.store},
              {"csv", c.csv},
              {"synthetic_n", c.synthetic_n},
              {"synthetic_d", c.synthetic_d},
              {"k", c.k},
              {"n", c.n},
              {"design_p", c.design_p},
              {"reliability_threshold", c.reliability_threshold},
              {"tau_r", c.tau_r},
              {"reliability_mode", c.reliability_mode},
              {"check_node", c.check_node},
              {"suite", c.suite},
              {"seed", c.seed},
              {"output_dir", c.output_dir},
              {"n_queries", c.n_queries},
              {"epsilon_trials", c.epsilon_trials},
              {"roc_in", c.roc_in},
              {"roc_out", c.roc_out},
              {"top_p", c.top_p},
              {"golden", c.golden}};
}

RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig c) {
  if (!doc.is_object()) fail(Errc::format, "config must be a JSON object");
  static const std::vector<std::string> known = {
      "store",    "csv",       "synthetic_n", "synthetic_d",    "k",      "n",       "design_p",
      "reliability_threshold", "tau_r",       "reliability_mode", "check_node", "suite", "seed",
      "output_dir", "n_queries", "epsilon_trials", "roc_in", "roc_out", "top_p", "golden"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(Errc::format, "unknown config key '" + key + "'");
    }
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("store", c.store);
    get("csv", c.csv);
    get("synthetic_n", c.synthetic_n);
    get("synthetic_d", c.synthetic_d);
    get("k", c.k);
    get("n", c.n);
    get("design_p", c.design_p);
    get("reliability_threshold", c.reliability_threshold);
    get("tau_r", c.tau_r);
    get("reliability_mode", c.reliability_mode);
    get("check_node", c.check_node);
    get("suite", c.suite);
    get("seed", c.seed);
    get("output_dir", c.output_dir);
    get("n_queries", c.n_queries);
    get("epsilon_trials", c.epsilon_trials);
    get("roc_in", c.roc_in);
    get("roc_out", c.roc_out);
    get("top_p", c.top_p);
    get("golden", c.golden);
  } catch (const json::exception& e) {
    fail(Errc::format, std::string("bad config value: ") + e.what());
  }
  return c;
}

namespace {

// Thrown for parameter problems detected before any data is touched.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit_error(std::ostream& err, const std::string& code, const std::string& message) {
  err << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

// Flag overrides applied on top of the config file.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, T RunConfig::*field, const std::string& desc) {
    auto storage = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *storage, desc);
    appliers_.push_back([opt, storage, field](RunConfig& c) {
      if (opt->count() > 0) c.*field = *storage;
    });
    return opt;
  }
  void apply(RunConfig& c) const {
    for (const auto& f : appliers_) f(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> appliers_;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::format, path.string() + " is not valid JSON: " + e.what());
  }
}

fs::path output_dir(const RunConfig& c) {
  if (!c.output_dir.empty()) return c.output_dir;
  if (const char* env = std::getenv("DREW_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

QueryConfig query_config(const RunConfig& c) {
  QueryConfig q;
  q.reliability_threshold = c.reliability_threshold;
  q.tau_r = c.tau_r;
  q.reliability_mode = reliability_mode_from_string(c.reliability_mode);
  if (c.check_node == "exact") {
    q.check_node = CheckNodeRule::exact;
  } else if (c.check_node == "min-sum") {
    q.check_node = CheckNodeRule::min_sum;
  } else {
    fail(Errc::invalid_argument, "check_node must be 'exact' or 'min-sum'");
  }
  q.validate();
  return q;
}

// Runs `f`, turning library parameter errors into usage errors.
template <class F>
auto validated(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) throw UsageError("bad number '" + text + "' in " + what);
  return v;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// "a:b:step" or "x,y,z".
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ':')) parts.push_back(parse_double(tok, "grid"));
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
      throw UsageError("grid must be start:stop:step with step > 0 and stop >= start");
    }
    const auto count = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
      // Snap to 12 decimals so 0.1 + 2 * 0.1 prints as 0.3.
      out.push_back(std::round((parts[0] + static_cast<double>(i) * parts[2]) * 1e12) / 1e12);
    }
  } else {
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_double(tok, "grid"));
  }
  if (out.empty()) throw UsageError("grid is empty");
  return out;
}

void parse_synthetic(const std::vector<std::string>& tokens, RunConfig& c) {
  c.synthetic_n = 0;
  for (const auto& t : tokens) {
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError("--synthetic expects N=<count> d=<dim>, got '" + t + "'");
    const std::string key = t.substr(0, eq);
    const std::string value = t.substr(eq + 1);
    const double v = parse_double(value, "--synthetic");
    if (v < 1 || v != std::floor(v)) throw UsageError("--synthetic values must be positive integers");
    if (key == "N") {
      c.synthetic_n = static_cast<std::size_t>(v);
    } else if (key == "d") {
      c.synthetic_d = static_cast<int>(v);
    } else {
      throw UsageError("--synthetic accepts N= and d=, got '" + key + "'");
    }
  }
  if (c.synthetic_n == 0) throw UsageError("--synthetic needs N=<count>");
}

Store build_store(const RunConfig& c) {
  const PolarCodeSpec spec = validated([&] {
    require(c.k >= 1 && c.k <= kMaxClusterBits, "k must lie in [1, 16]");
    return construct_code(c.k, c.n, c.design_p);
  });
  Store raw = [&] {
    if (!c.csv.empty()) {
      const CsvEmbeddings csv = read_embeddings_csv(c.csv);
      return Store::ingest(csv.rows, csv.dim);
    }
    const std::size_t count = c.synthetic_n == 0 ? 100000 : c.synthetic_n;
    return Store::ingest(synthetic_rows(count, c.synthetic_d, c.seed), c.synthetic_d);
  }();
  return preprocess(raw, c.k, c.seed, spec);
}

std::vector<AttackConfig> suite_of(const RunConfig& c) {
  return c.suite.empty() ? default_attack_suite() : load_attack_suite(c.suite);
}

// --- build -----------------------------------------------------------------

int cmd_build(const RunConfig& c, std::ostream& out) {
  if (c.csv.empty() && c.synthetic_n == 0) throw UsageError("build needs --csv or --synthetic");
  if (!c.csv.empty() && c.synthetic_n != 0) throw UsageError("--csv and --synthetic are exclusive");
  const Store store = build_store(c);
  const fs::path path = c.store.empty() ? output_dir(c) / "store.drew" : fs::path(c.store);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_store(store, path);

  std::vector<std::size_t> histogram(store.cluster_count());
  for (std::uint32_t i = 0; i < histogram.size(); ++i) histogram[i] = store.members(i).size();
  const auto [lo, hi] = std::minmax_element(histogram.begin(), histogram.end());
  out << json{{"store", path.string()},
              {"N", store.size()},
              {"d", store.dim()},
              {"k", store.cluster_bits()},
              {"n", store.spec().n},
              {"seed", c.seed},
              {"cluster_min", *lo},
              {"cluster_max", *hi},
              {"empty_clusters", std::count(histogram.begin(), histogram.end(), std::size_t{0})},
              {"cluster_histogram", histogram}}
             .dump()
      << '\n';
  return kOk;
}

// --- query -----------------------------------------------------------------

struct ParsedLine {
  json query_id;
  std::optional<Query> query;
  std::optional<std::pair<std::string, std::string>> error;  // code, message
};

ParsedLine parse_query_line(const std::string& line, std::size_t line_no, const Store& store, bool need_key) {
  ParsedLine p;
  p.query_id = line_no;
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::exception& e) {
    p.error = {{"format", std::string("line is not valid JSON: ") + e.what()}};
    return p;
  }
  if (!doc.is_object()) {
    p.error = {{"format", "query line must be a JSON object"}};
    return p;
  }
  if (doc.contains("query_id")) p.query_id = doc["query_id"];
  try {
    Query q;
    const auto raw = doc.at("embedding").get<std::vector<float>>();
    if (static_cast<int>(raw.size()) != store.dim()) {
      fail(Errc::dimension_mismatch, "embedding has " + std::to_string(raw.size()) + " values, store dimension is " +
                                         std::to_string(store.dim()));
    }
    q.embedding = normalized(raw);
    if (doc.contains("key") && !doc["key"].is_null()) {
      q.observed_key = WatermarkKey::from_string(doc["key"].get<std::string>());
      if (static_cast<int>(q.observed_key.size()) != store.spec().n) {
        fail(Errc::invalid_argument, "key has " + std::to_string(q.observed_key.size()) + " bits, expected " +
                                         std::to_string(store.spec().n));
      }
    } else if (need_key) {
      fail(Errc::invalid_argument, "missing 'key'");
    }
    if (doc.contains("ground_truth_id") && !doc["ground_truth_id"].is_null()) {
      q.ground_truth = EntryId{doc["ground_truth_id"].get<std::uint64_t>()};
    }
    p.query = std::move(q);
  } catch (const json::exception& e) {
    p.error = {{"format", std::string("bad query field: ") + e.what()}};
  } catch (const Error& e) {
    p.error = {{std::string(to_string(e.code())), e.what()}};
  }
  return p;
}

int cmd_query(const RunConfig& c, const std::string& queries_path, bool naive, const std::string& out_path,
              std::istream& in, std::ostream& out) {
  const QueryConfig qcfg = validated([&] { return query_config(c); });
  if (c.store.empty()) throw UsageError("query needs --store");
  const Store store = load_store(c.store);

  std::ifstream file;
  std::istream* src = &in;
  if (queries_path != "-") {
    file.open(queries_path);
    if (!file) fail(Errc::io, "cannot open " + queries_path);
    src = &file;
  }
  std::vector<ParsedLine> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(*src, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(parse_query_line(line, line_no, store, !naive));
  }

  std::vector<Query> batch;
  for (const auto& p : lines) {
    if (p.query) batch.push_back(*p.query);
  }
  const std::vector<QueryResult> results =
      naive ? naive_query_batch(store, batch, qcfg) : drew_query_batch(store, batch, qcfg);

  std::string text;
  std::size_t next = 0;
  for (const auto& p : lines) {
    json j;
    if (p.query) {
      j = query_result_json(p.query_id, results[next++], p.query->ground_truth);
    } else {
      j = json{{"query_id", p.query_id}, {"error", {{"code", p.error->first}, {"message", p.error->second}}}};
    }
    text += j.dump();
    text += '\n';
  }
  if (out_path.empty() || out_path == "-") {
    out << text;
  } else {
    write_file_atomic(out_path, text);
  }
  return kOk;
}

// --- eval ------------------------------------------------------------------

const std::vector<std::string> kSections = {"accuracy", "epsilon", "capacity-curve", "cluster-subset"};

int cmd_eval(const RunConfig& c, std::vector<std::string> only, std::ostream& out) {
  if (only.empty()) only = kSections;
  for (const auto& s : only) {
    if (std::find(kSections.begin(), kSections.end(), s) == kSections.end()) {
      throw UsageError("--only accepts accuracy, epsilon, capacity-curve, cluster-subset; got '" + s + "'");
    }
  }
  auto wants = [&](const char* s) { return std::find(only.begin(), only.end(), s) != only.end(); };
  const QueryConfig qcfg = validated([&] { return query_config(c); });
  if (c.n_queries == 0) throw UsageError("n_queries must be positive");
  const fs::path dir = output_dir(c);

  EvalReport report;
  json meta_cfg = to_json(c);
  meta_cfg.erase("output_dir");
  meta_cfg.erase("golden");
  report.meta = json{{"seed", c.seed}, {"sections", only}, {"config", meta_cfg}};

  const bool needs_store = wants("accuracy") || wants("epsilon") || wants("cluster-subset");
  std::optional<Store> store;
  if (needs_store) {
    store = c.store.empty() ? build_store(c) : load_store(c.store);
    report.meta["store"] = json{{"N", store->size()},
                                {"d", store->dim()},
                                {"k", store->cluster_bits()},
                                {"n", store->spec().n},
                                {"design_p", store->spec().design_p},
                                {"partition_seed", store->partition_seed()}};
  }

  if (wants("accuracy")) {
    const auto suite = suite_of(c);
    report.meta["suite"] = drew::to_json(std::span<const AttackConfig>(suite));
    EvalConfig ecfg;
    ecfg.query = qcfg;
    ecfg.n_queries = c.n_queries;
    ecfg.seed = c.seed;
    ecfg.top_p = c.top_p;
    ecfg.roc_in = c.roc_in;
    ecfg.roc_out = c.roc_out;
    ecfg.include_roc = c.roc_in > 0 && c.roc_out > 0;
    const EmbeddingMatrix holdout = make_holdout(std::max<std::size_t>(c.roc_out, 1024), store->dim(), c.seed);
    EvalReport acc = run_accuracy_eval(*store, suite, ecfg, holdout);
    report.records = std::move(acc.records);
    report.checks = std::move(acc.checks);
  }

  std::optional<GoldenStatus> golden_status;
  if (wants("epsilon")) {
    const std::size_t trials = c.epsilon_trials;
    if (trials == 0) throw UsageError("epsilon_trials must be positive");
    const EpsilonEstimate zero =
        estimate_epsilon_r(*store, AttackConfig{"flip@0", 0.0, 0.0, false}, std::min<std::size_t>(trials, 10000), c.seed, qcfg);
    report.checks.push_back({"epsilon_r@0 is zero", zero.n_wrong_reliable == 0,
                             std::to_string(zero.n_wrong_reliable) + " wrong of " + std::to_string(zero.n_reliable) +
                                 " reliable"});
    const auto grid = default_epsilon_grid();
    report.epsilon_curve = epsilon_r_curve(*store, grid, trials, c.seed, qcfg);
    const fs::path golden_path = c.golden.empty() ? dir / "epsilon_r.json" : fs::path(c.golden);
    if (fs::exists(golden_path)) {
      const GoldenComparison cmp =
          compare_epsilon_golden(read_json_file(golden_path), report.epsilon_curve, store->spec(), qcfg);
      golden_status = cmp.status;
      for (const auto& chk : cmp.checks) report.checks.push_back({"golden " + chk.name, chk.passed, chk.detail});
    } else {
      golden_status = GoldenStatus::calibration_required;
      fs::create_directories(dir);
      write_file_atomic(dir / "epsilon_r.candidate.json",
                        epsilon_golden_json(report.epsilon_curve, store->spec(), qcfg, trials, c.seed).dump(2) + "\n");
    }
  }

  if (wants("capacity-curve")) {
    report.capacity = capacity_curve(parse_grid("0:0.49:0.01"));
  }

  if (wants("cluster-subset")) {
    const auto suite = suite_of(c);
    const AttackConfig* pick = nullptr;
    for (const auto& a : suite) {
      if (!a.out_of_dataset && (pick == nullptr || a.sigma > pick->sigma)) pick = &a;
    }
    if (pick != nullptr) {
      std::vector<int> ks;
      for (int k = 0; k <= kMaxClusterBits; k += 2) ks.push_back(k);
      report.meta["cluster_subset_attack"] = pick->name;
      report.cluster_subset =
          cluster_subset_accuracy(*store, *pick, ks, std::min<std::size_t>(c.n_queries, 1000), c.seed);
    }
  }

  fs::create_directories(dir);
  write_file_atomic(dir / "report.json", drew::to_json(report).dump(2) + "\n");
  write_file_atomic(dir / "curves.csv", curves_csv(report));

  json failed = json::array();
  for (const auto& chk : report.checks) {
    if (!chk.passed) failed.push_back({{"name", chk.name}, {"detail", chk.detail}});
  }
  json summary{{"report", (dir / "report.json").string()},
               {"curves", (dir / "curves.csv").string()},
               {"checks", report.checks.size()},
               {"failed", failed}};
  if (golden_status) {
    summary["golden"] = *golden_status == GoldenStatus::pass   ? "pass"
                        : *golden_status == GoldenStatus::fail ? "fail"
                                                               : "calibration-required";
    if (*golden_status == GoldenStatus::calibration_required) {
      summary["candidate"] = (dir / "epsilon_r.candidate.json").string();
    }
  }
  out << summary.dump() << '\n';
  if (!failed.empty()) return kViolation;
  if (golden_status == GoldenStatus::calibration_required) return kCalibrationRequired;
  return kOk;
}

// --- capacity-curve / ecc-bench ------------------------------------------

int cmd_capacity(const std::string& grid_text, std::optional<double> rate, const std::string& out_path,
                 std::ostream& out) {
  std::string text;
  if (rate) {
    const double p = validated([&] { return max_tolerable_flip_rate(*rate); });
    text = json{{"rate", *rate}, {"max_tolerable_p_A", p}}.dump() + "\n";
  } else {
    const auto grid = parse_grid(grid_text);
    const auto rows = validated([&] { return capacity_curve(grid); });
    text = "p_A,rate,redundancy,unbounded\n";
    for (const auto& r : rows) {
      text += num(r.p_flip) + ',' + num(r.rate) + ',' + (r.unbounded ? "inf" : num(r.redundancy)) + ',' +
              (r.unbounded ? "true" : "false") + '\n';
    }
  }
  if (out_path.empty() || out_path == "-") {
    out << text;
  } else {
    write_file_atomic(out_path, text);
  }
  return kOk;
}

int cmd_ecc_bench(const RunConfig& c, const std::string& grid_text, std::size_t trials, const std::string& out_path,
                  std::ostream& out) {
  const QueryConfig qcfg = validated([&] { return query_config(c); });
  const PolarCodeSpec spec = validated([&] { return construct_code(c.k, c.n, c.design_p); });
  const auto grid = parse_grid(grid_text);
  for (double p : grid) {
    if (p < 0.0 || p > 0.5) throw UsageError("ecc-bench flip rates must lie in [0, 0.5]");
  }
  if (trials == 0) throw UsageError("trials must be positive");

  std::string text = "p_A,trials,frame_errors,fer,reliable,reliable_errors,epsilon_r\n";
  for (double p : grid) {
    Rng rng = Rng::derive(c.seed, "ecc-bench/" + num(p));
    std::size_t errors = 0;
    std::size_t reliable = 0;
    std::size_t reliable_errors = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::uint32_t idx = cluster_from_word(rng.bits32(), spec.k);
      const ClusterCode sent = ClusterCode::from_index(idx, spec.k);
      const WatermarkKey received = flip_bits(encode(spec, sent), p, rng);
      const DecodeOutcome d = decode(spec, llr_from_key(spec, received, spec.design_p), qcfg.decoder_options());
      const bool wrong = !(d.code == sent);
      errors += wrong;
      reliable += d.reliable;
      reliable_errors += d.reliable && wrong;
    }
    text += num(p) + ',' + std::to_string(trials) + ',' + std::to_string(errors) + ',' +
            num(static_cast<double>(errors) / static_cast<double>(trials)) + ',' + std::to_string(reliable) + ',' +
            std::to_string(reliable_errors) + ',' +
            num(reliable == 0 ? 0.0 : static_cast<double>(reliable_errors) / static_cast<double>(reliable)) + '\n';
  }
  if (out_path.empty() || out_path == "-") {
    out << text;
  } else {
    write_file_atomic(out_path, text);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"drew: watermark-routed embedding retrieval"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path;
  Overrides common;
  auto add_common = [&](CLI::App* sub, bool code_params, bool query_params) {
    sub->add_option("--config", config_path, "JSON config file; flags override it");
    common.add(sub, "--seed", &RunConfig::seed, "master seed");
    common.add(sub, "--out-dir", &RunConfig::output_dir, "output directory (default $DREW_OUTPUT_DIR or .)");
    if (code_params) {
      common.add(sub, "--k", &RunConfig::k, "cluster code bits");
      common.add(sub, "--n", &RunConfig::n, "watermark key bits");
      common.add(sub, "--design-p", &RunConfig::design_p, "design crossover probability");
    }
    if (query_params) {
      common.add(sub, "--threshold", &RunConfig::reliability_threshold, "reliability threshold");
      common.add(sub, "--tau-r", &RunConfig::tau_r, "no-match similarity threshold");
      common.add(sub, "--reliability-mode", &RunConfig::reliability_mode, "last-bit or min-bit");
      common.add(sub, "--check-node", &RunConfig::check_node, "exact or min-sum");
    }
  };

  CLI::App* build = app.add_subcommand("build", "build a clustered store");
  add_common(build, true, false);
  common.add(build, "--csv", &RunConfig::csv, "embeddings CSV with header id,v0,...");
  std::vector<std::string> synthetic;
  CLI::Option* synthetic_opt =
      build->add_option("--synthetic", synthetic, "synthetic store: N=<count> d=<dim>")->expected(1, 2);
  common.add(build, "--out", &RunConfig::store, "store file (default <out-dir>/store.drew)");

  CLI::App* query = app.add_subcommand("query", "answer JSON-lines queries");
  add_common(query, false, true);
  common.add(query, "--store", &RunConfig::store, "store file");
  std::string queries_path;
  query->add_option("--queries", queries_path, "JSON-lines query file, - for stdin")->required();
  bool naive = false;
  query->add_flag("--naive", naive, "search the whole store, no routing");
  std::string query_out;
  query->add_option("--out", query_out, "output file (default stdout)");

  CLI::App* eval = app.add_subcommand("eval", "run the evaluation suite");
  add_common(eval, true, true);
  common.add(eval, "--store", &RunConfig::store, "store file (default: synthetic store)");
  common.add(eval, "--suite", &RunConfig::suite, "attack suite JSON (default: built-in)");
  common.add(eval, "--n-queries", &RunConfig::n_queries, "paired queries per attack");
  common.add(eval, "--epsilon-trials", &RunConfig::epsilon_trials, "trials per epsilon_r point");
  common.add(eval, "--roc-in", &RunConfig::roc_in, "in-dataset ROC queries (0 disables ROC)");
  common.add(eval, "--roc-out", &RunConfig::roc_out, "out-of-dataset ROC queries (0 disables ROC)");
  common.add(eval, "--top-p", &RunConfig::top_p, "top-p list")->delimiter(',');
  common.add(eval, "--golden", &RunConfig::golden, "golden epsilon_r file (default <out-dir>/epsilon_r.json)");
  std::vector<std::string> eval_synthetic;
  CLI::Option* eval_synthetic_opt =
      eval->add_option("--synthetic", eval_synthetic, "synthetic store: N=<count> d=<dim>")->expected(1, 2);
  std::vector<std::string> only;
  eval->add_option("--only", only, "sections: accuracy, epsilon, capacity-curve, cluster-subset")->delimiter(',');

  CLI::App* capacity = app.add_subcommand("capacity-curve", "rate and redundancy limits");
  add_common(capacity, false, false);
  std::string cap_grid = "0:0.49:0.01";
  capacity->add_option("--grid", cap_grid, "flip rates, start:stop:step or a,b,c");
  std::optional<double> cap_rate;
  double rate_value = 0.0;
  CLI::Option* rate_opt =
      capacity->add_option("--rate", rate_value, "print the largest flip rate a code rate tolerates");
  std::string cap_out;
  capacity->add_option("--out", cap_out, "output CSV (default stdout)");

  CLI::App* bench = app.add_subcommand("ecc-bench", "frame error rate sweep of the polar code");
  add_common(bench, true, true);
  std::string bench_grid = "0:0.3:0.05";
  bench->add_option("--grid", bench_grid, "flip rates, start:stop:step or a,b,c");
  std::size_t bench_trials = 10000;
  bench->add_option("--trials", bench_trials, "frames per flip rate");
  std::string bench_out;
  bench->add_option("--out", bench_out, "output CSV (default stdout)");

  try {
    std::vector<std::string> argv_store;
    argv_store.push_back("drew");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "usage", e.what());
    return kUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      try {
        cfg = run_config_from_json(read_json_file(config_path));
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
    }
    common.apply(cfg);
    if (synthetic_opt->count() > 0) parse_synthetic(synthetic, cfg);
    if (eval_synthetic_opt->count() > 0) parse_synthetic(eval_synthetic, cfg);
    if (rate_opt->count() > 0) cap_rate = rate_value;

    if (build->parsed()) return cmd_build(cfg, out);
    if (query->parsed()) return cmd_query(cfg, queries_path, naive, query_out, in, out);
    if (eval->parsed()) return cmd_eval(cfg, only, out);
    if (capacity->parsed()) return cmd_capacity(cap_grid, cap_rate, cap_out, out);
    if (bench->parsed()) return cmd_ecc_bench(cfg, bench_grid, bench_trials, bench_out, out);
    emit_error(err, "usage", "no command");
    return kUsage;
  } catch (const UsageError& e) {
    emit_error(err, "usage", e.what());
    return kUsage;
  } catch (const Error& e) {
    emit_error(err, std::string(to_string(e.code())), e.what());
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    emit_error(err, "io", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    emit_error(err, "internal", e.what());
    return kDataError;
  }
}

}  // namespace drew::cli
