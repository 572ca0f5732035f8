#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "drew/store_io.hpp"
#include "helpers.hpp"

using namespace drew;
using nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string error_code(const Result& r) { return json::parse(r.err).at("error").at("code").get<std::string>(); }

}  // namespace

TEST_CASE("cli: usage errors") {
  CHECK(run_cli({}).code == cli::kUsage);
  CHECK(run_cli({"frobnicate"}).code == cli::kUsage);
  testing::TempDir dir;
  const Result r = run_cli({"build", "--synthetic", "N=50", "d=4", "--k", "12", "--n", "8", "--out-dir", dir.path().string()});
  CHECK(r.code == cli::kUsage);
  CHECK(error_code(r) == "usage");
  CHECK(run_cli({"build", "--out-dir", dir.path().string()}).code == cli::kUsage);
  CHECK(run_cli({"capacity-curve", "--grid", "0:0.6:0.1"}).code == cli::kUsage);
  CHECK(run_cli({"eval", "--only", "nonsense", "--out-dir", dir.path().string()}).code == cli::kUsage);
  CHECK(run_cli({"--help"}).code == cli::kOk);
}

TEST_CASE("cli: data errors") {
  testing::TempDir dir;
  const Result r = run_cli({"query", "--store", (dir / "missing.drew").string(), "--queries", "-"});
  CHECK(r.code == cli::kDataError);
  CHECK(error_code(r) == "io");
  std::ofstream(dir / "bad.csv") << "id,v0\n1,0\n";
  CHECK(run_cli({"build", "--csv", (dir / "bad.csv").string(), "--k", "1", "--n", "2", "--out-dir", dir.path().string()}).code ==
        cli::kDataError);
}

TEST_CASE("cli: build is reproducible byte for byte") {
  testing::TempDir dir;
  const std::vector<std::string> base = {"build", "--synthetic", "N=400", "d=8", "--k", "4", "--n", "30", "--seed", "3"};
  auto args = base;
  args.insert(args.end(), {"--out", (dir / "a.drew").string()});
  const Result a = run_cli(args);
  REQUIRE(a.code == cli::kOk);
  const json summary = json::parse(a.out);
  CHECK(summary["N"] == 400);
  CHECK(summary["cluster_histogram"].size() == 16);
  args = base;
  args.insert(args.end(), {"--out", (dir / "b.drew").string()});
  REQUIRE(run_cli(args).code == cli::kOk);
  CHECK(slurp(dir / "a.drew") == slurp(dir / "b.drew"));

  const Store store = load_store(dir / "a.drew");
  write_embeddings_csv(store, dir / "e.csv");
  for (const char* name : {"c.drew", "d.drew"}) {
    REQUIRE(run_cli({"build", "--csv", (dir / "e.csv").string(), "--k", "4", "--n", "30", "--seed", "3", "--out",
                     (dir / name).string()}).code == cli::kOk);
  }
  CHECK(slurp(dir / "c.drew") == slurp(dir / "d.drew"));
  // Re-normalizing a unit vector may move its last bit; everything else survives the CSV trip.
  const Store from_csv = load_store(dir / "c.drew");
  REQUIRE(from_csv.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    CHECK(from_csv.id(i) == store.id(i));
    CHECK(from_csv.cluster(i) == store.cluster(i));
    for (std::size_t j = 0; j < 8; ++j) CHECK(from_csv.embedding(i)[j] == doctest::Approx(store.embedding(i)[j]).epsilon(1e-6));
  }
}

TEST_CASE("cli: query keeps order, reports bad lines and honours --naive") {
  testing::TempDir dir;
  REQUIRE(run_cli({"build", "--synthetic", "N=600", "d=8", "--k", "4", "--n", "30", "--out", (dir / "s.drew").string()}).code ==
          cli::kOk);
  const Store store = load_store(dir / "s.drew");
  Rng rng(5);
  std::string input;
  std::vector<json> sent;
  for (int i = 0; i < 30; ++i) {
    const std::size_t pos = rng.below(store.size());
    const WatermarkKey key = flip_bits(store.key(pos), 0.2, rng);
    std::vector<float> emb(store.embedding(pos).begin(), store.embedding(pos).end());
    emb = perturb_embedding(emb, 0.3, rng);
    json q{{"query_id", "q" + std::to_string(i)}, {"embedding", emb}, {"key", key.to_string()},
           {"ground_truth_id", store.id(pos).value}};
    sent.push_back(q);
    input += q.dump() + "\n";
    if (i == 10) input += "{not json\n";
    if (i == 20) input += json{{"query_id", "short"}, {"embedding", {1.0, 2.0}}, {"key", key.to_string()}}.dump() + "\n";
  }
  const Result r = run_cli({"query", "--store", (dir / "s.drew").string(), "--queries", "-"}, input);
  REQUIRE(r.code == cli::kOk);
  std::vector<json> lines;
  std::istringstream ls(r.out);
  for (std::string l; std::getline(ls, l);) lines.push_back(json::parse(l));
  REQUIRE(lines.size() == 32);
  CHECK(lines[11]["error"]["code"] == "format");
  CHECK(lines[11]["query_id"] == 12);
  CHECK(lines[22]["query_id"] == "short");
  CHECK(lines[22]["error"]["code"] == "dimension_mismatch");

  const Result naive = run_cli({"query", "--store", (dir / "s.drew").string(), "--queries", "-", "--naive"}, input);
  REQUIRE(naive.code == cli::kOk);
  std::istringstream ns(naive.out);
  std::size_t i = 0;
  for (std::string l; std::getline(ns, l); ++i) {
    const json n = json::parse(l);
    CHECK(n["query_id"] == lines[i]["query_id"]);
    if (lines[i].contains("error")) continue;
    CHECK(n["reliable"].is_null());
    if (lines[i]["reliable"] == false) CHECK(n["matched_id"] == lines[i]["matched_id"]);
  }
}

TEST_CASE("cli: capacity curve and rate") {
  const Result r = run_cli({"capacity-curve", "--grid", "0,0.1,0.2"});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out.rfind("p_A,rate,redundancy,unbounded\n0,1,1,false\n", 0) == 0);
  const Result rate = run_cli({"capacity-curve", "--rate", "0.1"});
  REQUIRE(rate.code == cli::kOk);
  CHECK(json::parse(rate.out)["max_tolerable_p_A"].get<double>() == doctest::Approx(0.3160).epsilon(3e-3));
}

TEST_CASE("cli: eval --only capacity-curve writes a report") {
  testing::TempDir dir;
  const Result r = run_cli({"eval", "--only", "capacity-curve", "--out-dir", dir.path().string()});
  REQUIRE(r.code == cli::kOk);
  const json report = json::parse(slurp(dir / "report.json"));
  CHECK(report["capacity_curve"].size() == 50);
  CHECK(std::filesystem::exists(dir / "curves.csv"));
}

TEST_CASE("cli: golden epsilon calibration cycle") {
  testing::TempDir dir;
  const std::vector<std::string> base = {"eval", "--only", "epsilon", "--synthetic", "N=2000", "d=8",
                                         "--epsilon-trials", "2000", "--out-dir", dir.path().string()};
  auto with_seed = [&](const char* seed) {
    auto a = base;
    a.insert(a.end(), {"--seed", seed});
    return a;
  };
  const Result first = run_cli(with_seed("1"));
  CHECK(first.code == cli::kCalibrationRequired);
  REQUIRE(std::filesystem::exists(dir / "epsilon_r.candidate.json"));
  std::filesystem::copy_file(dir / "epsilon_r.candidate.json", dir / "epsilon_r.json");

  const Result second = run_cli(with_seed("2"));
  CHECK(second.code == cli::kOk);
  CHECK(json::parse(second.out)["golden"] == "pass");

  json golden = json::parse(slurp(dir / "epsilon_r.json"));
  for (auto& p : golden["points"]) {
    if (p["p_A"].get<double>() > 0.29) p["n_wrong_reliable"] = p["n_reliable"];
  }
  std::ofstream(dir / "epsilon_r.json") << golden.dump();
  const Result third = run_cli(with_seed("2"));
  CHECK(third.code == cli::kViolation);
  const json failed = json::parse(third.out)["failed"];
  REQUIRE(failed.size() == 1);
  CHECK(failed[0]["name"] == "golden epsilon_r@0.3");
}

TEST_CASE("cli: config file with flag overrides") {
  testing::TempDir dir;
  cli::RunConfig cfg;
  cfg.k = 3;
  cfg.n = 12;
  cfg.seed = 8;
  cfg.top_p = {2, 3};
  CHECK(cli::run_config_from_json(cli::to_json(cfg)) == cfg);
  CHECK_THROWS(cli::run_config_from_json(json{{"bogus", 1}}));
  CHECK(cli::run_config_from_json(json{{"k", 5}}, cfg).n == 12);

  std::ofstream(dir / "cfg.json") << cli::to_json(cfg).dump();
  const Result r = run_cli({"build", "--config", (dir / "cfg.json").string(), "--synthetic", "N=100", "d=4", "--k", "2",
                            "--out", (dir / "s.drew").string()});
  REQUIRE(r.code == cli::kOk);
  const Store store = load_store(dir / "s.drew");
  CHECK(store.cluster_bits() == 2);
  CHECK(store.spec().n == 12);
  CHECK(store.partition_seed() == 8);

  std::ofstream(dir / "bad.json") << "{\"bogus\": 1}";
  CHECK(run_cli({"build", "--config", (dir / "bad.json").string(), "--synthetic", "N=10", "d=4"}).code == cli::kUsage);
}

TEST_CASE("cli: ecc-bench") {
  const Result r = run_cli({"ecc-bench", "--grid", "0,0.1", "--trials", "200"});
  REQUIRE(r.code == cli::kOk);
  std::istringstream ls(r.out);
  std::string header, zero;
  std::getline(ls, header);
  std::getline(ls, zero);
  CHECK(header == "p_A,trials,frame_errors,fer,reliable,reliable_errors,epsilon_r");
  CHECK(zero == "0,200,0,0,200,0,0");
}
