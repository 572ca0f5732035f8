#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "drew/error.hpp"
#include "drew/store_io.hpp"
#include "helpers.hpp"

using namespace drew;

namespace {

// Double-precision brute force over the positions in `positions`.
std::vector<std::pair<double, std::uint64_t>> brute_force(const Store& store, const std::vector<std::size_t>& positions,
                                                          std::span<const float> q, std::size_t p) {
  std::vector<std::pair<double, std::uint64_t>> all;
  for (std::size_t pos : positions) {
    double s = 0;
    const auto e = store.embedding(pos);
    for (std::size_t j = 0; j < e.size(); ++j) s += static_cast<double>(e[j]) * q[j];
    all.emplace_back(s, store.id(pos).value);
  }
  std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  all.resize(std::min(p, all.size()));
  return all;
}

std::vector<std::size_t> all_positions(const Store& store) {
  std::vector<std::size_t> v(store.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

std::vector<float> random_query(int dim, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (float& x : v) x = static_cast<float>(rng.normal());
  return normalized(v);
}

}  // namespace

TEST_CASE("normalized") {
  const auto v = normalized(std::vector<float>{3, 4});
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(normalized(std::vector<float>{0, 0}), Error);
  CHECK_THROWS_AS(normalized(std::vector<float>{1, std::numeric_limits<float>::quiet_NaN()}), Error);
}

TEST_CASE("dot matches a double reference for awkward lengths") {
  Rng rng(1);
  for (std::size_t dim : {1u, 3u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 100u}) {
    std::vector<float> a(dim), b(dim);
    for (auto& x : a) x = static_cast<float>(rng.normal());
    for (auto& x : b) x = static_cast<float>(rng.normal());
    double ref = 0;
    for (std::size_t i = 0; i < dim; ++i) ref += static_cast<double>(a[i]) * b[i];
    CHECK(dot(a.data(), b.data(), dim) == doctest::Approx(ref).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("ingest rejects bad rows") {
  std::vector<RawRow> rows = {{{1}, {1, 0}}, {{2}, {0, 1}}};
  CHECK(Store::ingest(rows, 2).size() == 2);
  rows.push_back({{1}, {1, 1}});
  CHECK_THROWS_AS(Store::ingest(rows, 2), Error);
  rows.back() = {{3}, {1, 1, 1}};
  try {
    Store::ingest(rows, 2);
    FAIL("expected a dimension mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::dimension_mismatch);
  }
  rows.back() = {{3}, {0, 0}};
  CHECK_THROWS_AS(Store::ingest(rows, 2), Error);
}

TEST_CASE("preprocess: clusters, keys and members") {
  const Store store = testing::small_store(2000, 8, 5, 40, 3);
  CHECK(store.clustered());
  CHECK(store.cluster_count() == 32);
  std::size_t total = 0;
  for (std::uint32_t c = 0; c < 32; ++c) {
    const auto m = store.members(c);
    total += m.size();
    CHECK(std::is_sorted(m.begin(), m.end()));
    for (std::uint32_t pos : m) CHECK(store.cluster(pos) == c);
  }
  CHECK(total == store.size());
  for (std::size_t pos = 0; pos < store.size(); pos += 97) {
    CHECK(store.key(pos) == encode(store.spec(), ClusterCode::from_index(store.cluster(pos), 5)));
    CHECK(store.position(store.id(pos)) == pos);
  }
  CHECK_FALSE(store.position(EntryId{999999}).has_value());
}

TEST_CASE("property: partitions are nested across k") {
  const auto words = partition_words(500, 77);
  const Store raw = Store::ingest(synthetic_rows(500, 4, 1), 4);
  for (int k = 1; k <= 8; ++k) {
    const Store s = preprocess(raw, k, 77, construct_code(k, 2 * k));
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(s.cluster(i) == cluster_from_word(words[i], k));
      CHECK((s.cluster(i) >> 1) == (k > 1 ? cluster_from_word(words[i], k - 1) : 0u));
    }
  }
}

TEST_CASE("property: scans agree with a brute-force oracle and cluster max <= full max") {
  Rng rng(12);
  for (int inst = 0; inst < 100; ++inst) {
    const int dim = 1 + static_cast<int>(rng.below(40));
    const std::size_t count = 1 + rng.below(600);
    const int k = 1 + static_cast<int>(rng.below(5));
    const Store store = testing::small_store(count, dim, k, k + 4, 100 + static_cast<std::uint64_t>(inst));
    const auto q = random_query(dim, rng);
    const std::size_t p = 1 + rng.below(10);

    const MatchList full = top_matches(store, Scope::full(), q, p);
    const auto ref = brute_force(store, all_positions(store), q, p);
    REQUIRE(full.size() == ref.size());
    for (std::size_t i = 0; i < full.size(); ++i) {
      CHECK(full[i].id.value == ref[i].second);
      CHECK(full[i].similarity == doctest::Approx(ref[i].first).epsilon(1e-5).scale(1.0));
    }
    CHECK(std::is_sorted(full.begin(), full.end(), ranks_before));

    const auto c = static_cast<std::uint32_t>(rng.below(store.cluster_count()));
    const MatchList in_cluster = top_matches(store, Scope::cluster(c), q, p);
    const auto members = store.members(c);
    const auto cref = brute_force(store, std::vector<std::size_t>(members.begin(), members.end()), q, p);
    REQUIRE(in_cluster.size() == cref.size());
    for (std::size_t i = 0; i < in_cluster.size(); ++i) CHECK(in_cluster[i].id.value == cref[i].second);
    if (!in_cluster.empty()) CHECK(in_cluster[0].similarity <= full[0].similarity);
  }
}

TEST_CASE("ties break by ascending id") {
  std::vector<RawRow> rows = {{{9}, {1, 0}}, {{4}, {1, 0}}, {{6}, {0, 1}}, {{2}, {1, 0}}};
  const Store store = Store::ingest(rows, 2);
  const auto m = top_matches(store, Scope::full(), std::vector<float>{1, 0}, 3);
  REQUIRE(m.size() == 3);
  CHECK(m[0].id.value == 2);
  CHECK(m[1].id.value == 4);
  CHECK(m[2].id.value == 9);
  CHECK(top_matches(store, Scope::full(), std::vector<float>{1, 0}, 0).empty());
  CHECK_THROWS_AS(top_matches(store, Scope::full(), std::vector<float>{1, 0, 0}, 1), Error);
}

TEST_CASE("property: batched scans are bit-identical to single scans") {
  Rng rng(21);
  for (int dim : {3, 8, 13, 64}) {
    const Store store = testing::small_store(1500, dim, 3, 8, static_cast<std::uint64_t>(dim));
    for (std::size_t nq : {1u, 7u, 8u, 19u}) {
      std::vector<std::vector<float>> qs;
      for (std::size_t i = 0; i < nq; ++i) qs.push_back(random_query(dim, rng));
      // Include an exact stored vector so ties with the query itself occur.
      qs[0].assign(store.embedding(5).begin(), store.embedding(5).end());
      std::vector<std::span<const float>> views(qs.begin(), qs.end());
      for (std::size_t p : {1u, 5u}) {
        for (const Scope scope : {Scope::full(), Scope::cluster(2)}) {
          const auto batch = top_matches_batch(store, scope, views, p);
          REQUIRE(batch.size() == nq);
          for (std::size_t i = 0; i < nq; ++i) CHECK(batch[i] == top_matches(store, scope, views[i], p));
        }
      }
    }
  }
}

TEST_CASE("store I/O roundtrip and rejection") {
  testing::TempDir dir;
  const Store store = testing::small_store(300, 12, 4, 30, 5);
  const auto path = dir / "s.drew";
  save_store(store, path);
  const Store back = load_store(path);
  CHECK(back == store);
  CHECK(back.partition_seed() == store.partition_seed());
  CHECK(serialize_store(back) == serialize_store(store));
  CHECK_THROWS_AS(load_store(path, 13), Error);

  const std::vector<char> bytes = serialize_store(store);
  auto expect = [&](std::vector<char> b, Errc code) {
    try {
      deserialize_store(b);
      FAIL("expected rejection");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  {
    auto b = bytes;
    b[b.size() / 2] ^= 0x10;
    expect(b, Errc::checksum);
  }
  {
    auto b = bytes;
    b[0] = 'X';
    expect(b, Errc::format);
  }
  {
    auto b = bytes;
    b[8] = 9;
    expect(b, Errc::format);
  }
  expect(std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() - 3)), Errc::format);
  expect(std::vector<char>(bytes.begin(), bytes.begin() + 10), Errc::format);
  {
    auto b = bytes;
    b.push_back(0);
    expect(b, Errc::format);
  }
  try {
    load_store(dir / "missing.drew");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
  }
}

TEST_CASE("CSV roundtrip and parsing errors") {
  testing::TempDir dir;
  const Store store = testing::small_store(50, 5, 2, 6, 8);
  write_embeddings_csv(store, dir / "e.csv");
  const CsvEmbeddings csv = read_embeddings_csv(dir / "e.csv");
  CHECK(csv.dim == 5);
  REQUIRE(csv.rows.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(csv.rows[i].id == store.id(i));
    // Shortest round-trip formatting: the written floats parse back exactly.
    CHECK(std::equal(csv.rows[i].values.begin(), csv.rows[i].values.end(), store.embedding(i).begin()));
  }

  CHECK(parse_embeddings_csv("id,v0,v1\n1,0.5,0.5\n").rows.size() == 1);
  CHECK_THROWS_AS(parse_embeddings_csv(""), Error);
  CHECK_THROWS_AS(parse_embeddings_csv("id,v0,v1\n1,0.5\n"), Error);
  CHECK_THROWS_AS(parse_embeddings_csv("id,v0,v1\n1,0.5,abc\n"), Error);
  CHECK_THROWS_AS(parse_embeddings_csv("id,v0,v1\n-1,0.5,0.5\n"), Error);
}

TEST_CASE("atomic write replaces contents") {
  testing::TempDir dir;
  write_file_atomic(dir / "f.txt", "one");
  write_file_atomic(dir / "f.txt", "two");
  std::ifstream in(dir / "f.txt");
  std::string s;
  in >> s;
  CHECK(s == "two");
}
