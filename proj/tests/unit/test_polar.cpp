#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "drew/error.hpp"
#include "drew/polar_code.hpp"
#include "drew/rng.hpp"

using namespace drew;

namespace {

// Generator matrix built directly as the Kronecker power of [[1,0],[1,1]].
std::vector<std::vector<int>> kron_generator(int block_len) {
  std::vector<std::vector<int>> g{{1}};
  while (static_cast<int>(g.size()) < block_len) {
    const std::size_t m = g.size();
    std::vector<std::vector<int>> next(2 * m, std::vector<int>(2 * m, 0));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        next[i][j] = g[i][j];
        next[m + i][j] = g[i][j];
        next[m + i][m + j] = g[i][j];
      }
    }
    g = std::move(next);
  }
  return g;
}

// Encoder oracle: u * G over GF(2), first n positions kept.
std::vector<int> oracle_encode(const PolarCodeSpec& spec, const ClusterCode& code) {
  const auto g = kron_generator(spec.block_len);
  const auto info = spec.information_set();
  std::vector<int> u(static_cast<std::size_t>(spec.block_len), 0);
  for (std::size_t i = 0; i < info.size(); ++i) u[static_cast<std::size_t>(info[i])] = code[i];
  std::vector<int> x(static_cast<std::size_t>(spec.n), 0);
  for (int j = 0; j < spec.n; ++j) {
    for (int i = 0; i < spec.block_len; ++i) x[static_cast<std::size_t>(j)] ^= u[static_cast<std::size_t>(i)] & g[i][j];
  }
  return x;
}

std::vector<int> as_ints(const WatermarkKey& key) { return {key.bits().begin(), key.bits().end()}; }

ClusterCode random_code(int k, std::mt19937_64& gen) {
  std::vector<Bit> bits(static_cast<std::size_t>(k));
  for (Bit& b : bits) b = static_cast<Bit>(gen() & 1u);
  return ClusterCode(std::move(bits));
}

}  // namespace

TEST_CASE("construct_code: default parameters") {
  const PolarCodeSpec spec = construct_code(10, 100, 0.1);
  CHECK(spec.block_len == 128);
  CHECK(spec.frozen_set.size() == 118);
  REQUIRE(spec.shortened_set.size() == 28);
  for (int i = 0; i < 28; ++i) CHECK(spec.shortened_set[static_cast<std::size_t>(i)] == 100 + i);
  for (int s : spec.shortened_set) {
    CHECK(std::binary_search(spec.frozen_set.begin(), spec.frozen_set.end(), s));
  }
  CHECK(spec.information_set().size() == 10);
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("construct_code: hand-run Bhattacharyya recursion for block_len 4") {
  // z0 = 2 sqrt(0.1 * 0.9) = 0.6; h = 2 gives (0.84, 0.84, 0.36, 0.36);
  // h = 1 gives (0.9744, 0.7056, 0.5904, 0.1296).
  const std::vector<double> expected = {0.9744, 0.7056, 0.5904, 0.1296};
  const auto z = bhattacharyya_parameters(4, 0.1, {});
  REQUIRE(z.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(z[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  const PolarCodeSpec spec = construct_code(1, 4, 0.1);
  CHECK(spec.information_set() == std::vector<int>{3});
  CHECK(encode(spec, ClusterCode::from_index(1, 1)).to_string() == "1111");
  CHECK(encode(spec, ClusterCode::from_index(0, 1)).to_string() == "0000");
}

TEST_CASE("construct_code: rate-1 code has no frozen bits") {
  const PolarCodeSpec spec = construct_code(4, 4, 0.1);
  CHECK(spec.frozen_set.empty());
  CHECK(spec.shortened_set.empty());
}

TEST_CASE("construct_code rejects bad parameters") {
  CHECK_THROWS_AS(construct_code(10, 8), Error);
  CHECK_THROWS_AS(construct_code(0, 8), Error);
  CHECK_THROWS_AS(construct_code(2, 8, 0.0), Error);
  CHECK_THROWS_AS(construct_code(2, 8, 0.5), Error);
}

TEST_CASE("construct_code is deterministic and JSON round-trips") {
  const PolarCodeSpec a = construct_code(7, 45, 0.07);
  const PolarCodeSpec b = construct_code(7, 45, 0.07);
  CHECK(a == b);
  CHECK(polar_spec_from_json(to_json(a)) == a);
  auto doc = to_json(a);
  doc["frozen_set"].erase(0);
  CHECK_THROWS_AS(polar_spec_from_json(doc), Error);
}

TEST_CASE("encode: rate-1 block of 4 matches the hand-written transform") {
  // Rows of [[1,0],[1,1]] (x) [[1,0],[1,1]].
  const int g4[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 0, 1, 0}, {1, 1, 1, 1}};
  const PolarCodeSpec spec = construct_code(4, 4, 0.1);
  CHECK(encode(spec, ClusterCode::from_index(0b1000, 4)).to_string() == "1000");
  for (std::uint32_t idx = 0; idx < 16; ++idx) {
    const ClusterCode code = ClusterCode::from_index(idx, 4);
    std::string expected(4, '0');
    for (int j = 0; j < 4; ++j) {
      int v = 0;
      for (int i = 0; i < 4; ++i) v ^= code[static_cast<std::size_t>(i)] & g4[i][j];
      expected[static_cast<std::size_t>(j)] = static_cast<char>('0' + v);
    }
    CHECK(encode(spec, code).to_string() == expected);
  }
}

TEST_CASE("encode agrees with the Kronecker generator oracle") {
  std::mt19937_64 gen(11);
  for (auto [k, n] : {std::pair{1, 3}, {3, 7}, {5, 16}, {10, 100}, {12, 33}}) {
    const PolarCodeSpec spec = construct_code(k, n);
    for (int t = 0; t < 50; ++t) {
      const ClusterCode code = random_code(k, gen);
      CHECK(as_ints(encode(spec, code)) == oracle_encode(spec, code));
    }
  }
}

TEST_CASE("encode rejects a code of the wrong length") {
  const PolarCodeSpec spec = construct_code(4, 8);
  CHECK_THROWS_AS(encode(spec, ClusterCode::from_index(1, 3)), Error);
}

TEST_CASE("property: linearity and noiseless roundtrip") {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + static_cast<int>(gen() % 128);
    const int k = 1 + static_cast<int>(gen() % static_cast<unsigned>(std::min(n, 16)));
    const PolarCodeSpec spec = construct_code(k, n);
    const ClusterCode a = random_code(k, gen);
    const ClusterCode b = random_code(k, gen);
    CHECK(encode(spec, a ^ b) == (encode(spec, a) ^ encode(spec, b)));
    const DecodeOutcome d = decode(spec, noiseless_llrs(spec, encode(spec, a)));
    CHECK(d.code == a);
    CHECK(d.reliable);
  }
  CHECK(encode(construct_code(10, 100), ClusterCode::from_index(0, 10)).to_string() == std::string(100, '0'));
}

TEST_CASE("llr_from_key: formula and known bits") {
  const PolarCodeSpec spec = construct_code(2, 6);
  const WatermarkKey key = WatermarkKey::from_string("010000");
  const auto llr = llr_from_key(spec, key, 0.1);
  REQUIRE(llr.size() == 8);
  CHECK(llr[0] == doctest::Approx(2.1972245773362196));
  CHECK(llr[1] == doctest::Approx(-2.1972245773362196));
  CHECK(llr[6] == kKnownBitLlr);
  CHECK(llr[7] == kKnownBitLlr);
  CHECK(llr_from_key(spec, key, 0.3)[6] == kKnownBitLlr);
  CHECK_THROWS_AS(llr_from_key(spec, key, 0.0), Error);
  CHECK_THROWS_AS(llr_from_key(spec, key, 0.5), Error);
  CHECK_THROWS_AS(llr_from_key(spec, WatermarkKey::from_string("0101"), 0.1), Error);
}

TEST_CASE("check node: exact form matches the tanh formula") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-12.0, 12.0);
  for (int t = 0; t < 2000; ++t) {
    const double a = u(gen);
    const double b = u(gen);
    const double ref = 2.0 * std::atanh(std::tanh(a / 2.0) * std::tanh(b / 2.0));
    CHECK(check_node_exact(a, b) == doctest::Approx(ref).epsilon(1e-9).scale(1.0));
    CHECK(std::fabs(check_node_exact(a, b)) <= std::fabs(check_node_min_sum(a, b)) + 1e-12);
  }
  CHECK(std::isfinite(check_node_exact(kKnownBitLlr, kKnownBitLlr)));
  CHECK(check_node_exact(kKnownBitLlr, -kKnownBitLlr) < 0.0);
  CHECK(check_node_exact(0.0, 5.0) == 0.0);
  CHECK(check_node_min_sum(-3.0, 2.0) == -2.0);
  CHECK(variable_node(1.5, 2.0, 0) == 3.5);
  CHECK(variable_node(1.5, 2.0, 1) == 0.5);
}

TEST_CASE("decode: all-zero LLRs carry no information") {
  const PolarCodeSpec spec = construct_code(10, 100);
  const std::vector<double> zeros(128, 0.0);
  for (auto mode : {ReliabilityMode::last_bit, ReliabilityMode::min_bit}) {
    const DecodeOutcome d = decode(spec, zeros, {0.5, mode, CheckNodeRule::exact});
    CHECK(d.reliability_score == 0.0);
    CHECK_FALSE(d.reliable);
  }
}

TEST_CASE("decode: [4,1] code corrects every single flip") {
  const PolarCodeSpec spec = construct_code(1, 4, 0.1);
  for (std::uint32_t c = 0; c < 2; ++c) {
    const ClusterCode code = ClusterCode::from_index(c, 1);
    const WatermarkKey key = encode(spec, code);
    for (std::size_t pos = 0; pos < 4; ++pos) {
      std::vector<Bit> bits(key.bits().begin(), key.bits().end());
      bits[pos] ^= 1;
      CHECK(decode(spec, llr_from_key(spec, WatermarkKey(bits), 0.1)).code == code);
    }
  }
}

TEST_CASE("decode: input validation") {
  const PolarCodeSpec spec = construct_code(3, 8);
  CHECK_THROWS_AS(decode(spec, std::vector<double>(7, 1.0)), Error);
  std::vector<double> bad(8, 1.0);
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(decode(spec, bad), Error);
  bad[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(decode(spec, bad), Error);
}

TEST_CASE("decode: scores and threshold semantics") {
  const PolarCodeSpec spec = construct_code(10, 100);
  Rng rng(17);
  for (int t = 0; t < 200; ++t) {
    std::vector<Bit> bits(100);
    for (Bit& b : bits) b = static_cast<Bit>(rng.bernoulli(0.5));
    const auto llr = llr_from_key(spec, WatermarkKey(bits), 0.1);
    const DecodeOutcome last = decode(spec, llr, {0.5, ReliabilityMode::last_bit, CheckNodeRule::exact});
    const DecodeOutcome strict = decode(spec, llr, {0.5, ReliabilityMode::min_bit, CheckNodeRule::exact});
    CHECK(last.code == strict.code);
    CHECK(last.reliability_score == last.last_bit_score);
    CHECK(strict.reliability_score == strict.min_bit_score);
    CHECK(last.min_bit_score <= last.last_bit_score);
    bool was_reliable = true;
    for (double th : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 1e3}) {
      const DecodeOutcome d = decode(spec, llr, {th, ReliabilityMode::last_bit, CheckNodeRule::exact});
      CHECK(d.reliable == (d.reliability_score >= th));
      CHECK_FALSE((d.reliable && !was_reliable));
      was_reliable = d.reliable;
    }
  }
}

TEST_CASE("decode: noiseless words stay reliable up to half the known-bit constant") {
  std::mt19937_64 gen(23);
  for (auto [k, n] : {std::pair{1, 4}, {4, 4}, {10, 100}, {16, 128}}) {
    const PolarCodeSpec spec = construct_code(k, n);
    const ClusterCode code = random_code(k, gen);
    for (auto mode : {ReliabilityMode::last_bit, ReliabilityMode::min_bit}) {
      const DecodeOutcome d = decode(spec, noiseless_llrs(spec, encode(spec, code)), {kKnownBitLlr / 2, mode, CheckNodeRule::exact});
      CHECK(d.code == code);
      CHECK(d.reliable);
    }
  }
}

TEST_CASE("decode: min-sum mode decodes noiseless words") {
  const PolarCodeSpec spec = construct_code(10, 100);
  for (std::uint32_t idx : {0u, 1u, 513u, 1023u}) {
    const ClusterCode code = ClusterCode::from_index(idx, 10);
    const auto d = decode(spec, noiseless_llrs(spec, encode(spec, code)), {0.5, ReliabilityMode::last_bit, CheckNodeRule::min_sum});
    CHECK(d.code == code);
  }
}

TEST_CASE("SC agrees with exhaustive ML at tiny block lengths") {
  // Transmit the zero codeword; walk every received word of every code with
  // block_len in {2, 4, 8}.
  for (int block_len : {2, 4, 8}) {
    for (int n = block_len / 2 + 1; n <= block_len; ++n) {
      for (int k = 1; k <= n; ++k) {
        const PolarCodeSpec spec = construct_code(k, n, 0.1);
        std::vector<std::vector<int>> codewords;
        for (std::uint32_t c = 0; c < (1u << k); ++c) codewords.push_back(oracle_encode(spec, ClusterCode::from_index(c, k)));
        for (std::uint32_t word = 0; word < (1u << n); ++word) {
          std::vector<Bit> bits(static_cast<std::size_t>(n));
          for (int j = 0; j < n; ++j) bits[static_cast<std::size_t>(j)] = (word >> j) & 1u;
          std::size_t best = std::numeric_limits<std::size_t>::max();
          std::size_t at_zero = 0;
          std::size_t ties = 0;
          for (std::size_t c = 0; c < codewords.size(); ++c) {
            std::size_t dist = 0;
            for (int j = 0; j < n; ++j) dist += codewords[c][static_cast<std::size_t>(j)] != bits[static_cast<std::size_t>(j)];
            if (c == 0) at_zero = dist;
            if (dist < best) {
              best = dist;
              ties = 1;
            } else if (dist == best) {
              ++ties;
            }
          }
          const bool ml_unique_zero = at_zero == best && ties == 1;
          const bool sc_error = decode(spec, llr_from_key(spec, WatermarkKey(bits), 0.1)).code.index() != 0;
          INFO("block_len=" << block_len << " n=" << n << " k=" << k << " word=" << word);
          CHECK_FALSE((sc_error && ml_unique_zero));
        }
      }
    }
  }
}
