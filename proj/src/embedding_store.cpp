#include "drew/embedding_store.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <cstring>
#include <string>

#include "drew/rng.hpp"

#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
#define DREW_SIMD_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define DREW_SIMD_CLONES
#endif

namespace drew {

namespace {

// Eight accumulator lanes in one vector; each lane is plain IEEE float
// arithmetic, so every instruction set computes the same bits.
typedef float V8 __attribute__((vector_size(32)));
typedef float V4 __attribute__((vector_size(16)));
typedef int I8 __attribute__((vector_size(32)));

inline bool any(I8 m) noexcept {
  int acc = 0;
  for (int l = 0; l < 8; ++l) acc |= m[l];
  return acc != 0;
}

inline V8 load8(const float* p) noexcept {
  V8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

// Lanes l and l + 4 first, then the four sums pairwise.
inline V4 fold(V8 a) noexcept {
  const V4 lo = {a[0], a[1], a[2], a[3]};
  const V4 hi = {a[4], a[5], a[6], a[7]};
  return lo + hi;
}

// Bounded list of the best p matches seen so far.
class TopList {
 public:
  explicit TopList(std::size_t p) : p_(p) { items_.reserve(p + 1); }

  void offer(EntryId id, float similarity) {
    if (p_ == 0) return;
    const Match m{id, static_cast<double>(similarity)};
    if (items_.size() == p_ && !ranks_before(m, items_.back())) return;
    auto it = std::upper_bound(items_.begin(), items_.end(), m, ranks_before);
    items_.insert(it, m);
    if (items_.size() > p_) items_.pop_back();
  }

  // Similarities below this cannot enter the list.
  double floor() const noexcept {
    return items_.size() < p_ || p_ == 0 ? -std::numeric_limits<double>::infinity() : items_.back().similarity;
  }

  // Same bound as a float; similarities are floats, so comparing against it
  // filters exactly like floor().
  float floor_f() const noexcept {
    return items_.size() < p_ || p_ == 0 ? -std::numeric_limits<float>::infinity()
                                         : static_cast<float>(items_.back().similarity);
  }

  MatchList take() { return std::move(items_); }

 private:
  std::size_t p_;
  MatchList items_;
};

// kLanesQ dot products against one row with exactly the lane layout and
// reduction order of dot(), so results are bit-identical to it.
constexpr std::size_t kLanesQ = 8;

DREW_SIMD_CLONES
void dot_block(const float* row, const float* const* q, std::size_t dim, float* out) noexcept {
  V8 acc[kLanesQ] = {};
  std::size_t j = 0;
  for (; j + 8 <= dim; j += 8) {
    const V8 r = load8(row + j);
    for (std::size_t t = 0; t < kLanesQ; ++t) acc[t] += r * load8(q[t] + j);
  }
  for (std::size_t g = 0; g < kLanesQ; g += 4) {
    const V4 s0 = fold(acc[g]);
    const V4 s1 = fold(acc[g + 1]);
    const V4 s2 = fold(acc[g + 2]);
    const V4 s3 = fold(acc[g + 3]);
    const V4 c0 = {s0[0], s1[0], s2[0], s3[0]};
    const V4 c1 = {s0[1], s1[1], s2[1], s3[1]};
    const V4 c2 = {s0[2], s1[2], s2[2], s3[2]};
    const V4 c3 = {s0[3], s1[3], s2[3], s3[3]};
    V4 tail = {};
    for (std::size_t i = j; i < dim; ++i) {
      for (std::size_t t = 0; t < 4; ++t) tail[t] += row[i] * q[g + t][i];
    }
    const V4 total = ((c0 + c1) + (c2 + c3)) + tail;
    std::memcpy(out + g, &total, sizeof total);
  }
}

void check_query_dim(const Store& store, std::span<const float> q) {
  if (static_cast<int>(q.size()) != store.dim()) {
    fail(Errc::dimension_mismatch, "query dimension " + std::to_string(q.size()) +
                                       " does not match store dimension " + std::to_string(store.dim()));
  }
}

}  // namespace

std::vector<float> normalized(std::span<const float> raw) {
  double sq = 0.0;
  for (float v : raw) {
    require(std::isfinite(v), "embedding contains a non-finite value");
    sq += static_cast<double>(v) * static_cast<double>(v);
  }
  require(sq > 0.0, "cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i] * inv);
  return out;
}

DREW_SIMD_CLONES
float dot(const float* a, const float* b, std::size_t dim) noexcept {
  V8 acc = {};
  std::size_t j = 0;
  for (; j + 8 <= dim; j += 8) acc += load8(a + j) * load8(b + j);
  float tail = 0.f;
  for (; j < dim; ++j) tail += a[j] * b[j];
  const V4 s = fold(acc);
  return ((s[0] + s[1]) + (s[2] + s[3])) + tail;
}

void EmbeddingMatrix::append_normalized(std::span<const float> raw) {
  if (static_cast<int>(raw.size()) != dim_) {
    fail(Errc::dimension_mismatch, "vector dimension " + std::to_string(raw.size()) +
                                       " does not match " + std::to_string(dim_));
  }
  const std::vector<float> unit = normalized(raw);
  data_.insert(data_.end(), unit.begin(), unit.end());
}

void EmbeddingMatrix::append_exact(std::span<const float> unit) {
  if (static_cast<int>(unit.size()) != dim_) {
    fail(Errc::dimension_mismatch, "vector dimension " + std::to_string(unit.size()) +
                                       " does not match " + std::to_string(dim_));
  }
  data_.insert(data_.end(), unit.begin(), unit.end());
}

Store Store::ingest(std::span<const RawRow> rows, int dim) {
  require(dim >= 1, "embedding dimension must be positive");
  Store store(dim);
  store.embeddings_.reserve(rows.size());
  store.ids_.reserve(rows.size());
  for (const RawRow& row : rows) {
    if (static_cast<int>(row.values.size()) != dim) {
      fail(Errc::dimension_mismatch, "row " + std::to_string(row.id.value) + " has dimension " +
                                         std::to_string(row.values.size()) + ", expected " +
                                         std::to_string(dim));
    }
    store.add(row.id, normalized(row.values));
  }
  return store;
}

void Store::add(EntryId id, std::span<const float> unit) {
  if (!index_.emplace(id.value, ids_.size()).second) {
    fail(Errc::duplicate_id, "duplicate entry id " + std::to_string(id.value));
  }
  ids_.push_back(id);
  embeddings_.append_exact(unit);
}

const PolarCodeSpec& Store::spec() const {
  if (!spec_) fail(Errc::invalid_argument, "store has not been clustered");
  return *spec_;
}

StoreEntry Store::entry(std::size_t pos) const {
  StoreEntry e;
  e.id = ids_.at(pos);
  const auto row = embeddings_.row(pos);
  e.embedding.assign(row.begin(), row.end());
  if (clustered()) {
    e.cluster = clusters_[pos];
    e.key = keys_[pos];
  }
  return e;
}

std::optional<std::size_t> Store::position(EntryId id) const {
  auto it = index_.find(id.value);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const std::uint32_t> Store::members(std::uint32_t cluster) const {
  if (cluster >= members_.size()) return {};
  return members_[cluster];
}

void Store::set_clusters(int k, std::uint64_t seed, PolarCodeSpec spec, std::vector<std::uint32_t> clusters) {
  k_ = k;
  seed_ = seed;
  members_.assign(std::size_t{1} << k, {});
  keys_.clear();
  keys_.reserve(clusters.size());
  std::vector<WatermarkKey> cluster_keys(members_.size());
  for (std::size_t pos = 0; pos < clusters.size(); ++pos) {
    const std::uint32_t c = clusters[pos];
    require(c < members_.size(), "cluster index out of range");
    members_[c].push_back(static_cast<std::uint32_t>(pos));
    if (cluster_keys[c].empty()) cluster_keys[c] = encode(spec, ClusterCode::from_index(c, k));
    keys_.push_back(cluster_keys[c]);
  }
  clusters_ = std::move(clusters);
  spec_ = std::move(spec);
}

bool operator==(const Store& a, const Store& b) {
  return a.embeddings_ == b.embeddings_ && a.ids_ == b.ids_ && a.k_ == b.k_ && a.spec_ == b.spec_ &&
         a.seed_ == b.seed_ && a.clusters_ == b.clusters_ && a.keys_ == b.keys_;
}

std::vector<std::uint32_t> partition_words(std::size_t count, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "partition");
  std::vector<std::uint32_t> words(count);
  for (auto& w : words) w = rng.bits32();
  return words;
}

Store assign_clusters(const Store& store, int k, std::uint64_t seed, const PolarCodeSpec& spec) {
  require(k >= 1, "cluster bit count k must be at least 1");
  require(k <= kMaxClusterBits, "cluster bit count k must be at most " + std::to_string(kMaxClusterBits));
  require(spec.k == k, "polar code spec k=" + std::to_string(spec.k) + " does not match k=" + std::to_string(k));
  spec.validate();

  const std::vector<std::uint32_t> words = partition_words(store.size(), seed);
  std::vector<std::uint32_t> clusters(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) clusters[i] = cluster_from_word(words[i], k);

  Store out(store.dim());
  out.embeddings_ = store.embeddings_;
  out.ids_ = store.ids_;
  out.index_ = store.index_;
  out.set_clusters(k, seed, spec, std::move(clusters));
  return out;
}

Store restore_store(int dim, std::vector<EntryId> ids, std::vector<float> embeddings, int k,
                    std::uint64_t seed, PolarCodeSpec spec, std::vector<std::uint32_t> clusters,
                    std::vector<WatermarkKey> keys) {
  require(dim >= 1, "embedding dimension must be positive");
  require(k >= 1 && k <= kMaxClusterBits, "cluster bit count out of range");
  require(spec.k == k, "spec k does not match store k");
  spec.validate();
  require(embeddings.size() == ids.size() * static_cast<std::size_t>(dim), "embedding matrix size mismatch");
  require(clusters.size() == ids.size() && keys.size() == ids.size(), "per-entry field count mismatch");

  Store out(dim);
  out.embeddings_.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.add(ids[i], std::span<const float>(embeddings.data() + i * static_cast<std::size_t>(dim),
                                           static_cast<std::size_t>(dim)));
  }
  out.set_clusters(k, seed, std::move(spec), std::move(clusters));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!(keys[i] == out.keys_[i])) {
      fail(Errc::format, "stored key of entry " + std::to_string(ids[i].value) +
                             " does not match its cluster's encoded code");
    }
  }
  return out;
}

MatchList top_matches(const Store& store, const Scope& scope, std::span<const float> query, std::size_t p) {
  check_query_dim(store, query);
  const auto dim = static_cast<std::size_t>(store.dim());
  const float* base = store.embeddings().data().data();
  TopList top(p);
  if (scope.is_full()) {
    for (std::size_t pos = 0; pos < store.size(); ++pos) {
      top.offer(store.id(pos), dot(base + pos * dim, query.data(), dim));
    }
  } else {
    for (std::uint32_t pos : store.members(scope.cluster_index())) {
      top.offer(store.id(pos), dot(base + pos * dim, query.data(), dim));
    }
  }
  return top.take();
}

std::vector<MatchList> top_matches_batch(const Store& store, const Scope& scope,
                                         std::span<const std::span<const float>> queries, std::size_t p) {
  for (const auto& q : queries) check_query_dim(store, q);
  std::vector<MatchList> out;
  out.reserve(queries.size());
  if (!scope.is_full()) {
    for (const auto& q : queries) out.push_back(top_matches(store, scope, q, p));
    return out;
  }

  constexpr std::size_t kQueryTile = 16;
  constexpr std::size_t kRowTile = 512;
  const auto dim = static_cast<std::size_t>(store.dim());
  const float* base = store.embeddings().data().data();
  const std::size_t n = store.size();

  for (std::size_t q0 = 0; q0 < queries.size(); q0 += kQueryTile) {
    const std::size_t q1 = std::min(queries.size(), q0 + kQueryTile);
    std::vector<TopList> tops(q1 - q0, TopList(p));
    for (std::size_t r0 = 0; r0 < n; r0 += kRowTile) {
      const std::size_t r1 = std::min(n, r0 + kRowTile);
      std::size_t q = q0;
      for (; q + kLanesQ <= q1; q += kLanesQ) {
        const float* qv[kLanesQ];
        V8 floors;
        for (std::size_t t = 0; t < kLanesQ; ++t) {
          qv[t] = queries[q + t].data();
          floors[t] = tops[q - q0 + t].floor_f();
        }
        float sims[kLanesQ];
        for (std::size_t pos = r0; pos < r1; ++pos) {
          dot_block(base + pos * dim, qv, dim, sims);
          const I8 hit = load8(sims) >= floors;
          if (!any(hit)) continue;
          for (std::size_t t = 0; t < kLanesQ; ++t) {
            if (!hit[t]) continue;
            TopList& top = tops[q - q0 + t];
            top.offer(store.id(pos), sims[t]);
            floors[t] = top.floor_f();
          }
        }
      }
      for (; q < q1; ++q) {
        const float* qv = queries[q].data();
        TopList& top = tops[q - q0];
        for (std::size_t pos = r0; pos < r1; ++pos) top.offer(store.id(pos), dot(base + pos * dim, qv, dim));
      }
    }
    for (auto& t : tops) out.push_back(t.take());
  }
  return out;
}

}  // namespace drew
