#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "drew/bits.hpp"
#include "drew/polar_code.hpp"

namespace drew {

struct EntryId {
  std::uint64_t value = 0;
  auto operator<=>(const EntryId&) const = default;
};

/// One input row before normalization.
struct RawRow {
  EntryId id;
  std::vector<float> values;
};

struct StoreEntry {
  EntryId id;
  std::vector<float> embedding;
  std::uint32_t cluster = 0;
  WatermarkKey key;
};

struct Match {
  EntryId id;
  double similarity = 0.0;
  friend bool operator==(const Match&, const Match&) = default;
};

/// Descending similarity, ties by ascending id.
using MatchList = std::vector<Match>;

inline bool ranks_before(const Match& a, const Match& b) noexcept {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

class Scope {
 public:
  static Scope full() { return Scope(true, 0); }
  static Scope cluster(std::uint32_t index) { return Scope(false, index); }

  bool is_full() const noexcept { return full_; }
  std::uint32_t cluster_index() const noexcept { return cluster_; }

 private:
  Scope(bool full, std::uint32_t cluster) : full_(full), cluster_(cluster) {}
  bool full_;
  std::uint32_t cluster_;
};

/// Unit-length copy of `raw`; throws Error(invalid_argument) on a zero or
/// non-finite vector.
std::vector<float> normalized(std::span<const float> raw);

/// Dot product with a fixed accumulation order. Every similarity in the
/// library goes through this function, so batched and single-query scans
/// agree bit for bit.
float dot(const float* a, const float* b, std::size_t dim) noexcept;

/// Row-major matrix of unit vectors.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(int dim = 0) : dim_(dim) {}

  int dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return dim_ == 0 ? 0 : data_.size() / static_cast<std::size_t>(dim_); }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  const std::vector<float>& data() const noexcept { return data_; }

  void append_normalized(std::span<const float> raw);
  /// Appends a row that is already unit length (bit-exact copy).
  void append_exact(std::span<const float> unit);
  void reserve(std::size_t rows) { data_.reserve(rows * static_cast<std::size_t>(dim_)); }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  int dim_;
  std::vector<float> data_;
};

/// Id-indexed embedding store. Immutable once built: clustering produces a
/// new store rather than modifying this one.
class Store {
 public:
  static Store ingest(std::span<const RawRow> rows, int dim);

  int dim() const noexcept { return embeddings_.dim(); }
  std::size_t size() const noexcept { return ids_.size(); }
  bool clustered() const noexcept { return spec_.has_value(); }
  int cluster_bits() const noexcept { return k_; }
  std::size_t cluster_count() const noexcept { return clustered() ? std::size_t{1} << k_ : 0; }
  const PolarCodeSpec& spec() const;
  std::uint64_t partition_seed() const noexcept { return seed_; }

  EntryId id(std::size_t pos) const { return ids_[pos]; }
  std::span<const float> embedding(std::size_t pos) const { return embeddings_.row(pos); }
  std::uint32_t cluster(std::size_t pos) const { return clusters_.at(pos); }
  const WatermarkKey& key(std::size_t pos) const { return keys_.at(pos); }
  StoreEntry entry(std::size_t pos) const;
  std::optional<std::size_t> position(EntryId id) const;

  /// Positions of the entries in `cluster`, ascending.
  std::span<const std::uint32_t> members(std::uint32_t cluster) const;
  const EmbeddingMatrix& embeddings() const noexcept { return embeddings_; }

  friend bool operator==(const Store& a, const Store& b);

 private:
  explicit Store(int dim) : embeddings_(dim) {}
  void add(EntryId id, std::span<const float> unit);
  void set_clusters(int k, std::uint64_t seed, PolarCodeSpec spec, std::vector<std::uint32_t> clusters);

  EmbeddingMatrix embeddings_;
  std::vector<EntryId> ids_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  int k_ = 0;
  std::optional<PolarCodeSpec> spec_;
  std::uint64_t seed_ = 0;
  std::vector<std::uint32_t> clusters_;
  std::vector<WatermarkKey> keys_;
  std::vector<std::vector<std::uint32_t>> members_;

  friend Store assign_clusters(const Store&, int, std::uint64_t, const PolarCodeSpec&);
  friend Store restore_store(int, std::vector<EntryId>, std::vector<float>, int, std::uint64_t,
                             PolarCodeSpec, std::vector<std::uint32_t>, std::vector<WatermarkKey>);
};

inline constexpr int kMaxClusterBits = 16;

/// Uniform 32-bit words driving the random partition. The cluster of an
/// entry at k bits is the top k bits of its word, so partitions for
/// different k are nested.
std::vector<std::uint32_t> partition_words(std::size_t count, std::uint64_t seed);
inline std::uint32_t cluster_from_word(std::uint32_t word, int k) noexcept {
  return k == 0 ? 0u : word >> (32 - k);
}

Store assign_clusters(const Store& store, int k, std::uint64_t seed, const PolarCodeSpec& spec);

/// Rebuilds a clustered store from persisted fields, re-checking every
/// invariant (used by the loader).
Store restore_store(int dim, std::vector<EntryId> ids, std::vector<float> embeddings, int k,
                    std::uint64_t seed, PolarCodeSpec spec, std::vector<std::uint32_t> clusters,
                    std::vector<WatermarkKey> keys);

MatchList top_matches(const Store& store, const Scope& scope, std::span<const float> query, std::size_t p);

/// Same results as calling top_matches per query; the full-store scan is
/// tiled so each stored row is read once per block of queries.
std::vector<MatchList> top_matches_batch(const Store& store, const Scope& scope,
                                         std::span<const std::span<const float>> queries, std::size_t p);

}  // namespace drew
