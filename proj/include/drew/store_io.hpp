#pragma once

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "drew/embedding_store.hpp"

namespace drew {

inline constexpr std::uint16_t kStoreFormatVersion = 1;

/// Binary store layout, all integers little-endian:
///
///   "DREWSTOR" | u16 version | u32 d | u32 k | u64 N
///   | u32 blob length | blob (polar code spec JSON plus "partition_seed")
///   | N x (u64 id | u16 cluster | ceil(n/8) key bytes, LSB first | d x f32)
///   | u64 FNV-1a checksum of everything before it
void save_store(const Store& store, const std::filesystem::path& path);
std::vector<char> serialize_store(const Store& store);

/// Throws Error(format) on bad magic, version or truncation, Error(checksum)
/// on corruption and Error(dimension_mismatch) when `expected_dim` is given
/// and differs. Nothing is returned unless the whole file validates.
Store load_store(const std::filesystem::path& path, std::optional<int> expected_dim = std::nullopt);
Store deserialize_store(std::span<const char> bytes, std::optional<int> expected_dim = std::nullopt);

struct CsvEmbeddings {
  int dim = 0;
  std::vector<RawRow> rows;
};

/// Reads `id,v0,...,v{d-1}` rows; the header line is mandatory.
CsvEmbeddings read_embeddings_csv(const std::filesystem::path& path);
CsvEmbeddings parse_embeddings_csv(std::string_view text);
void write_embeddings_csv(const Store& store, const std::filesystem::path& path);

/// Writes via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace drew
