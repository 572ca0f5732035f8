#include "drew/store_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace drew {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'E', 'W', 'S', 'T', 'O', 'R'};

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes.push_back(static_cast<char>(u & 0xffu));
      u = static_cast<U>(u >> 8);
    }
  }
  void put_f32(float value) { put(std::bit_cast<std::uint32_t>(value)); }
  void put_raw(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<char> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::span<const char> get_raw(std::size_t count) {
    need(count);
    auto out = bytes_.subspan(pos_, count);
    pos_ += count;
    return out;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t count) const {
    if (bytes_.size() - pos_ < count) fail(Errc::format, "store file is truncated");
  }
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::size_t key_bytes(int n) { return (static_cast<std::size_t>(n) + 7) / 8; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(Errc::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::io, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::vector<char> serialize_store(const Store& store) {
  require(store.clustered(), "only preprocessed (clustered) stores can be saved");
  const PolarCodeSpec& spec = store.spec();
  nlohmann::json blob = to_json(spec);
  blob["partition_seed"] = store.partition_seed();
  const std::string blob_text = blob.dump();

  Writer w;
  w.put_raw(std::string_view(kMagic, sizeof(kMagic)));
  w.put<std::uint16_t>(kStoreFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.cluster_bits()));
  w.put<std::uint64_t>(store.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(blob_text.size()));
  w.put_raw(blob_text);

  const std::size_t kb = key_bytes(spec.n);
  for (std::size_t pos = 0; pos < store.size(); ++pos) {
    w.put<std::uint64_t>(store.id(pos).value);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(store.cluster(pos)));
    std::vector<char> packed(kb, 0);
    const WatermarkKey& key = store.key(pos);
    for (std::size_t i = 0; i < key.size(); ++i) {
      if (key[i]) packed[i / 8] = static_cast<char>(packed[i / 8] | (1 << (i % 8)));
    }
    w.bytes.insert(w.bytes.end(), packed.begin(), packed.end());
    for (float v : store.embedding(pos)) w.put_f32(v);
  }
  w.put<std::uint64_t>(fnv1a64(w.bytes));
  return std::move(w.bytes);
}

void save_store(const Store& store, const std::filesystem::path& path) {
  const std::vector<char> bytes = serialize_store(store);
  write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

Store deserialize_store(std::span<const char> bytes, std::optional<int> expected_dim) {
  Reader r(bytes);
  const auto magic = r.get_raw(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) fail(Errc::format, "not a store file (bad magic)");
  const auto version = r.get<std::uint16_t>();
  if (version != kStoreFormatVersion) {
    fail(Errc::format, "unsupported store format version " + std::to_string(version));
  }
  const auto dim = r.get<std::uint32_t>();
  const auto k = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (expected_dim && static_cast<std::uint32_t>(*expected_dim) != dim) {
    fail(Errc::dimension_mismatch, "store has dimension " + std::to_string(dim) + ", expected " +
                                       std::to_string(*expected_dim));
  }
  if (dim == 0 || dim > (1u << 20)) fail(Errc::format, "implausible embedding dimension");
  const auto blob_len = r.get<std::uint32_t>();
  const auto blob_bytes = r.get_raw(blob_len);

  nlohmann::json blob;
  try {
    blob = nlohmann::json::parse(blob_bytes.begin(), blob_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    // A damaged blob is reported as corruption when the checksum disagrees.
    if (bytes.size() >= 8) {
      Reader tail(bytes.subspan(bytes.size() - 8));
      if (tail.get<std::uint64_t>() != fnv1a64(bytes.first(bytes.size() - 8))) {
        fail(Errc::checksum, "store checksum mismatch");
      }
    }
    fail(Errc::format, std::string("malformed spec blob: ") + e.what());
  }
  PolarCodeSpec spec = polar_spec_from_json(blob);
  std::uint64_t seed = 0;
  try {
    seed = blob.at("partition_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception&) {
    fail(Errc::format, "spec blob lacks partition_seed");
  }
  if (static_cast<int>(k) != spec.k) fail(Errc::format, "header k does not match spec k");

  const std::size_t kb = key_bytes(spec.n);
  const std::size_t record = 8 + 2 + kb + 4 * static_cast<std::size_t>(dim);
  const std::size_t body_start = r.position();
  if (count > (bytes.size() - body_start) / record) fail(Errc::format, "store file is truncated");
  const std::size_t expected_size = body_start + static_cast<std::size_t>(count) * record + 8;
  if (bytes.size() < expected_size) fail(Errc::format, "store file is truncated");
  if (bytes.size() > expected_size) fail(Errc::format, "store file has trailing bytes");

  {
    Reader tail(bytes.subspan(expected_size - 8));
    if (tail.get<std::uint64_t>() != fnv1a64(bytes.first(expected_size - 8))) {
      fail(Errc::checksum, "store checksum mismatch");
    }
  }

  std::vector<EntryId> ids;
  std::vector<float> embeddings;
  std::vector<std::uint32_t> clusters;
  std::vector<WatermarkKey> keys;
  ids.reserve(count);
  embeddings.reserve(count * dim);
  clusters.reserve(count);
  keys.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ids.push_back(EntryId{r.get<std::uint64_t>()});
    clusters.push_back(r.get<std::uint16_t>());
    const auto packed = r.get_raw(kb);
    std::vector<Bit> bits(static_cast<std::size_t>(spec.n));
    for (std::size_t b = 0; b < bits.size(); ++b) {
      bits[b] = static_cast<Bit>((static_cast<unsigned char>(packed[b / 8]) >> (b % 8)) & 1u);
    }
    keys.emplace_back(std::move(bits));
    for (std::uint32_t j = 0; j < dim; ++j) embeddings.push_back(r.get_f32());
  }
  return restore_store(static_cast<int>(dim), std::move(ids), std::move(embeddings), static_cast<int>(k), seed,
                       std::move(spec), std::move(clusters), std::move(keys));
}

Store load_store(const std::filesystem::path& path, std::optional<int> expected_dim) {
  const std::string bytes = read_file(path);
  return deserialize_store(std::span<const char>(bytes.data(), bytes.size()), expected_dim);
}

CsvEmbeddings parse_embeddings_csv(std::string_view text) {
  CsvEmbeddings out;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t f = 0;
    while (true) {
      const std::size_t comma = line.find(',', f);
      fields.push_back(line.substr(f, comma == std::string_view::npos ? std::string_view::npos : comma - f));
      if (comma == std::string_view::npos) break;
      f = comma + 1;
    }

    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "id") fail(Errc::format, "CSV header must be id,v0,v1,...");
      for (std::size_t j = 1; j < fields.size(); ++j) {
        if (fields[j] != "v" + std::to_string(j - 1)) fail(Errc::format, "CSV header column names must be v0..v{d-1}");
      }
      out.dim = static_cast<int>(fields.size() - 1);
      header_seen = true;
      continue;
    }
    if (static_cast<int>(fields.size()) != out.dim + 1) {
      fail(Errc::dimension_mismatch, "CSV line " + std::to_string(line_no) + " has " +
                                         std::to_string(fields.size() - 1) + " values, expected " +
                                         std::to_string(out.dim));
    }
    RawRow row;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), row.id.value);
    if (ec != std::errc() || p != fields[0].data() + fields[0].size()) {
      fail(Errc::format, "CSV line " + std::to_string(line_no) + ": bad id");
    }
    row.values.resize(static_cast<std::size_t>(out.dim));
    for (int j = 0; j < out.dim; ++j) {
      const std::string_view field = fields[static_cast<std::size_t>(j) + 1];
      auto [q, ec2] = std::from_chars(field.data(), field.data() + field.size(), row.values[static_cast<std::size_t>(j)]);
      if (ec2 != std::errc() || q != field.data() + field.size()) {
        fail(Errc::format, "CSV line " + std::to_string(line_no) + ": bad value in column v" + std::to_string(j));
      }
    }
    out.rows.push_back(std::move(row));
  }
  if (!header_seen) fail(Errc::format, "CSV input is empty (header required)");
  return out;
}

CsvEmbeddings read_embeddings_csv(const std::filesystem::path& path) { return parse_embeddings_csv(read_file(path)); }

void write_embeddings_csv(const Store& store, const std::filesystem::path& path) {
  std::string text = "id";
  for (int j = 0; j < store.dim(); ++j) text += ",v" + std::to_string(j);
  text += '\n';
  char buf[64];
  for (std::size_t pos = 0; pos < store.size(); ++pos) {
    text += std::to_string(store.id(pos).value);
    for (float v : store.embedding(pos)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      text += ',';
      text.append(buf, end);
    }
    text += '\n';
  }
  write_file_atomic(path, text);
}

}  // namespace drew
