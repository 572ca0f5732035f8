#include "drew/channel.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace drew {

void AttackConfig::validate() const {
  require(!name.empty(), "attack name must not be empty");
  require(p_flip >= 0.0 && p_flip <= 0.5, "attack '" + name + "': p_A must lie in [0, 0.5]");
  require(sigma >= 0.0 && std::isfinite(sigma), "attack '" + name + "': sigma must be >= 0");
}

AttackStreams AttackStreams::derive(std::uint64_t master, std::string_view attack_name) {
  const std::string prefix = "attack/" + std::string(attack_name) + "/";
  return AttackStreams{Rng::derive(master, prefix + "sample"), Rng::derive(master, prefix + "key"),
                       Rng::derive(master, prefix + "embedding"), Rng::derive(master, prefix + "pool")};
}

WatermarkKey flip_bits(const WatermarkKey& key, double p_flip, Rng& rng) {
  require(p_flip >= 0.0 && p_flip <= 1.0, "flip probability must lie in [0, 1]");
  std::vector<Bit> bits(key.bits().begin(), key.bits().end());
  for (Bit& b : bits) {
    if (rng.bernoulli(p_flip)) b ^= 1;
  }
  return WatermarkKey(std::move(bits));
}

std::vector<float> perturb_embedding(std::span<const float> embedding, double sigma, Rng& rng) {
  require(sigma >= 0.0 && std::isfinite(sigma), "embedding noise sigma must be >= 0");
  double sq = 0.0;
  for (float v : embedding) sq += static_cast<double>(v) * v;
  require(std::fabs(std::sqrt(sq) - 1.0) <= 1e-6, "perturb_embedding expects a unit vector");
  if (sigma == 0.0) return {embedding.begin(), embedding.end()};

  std::vector<float> noisy(embedding.size());
  for (int attempt = 0; attempt < 2; ++attempt) {
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < embedding.size(); ++i) {
      const double v = embedding[i] + sigma * rng.normal();
      noisy[i] = static_cast<float>(v);
      norm_sq += static_cast<double>(noisy[i]) * noisy[i];
    }
    if (norm_sq > 0.0) return normalized(noisy);
  }
  fail(Errc::invalid_argument, "perturbed embedding degenerated to the zero vector twice");
}

Query apply_attack(const StoreEntry& entry, const AttackConfig& attack, AttackStreams& streams,
                   const EmbeddingMatrix* holdout) {
  Query q;
  if (attack.out_of_dataset) {
    require(holdout != nullptr && holdout->rows() > 0, "out-of-dataset attack needs a held-out pool");
    const std::size_t n = entry.key.empty() ? 0 : entry.key.size();
    require(n > 0, "out-of-dataset attack needs the key length of a preprocessed entry");
    std::vector<Bit> bits(n);
    for (Bit& b : bits) b = static_cast<Bit>(streams.key.bernoulli(0.5));
    q.observed_key = WatermarkKey(std::move(bits));
    const std::size_t pick = streams.pool.below(holdout->rows());
    q.embedding = perturb_embedding(holdout->row(pick), attack.sigma, streams.embedding);
    return q;
  }
  if (entry.key.empty()) fail(Errc::invalid_argument, "entry " + std::to_string(entry.id.value) + " has no watermark key");
  q.observed_key = flip_bits(entry.key, attack.p_flip, streams.key);
  q.embedding = perturb_embedding(entry.embedding, attack.sigma, streams.embedding);
  q.ground_truth = entry.id;
  return q;
}

EmbeddingMatrix random_unit_vectors(std::size_t count, int dim, Rng& rng) {
  require(dim >= 1, "dimension must be positive");
  EmbeddingMatrix out(dim);
  out.reserve(count);
  std::vector<float> raw(static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    double sq = 0.0;
    do {
      sq = 0.0;
      for (float& v : raw) {
        v = static_cast<float>(rng.normal());
        sq += static_cast<double>(v) * v;
      }
    } while (sq == 0.0);
    out.append_normalized(raw);
  }
  return out;
}

nlohmann::json to_json(const AttackConfig& attack) {
  return nlohmann::json{{"name", attack.name},
                        {"p_A", attack.p_flip},
                        {"sigma", attack.sigma},
                        {"out_of_dataset", attack.out_of_dataset}};
}

AttackConfig attack_from_json(const nlohmann::json& doc) {
  AttackConfig a;
  try {
    a.name = doc.at("name").get<std::string>();
    a.p_flip = doc.at("p_A").get<double>();
    a.sigma = doc.at("sigma").get<double>();
    a.out_of_dataset = doc.value("out_of_dataset", false);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, std::string("malformed attack entry: ") + e.what());
  }
  a.validate();
  return a;
}

std::vector<AttackConfig> attack_suite_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) fail(Errc::format, "attack suite must be a JSON array");
  std::vector<AttackConfig> suite;
  std::set<std::string> names;
  for (const auto& item : doc) {
    suite.push_back(attack_from_json(item));
    if (!names.insert(suite.back().name).second) {
      fail(Errc::format, "attack suite has duplicate name '" + suite.back().name + "'");
    }
  }
  return suite;
}

std::vector<AttackConfig> load_attack_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open attack suite " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, "attack suite " + path.string() + " is not valid JSON: " + e.what());
  }
  return attack_suite_from_json(doc);
}

nlohmann::json to_json(std::span<const AttackConfig> suite) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : suite) out.push_back(to_json(a));
  return out;
}

std::vector<AttackConfig> default_attack_suite() {
  return {
      {"no_aug", 0.00, 0.00, false},
      {"rotation.1.0", 0.22, 0.20, false},
      {"rotation.0.5", 0.12, 0.17, false},
      {"rotation.0.25", 0.06, 0.15, false},
      {"crop.0.5", 0.04, 0.18, false},
      {"crop.0.25", 0.02, 0.15, false},
      {"flip", 0.01, 0.16, false},
      {"stretch.1.0", 0.18, 0.19, false},
      {"stretch.0.5", 0.05, 0.15, false},
      {"blur", 0.02, 0.08, false},
      {"combo.0.5", 0.30, 0.22, false},
      {"jitter", 0.08, 0.12, false},
      {"diffpure.0.1", 0.35, 0.10, false},
      {"erasure", 0.50, 0.00, false},
  };
}

}  // namespace drew
