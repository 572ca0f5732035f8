#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drew/embedding_store.hpp"
#include "drew/rng.hpp"

namespace drew {

/// One augmentation, abstracted as an i.i.d. bit-flip rate on the read-out
/// watermark key plus isotropic Gaussian drift of the embedding.
struct AttackConfig {
  std::string name;
  double p_flip = 0.0;  // [0, 0.5]
  double sigma = 0.0;   // >= 0
  bool out_of_dataset = false;

  void validate() const;
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

struct Query {
  WatermarkKey observed_key;
  std::vector<float> embedding;
  std::optional<EntryId> ground_truth;
};

/// Independent generators for the pieces of one attack stream. Key noise and
/// embedding noise never share state, so changing sigma leaves the flipped
/// bit pattern untouched.
struct AttackStreams {
  Rng sample;     // which entries are attacked
  Rng key;        // bit flips / random keys
  Rng embedding;  // Gaussian drift
  Rng pool;       // held-out pool draws

  static AttackStreams derive(std::uint64_t master, std::string_view attack_name);
};

WatermarkKey flip_bits(const WatermarkKey& key, double p_flip, Rng& rng);

/// normalize(e + sigma * g) with g ~ N(0, I). A zero sum is re-drawn once,
/// then reported as an error.
std::vector<float> perturb_embedding(std::span<const float> embedding, double sigma, Rng& rng);

/// Builds the query an attack produces from a stored entry. Out-of-dataset
/// attacks draw the embedding from `holdout` and read a uniformly random
/// key instead.
Query apply_attack(const StoreEntry& entry, const AttackConfig& attack, AttackStreams& streams,
                   const EmbeddingMatrix* holdout = nullptr);

/// Unit vectors uniform on the sphere: normalized i.i.d. Gaussian draws.
EmbeddingMatrix random_unit_vectors(std::size_t count, int dim, Rng& rng);

nlohmann::json to_json(const AttackConfig& attack);
AttackConfig attack_from_json(const nlohmann::json& doc);
std::vector<AttackConfig> attack_suite_from_json(const nlohmann::json& doc);
std::vector<AttackConfig> load_attack_suite(const std::filesystem::path& path);
nlohmann::json to_json(std::span<const AttackConfig> suite);

/// Built-in suite named after the image augmentations the method was
/// evaluated against, plus an erasure attack. The (p_flip, sigma) values are
/// a calibration of this simulator, not measurements.
std::vector<AttackConfig> default_attack_suite();

}  // namespace drew
