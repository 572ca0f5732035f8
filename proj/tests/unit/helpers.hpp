#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "drew/eval_harness.hpp"
#include "drew/pipeline.hpp"

namespace testing {

inline drew::Store small_store(std::size_t count, int dim, int k, int n, std::uint64_t seed) {
  const drew::Store raw = drew::Store::ingest(drew::synthetic_rows(count, dim, seed), dim);
  return drew::preprocess(raw, k, seed, drew::construct_code(k, n));
}

// Fresh directory under the build tree, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::path(DREW_TEST_TMP) / ("t" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
