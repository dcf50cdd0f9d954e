#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "promptlens/cache.hpp"
#include "promptlens/providers.hpp"
#include "promptlens/stub.hpp"

namespace promptlens::testing {

namespace fs = std::filesystem;

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(std::string_view name) const { return path_ / name; }

 private:
  fs::path path_;
};

fs::path source_dir();
fs::path test_data(std::string_view name);
std::string slurp(const fs::path& path);

/// Compares `actual` with tests/data/golden/<name>; PROMPTLENS_UPDATE_GOLDEN=1 rewrites it.
/// Returns an empty string on match, otherwise a description of the first difference.
std::string golden_mismatch(std::string_view name, const std::string& actual);

StubRuleTable rules(std::string_view json_text);

/// A stub backend wired to a provider, with an optional cache.
struct StubRig {
  std::shared_ptr<StubBackend> backend;
  std::shared_ptr<ResponseCache> cache;
  std::unique_ptr<CompletionProvider> provider;

  StubRig(StubRuleTable table, std::uint64_t seed, std::optional<fs::path> cache_dir = {},
          int parallelism = 4);
};

}  // namespace promptlens::testing
