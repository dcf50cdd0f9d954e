#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#ifndef PROMPTLENS_SOURCE_DIR
#error "PROMPTLENS_SOURCE_DIR must be defined"
#endif

namespace promptlens::testing {

TempDir::TempDir() {
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  std::ostringstream name;
  name << "promptlens-test-" << rd() << "-" << counter.fetch_add(1);
  path_ = fs::temp_directory_path() / name.str();
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::permissions(path_, fs::perms::owner_all, fs::perm_options::add, ec);
  fs::remove_all(path_, ec);
}

fs::path source_dir() { return PROMPTLENS_SOURCE_DIR; }

fs::path test_data(std::string_view name) { return source_dir() / "tests" / "data" / name; }

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string golden_mismatch(std::string_view name, const std::string& actual) {
  const fs::path path = test_data("golden") / name;
  const char* update = std::getenv("PROMPTLENS_UPDATE_GOLDEN");
  if (update != nullptr && std::string_view(update) == "1") {
    fs::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << actual;
    return {};
  }
  if (!fs::exists(path)) return "golden file " + path.string() + " is missing";
  const std::string expected = slurp(path);
  if (expected == actual) return {};
  std::size_t k = 0;
  while (k < expected.size() && k < actual.size() && expected[k] == actual[k]) ++k;
  const std::size_t line = 1 + static_cast<std::size_t>(std::count(actual.begin(), actual.begin() + static_cast<long>(k), '\n'));
  return "golden " + std::string(name) + " differs at byte " + std::to_string(k) + " (line " +
         std::to_string(line) + ")";
}

StubRuleTable rules(std::string_view json_text) {
  return stub_rules_from_json(nlohmann::json::parse(json_text));
}

StubRig::StubRig(StubRuleTable table, std::uint64_t seed, std::optional<fs::path> cache_dir,
                 int parallelism)
    : backend(std::make_shared<StubBackend>(std::move(table), seed)) {
  if (cache_dir) cache = std::make_shared<ResponseCache>(*cache_dir);
  provider = std::make_unique<CompletionProvider>(backend, cache, parallelism);
}

}  // namespace promptlens::testing
