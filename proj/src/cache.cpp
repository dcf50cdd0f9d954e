#include "promptlens/cache.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <system_error>
#include <thread>

#include "promptlens/error.hpp"
#include "promptlens/format.hpp"
#include "promptlens/hashing.hpp"

namespace fs = std::filesystem;

namespace promptlens {
namespace {

constexpr std::string_view kEntryFormat = "promptlens-cache";
constexpr int kEntryVersion = 1;

std::string to_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (const char c : bytes) {
    const auto u = static_cast<unsigned char>(c);
    out.push_back(kHex[u >> 4]);
    out.push_back(kHex[u & 0x0f]);
  }
  return out;
}

std::optional<std::string> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  const auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  std::string out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]);
    const int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<char>(hi * 16 + lo));
  }
  return out;
}

bool valid_utf8(std::string_view s) {
  try {
    (void)nlohmann::json(std::string(s)).dump();
    return true;
  } catch (const nlohmann::json::type_error&) {
    return false;
  }
}

std::string unique_suffix() {
  static std::atomic<unsigned> counter{0};
  std::ostringstream os;
  os << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
     << counter.fetch_add(1) << "." << std::random_device{}();
  return os.str();
}

void quarantine(const fs::path& path, const std::string& reason) {
  std::error_code ec;
  fs::path target = path;
  target += ".corrupt";
  fs::rename(path, target, ec);
  spdlog::warn("cache entry {} is corrupt ({}); moved aside", path.string(), reason);
}

}  // namespace

CacheKey make_cache_key(std::string ns,
                        const std::vector<std::pair<std::string, std::string>>& fields) {
  std::string canonical = "promptlens-cache-key/1\n";
  canonical += "namespace=" + std::to_string(ns.size()) + ":" + ns + "\n";
  for (const auto& [name, value] : fields) {
    canonical += name + "=" + std::to_string(value.size()) + ":" + value + "\n";
  }
  CacheKey key;
  key.ns = std::move(ns);
  key.digest = sha256_hex(canonical);
  key.canonical = std::move(canonical);
  return key;
}

CacheKey completion_cache_key(std::string_view provider_kind, std::string_view model_id,
                              std::string_view system_prompt, std::string_view user_input,
                              int sample_index, double temperature) {
  return make_cache_key("completions", {{"provider_kind", std::string(provider_kind)},
                                        {"model_id", std::string(model_id)},
                                        {"system_prompt", std::string(system_prompt)},
                                        {"user_input", std::string(user_input)},
                                        {"sample_index", std::to_string(sample_index)},
                                        {"temperature", format_double(temperature)}});
}

CacheKey embedding_cache_key(std::string_view provider_kind, std::string_view model_id,
                             std::string_view text) {
  return make_cache_key("embeddings", {{"provider_kind", std::string(provider_kind)},
                                       {"model_id", std::string(model_id)},
                                       {"text", std::string(text)}});
}

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {}

fs::path ResponseCache::entry_path(const CacheKey& key) const {
  return root_ / key.ns / key.digest.substr(0, 2) / (key.digest + ".json");
}

bool ResponseCache::contains(const CacheKey& key) const {
  std::error_code ec;
  return fs::is_regular_file(entry_path(key), ec);
}

std::optional<std::string> ResponseCache::get(const CacheKey& key) const {
  const fs::path path = entry_path(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  nlohmann::json entry;
  try {
    entry = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    quarantine(path, e.what());
    return std::nullopt;
  }
  if (!entry.is_object() || entry.value("format", "") != kEntryFormat ||
      entry.value("format_version", 0) != kEntryVersion ||
      entry.value("key", "") != key.digest) {
    quarantine(path, "unexpected header");
    return std::nullopt;
  }
  if (entry.contains("payload") && entry["payload"].is_string()) {
    return entry["payload"].get<std::string>();
  }
  if (entry.contains("payload_hex") && entry["payload_hex"].is_string()) {
    if (auto bytes = from_hex(entry["payload_hex"].get<std::string>())) return bytes;
  }
  quarantine(path, "missing payload");
  return std::nullopt;
}

void ResponseCache::put(const CacheKey& key, std::string_view payload,
                        const nlohmann::json& request_echo) {
  const fs::path path = entry_path(key);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) {
    throw std::runtime_error("cannot create cache directory " + path.parent_path().string() +
                             ": " + ec.message());
  }
  nlohmann::json entry = {
      {"format", kEntryFormat}, {"format_version", kEntryVersion}, {"key", key.digest},
      {"namespace", key.ns},    {"request", request_echo},         {"created", utc_timestamp()},
  };
  if (valid_utf8(payload)) {
    entry["payload"] = std::string(payload);
  } else {
    entry["payload_hex"] = to_hex(payload);
  }
  fs::path tmp = path;
  tmp += unique_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache entry " + tmp.string());
    out << entry.dump(2) << '\n';
    if (!out.flush()) throw std::runtime_error("cannot write cache entry " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw std::runtime_error("cannot publish cache entry " + path.string());
  }
}

CacheStats ResponseCache::stats() const {
  CacheStats out;
  std::error_code ec;
  if (!fs::exists(root_, ec)) return out;
  for (const auto* ns : {"completions", "embeddings"}) {
    const fs::path dir = root_ / ns;
    if (!fs::is_directory(dir, ec)) continue;
    for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::end(it);
         it.increment(ec)) {
      if (!it->is_regular_file() || it->path().extension() != ".json") continue;
      out.bytes += it->file_size();
      if (std::string_view(ns) == "completions") {
        ++out.completion_entries;
      } else {
        ++out.embedding_entries;
      }
    }
  }
  return out;
}

void ResponseCache::clear() {
  std::error_code ec;
  if (!fs::exists(root_, ec)) return;
  for (const auto* ns : {"completions", "embeddings"}) {
    const fs::path dir = root_ / ns;
    if (!fs::exists(dir, ec)) continue;
    fs::path aside = root_ / (std::string(".") + ns + unique_suffix());
    fs::rename(dir, aside, ec);
    if (ec) {
      throw std::runtime_error("cannot clear cache at " + dir.string() + ": " + ec.message());
    }
    fs::remove_all(aside, ec);
    if (ec) {
      throw std::runtime_error("cannot remove " + aside.string() + ": " + ec.message());
    }
  }
}

}  // namespace promptlens
