#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace promptlens {

/// Content address of one cached payload.
///
/// The digest is SHA-256 over a canonical serialization: the line
/// "promptlens-cache-key/1\n" followed by one line per field,
/// "<name>=<byte length>:<bytes>\n", in a fixed order. Lengths make the encoding
/// unambiguous for arbitrary field contents.
struct CacheKey {
  std::string ns;         // "completions" or "embeddings"; also the subdirectory
  std::string canonical;  // the serialized fields, digest input
  std::string digest;     // 64 lowercase hex chars

  bool operator==(const CacheKey&) const = default;
};

CacheKey make_cache_key(std::string ns,
                        const std::vector<std::pair<std::string, std::string>>& fields);

CacheKey completion_cache_key(std::string_view provider_kind, std::string_view model_id,
                              std::string_view system_prompt, std::string_view user_input,
                              int sample_index, double temperature);

CacheKey embedding_cache_key(std::string_view provider_kind, std::string_view model_id,
                             std::string_view text);

struct CacheStats {
  std::size_t completion_entries = 0;
  std::size_t embedding_entries = 0;
  std::uintmax_t bytes = 0;

  std::size_t entries() const { return completion_entries + embedding_entries; }
};

/// Directory of self-describing JSON entries, one file per key:
/// <root>/<ns>/<digest[0:2]>/<digest>.json.
///
/// Entry schema (format "promptlens-cache", format_version 1):
///   {"format", "format_version", "key", "namespace", "request": {...},
///    "payload": "<text>" | "payload_hex": "<hex bytes>", "created": "<UTC ISO-8601>"}
/// payload_hex is used when the payload is not valid UTF-8.
///
/// put() writes a temporary file and renames it into place, so readers never see a torn
/// entry. A malformed entry is renamed to "<digest>.json.corrupt" and reads as a miss.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  std::optional<std::string> get(const CacheKey& key) const;
  bool contains(const CacheKey& key) const;
  void put(const CacheKey& key, std::string_view payload,
           const nlohmann::json& request_echo = nlohmann::json::object());

  CacheStats stats() const;
  /// Removes every entry. The live tree is renamed aside first, then deleted.
  void clear();

  std::filesystem::path entry_path(const CacheKey& key) const;

 private:
  std::filesystem::path root_;
};

}  // namespace promptlens
