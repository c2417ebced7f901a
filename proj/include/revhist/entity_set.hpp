#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "revhist/revision.hpp"

namespace revhist {

enum class Normalization { title_exact, title_case_fold, url_decode };

std::string_view to_string(Normalization n);
std::optional<Normalization> parse_normalization(std::string_view text);

// Knowledge-base entity list keyed by a normalized page title or
// Wikipedia-derived URL.
class EntitySet {
public:
  explicit EntitySet(Normalization normalization = Normalization::title_exact);

  // One entity per line, `<key>TAB<id>`; blank lines and `#` comments are
  // skipped. Throws Error(format_error) on malformed lines or on two ids for
  // one normalized key.
  static EntitySet load(const std::filesystem::path& path,
                        Normalization normalization);

  void add(std::string_view key, std::string id);

  std::optional<std::string> lookup(std::string_view title) const;

  std::string normalize(std::string_view key) const;

  Normalization normalization() const { return normalization_; }
  std::size_t size() const { return entries_.size(); }

private:
  Normalization normalization_;
  std::unordered_map<std::string, std::string> entries_;
};

// Identifier of the entity whose key matches the record's page title.
std::optional<std::string> match_entity(const RevisionRecord& record,
                                        const EntitySet& entities);

// Percent-decodes, drops any `.../wiki/` or `.../resource/` URL prefix and
// maps underscores to spaces.
std::string title_from_url(std::string_view url);

// Key under which the index files a page: case-folded title with spaces
// mapped to underscores ("Usain Bolt" -> "usain_bolt").
std::string entity_key(std::string_view title);

} // namespace revhist
