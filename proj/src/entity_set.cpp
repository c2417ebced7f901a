#include "revhist/entity_set.hpp"

#include <fstream>

#include "revhist/error.hpp"
#include "revhist/tokenizer.hpp"

namespace revhist {

std::string_view to_string(Normalization n)
{
  switch (n) {
    case Normalization::title_exact: return "title-exact";
    case Normalization::title_case_fold: return "title-case-fold";
    case Normalization::url_decode: return "url-decode";
  }
  return "title-exact";
}

std::optional<Normalization> parse_normalization(std::string_view text)
{
  if (text == "title-exact")
    return Normalization::title_exact;
  if (text == "title-case-fold")
    return Normalization::title_case_fold;
  if (text == "url-decode")
    return Normalization::url_decode;
  return std::nullopt;
}

namespace {

std::string_view trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int hex_value(char c)
{
  if (c >= '0' && c <= '9')
    return c - '0';
  if (c >= 'a' && c <= 'f')
    return c - 'a' + 10;
  if (c >= 'A' && c <= 'F')
    return c - 'A' + 10;
  return -1;
}

} // namespace

std::string title_from_url(std::string_view url)
{
  for (std::string_view marker : {"/wiki/", "/resource/"}) {
    auto pos = url.rfind(marker);
    if (pos != std::string_view::npos) {
      url.remove_prefix(pos + marker.size());
      break;
    }
  }
  std::string out;
  out.reserve(url.size());
  for (std::size_t i = 0; i < url.size(); ++i) {
    char c = url[i];
    if (c == '%' && i + 2 < url.size()) {
      int hi = hex_value(url[i + 1]);
      int lo = hex_value(url[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    out.push_back(c == '_' ? ' ' : c);
  }
  return std::string(trim(out));
}

std::string entity_key(std::string_view title)
{
  auto folded = case_fold(trim(title));
  for (auto& c : folded)
    if (c == ' ')
      c = '_';
  return folded;
}

EntitySet::EntitySet(Normalization normalization)
  : normalization_(normalization)
{
}

std::string EntitySet::normalize(std::string_view key) const
{
  switch (normalization_) {
    case Normalization::title_exact:
      return std::string(trim(key));
    case Normalization::title_case_fold:
      return case_fold(trim(key));
    case Normalization::url_decode:
      return title_from_url(trim(key));
  }
  return std::string(key);
}

void EntitySet::add(std::string_view key, std::string id)
{
  auto norm = normalize(key);
  if (norm.empty())
    throw Error(ErrorCode::format_error, "empty entity key");
  auto [it, inserted] = entries_.emplace(std::move(norm), id);
  if (!inserted && it->second != id)
    throw Error(ErrorCode::format_error,
                "entity key '" + it->first + "' maps to both '" + it->second +
                  "' and '" + id + "'");
}

EntitySet EntitySet::load(const std::filesystem::path& path,
                          Normalization normalization)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::io_error, "cannot open entity list '" + path.string() + "'");
  EntitySet set(normalization);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#')
      continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(ErrorCode::format_error,
                  path.string() + ":" + std::to_string(lineno) +
                    ": expected <key>TAB<id>");
    auto id = trim(std::string_view(line).substr(tab + 1));
    if (id.empty())
      throw Error(ErrorCode::format_error,
                  path.string() + ":" + std::to_string(lineno) + ": empty id");
    set.add(std::string_view(line).substr(0, tab), std::string(id));
  }
  return set;
}

std::optional<std::string> EntitySet::lookup(std::string_view title) const
{
  auto it = entries_.find(normalize(title));
  if (it == entries_.end())
    return std::nullopt;
  return it->second;
}

std::optional<std::string> match_entity(const RevisionRecord& record,
                                        const EntitySet& entities)
{
  if (auto id = entities.lookup(record.page.title))
    return id;
  // A title given in URL form ("Barack_Obama") still names the entity.
  if (entities.normalization() != Normalization::url_decode)
    if (auto decoded = title_from_url(record.page.title);
        decoded != record.page.title)
      return entities.lookup(decoded);
  return std::nullopt;
}

} // namespace revhist
