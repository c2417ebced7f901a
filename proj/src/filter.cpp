#include "revhist/filter.hpp"

#include <map>
#include <mutex>

#include "revhist/error.hpp"

namespace revhist {

namespace {

bool looks_like_ip(std::string_view s)
{
  if (s.empty())
    return false;
  for (char c : s)
    if (!(c == '.' || c == ':' || (c >= '0' && c <= '9') ||
          (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F')))
      return false;
  return s.find_first_of(".:") != std::string_view::npos;
}

struct Registry {
  std::mutex mutex;
  std::map<std::string, NamedPredicate, std::less<>> predicates;

  Registry()
  {
    add({"non-redirect",
         [](const RevisionRecord& r) { return !r.page.redirect_target; }});
    add({"non-deleted", [](const RevisionRecord& r) { return !r.text_deleted; }});
    add({"has-parent",
         [](const RevisionRecord& r) { return r.parent_id.has_value(); }});
    add({"registered-user", [](const RevisionRecord& r) {
           return r.contributor && !looks_like_ip(*r.contributor);
         }});
  }

  void add(NamedPredicate p) { predicates[p.name] = std::move(p); }
};

Registry& registry()
{
  static Registry r;
  return r;
}

} // namespace

bool FilterSpec::empty() const
{
  return !time_range && !namespaces && !entity_set && !articles_only && !custom;
}

void FilterSpec::validate() const
{
  if (time_range && !time_range->valid())
    throw Error(ErrorCode::bad_range,
                "time range start " + format_iso8601(time_range->start) +
                  " is not before end " + format_iso8601(time_range->end));
}

nlohmann::json FilterSpec::describe() const
{
  nlohmann::json j = nlohmann::json::object();
  if (time_range) {
    j["from"] = format_iso8601(time_range->start);
    j["to"] = format_iso8601(time_range->end);
  }
  if (namespaces)
    j["namespaces"] = *namespaces;
  if (entity_set) {
    j["entity_set_size"] = entity_set->size();
    j["entity_normalization"] = to_string(entity_set->normalization());
  }
  if (articles_only)
    j["articles_only"] = true;
  if (custom)
    j["custom"] = custom->name;
  return j;
}

bool apply_filter(const RevisionRecord& record, const FilterSpec& filter)
{
  if (filter.time_range && !filter.time_range->contains(record.timestamp))
    return false;
  if (filter.articles_only && record.page.ns != 0)
    return false;
  if (filter.namespaces && !filter.namespaces->contains(record.page.ns))
    return false;
  if (filter.custom && !filter.custom->test(record))
    return false;
  if (filter.entity_set && !match_entity(record, *filter.entity_set))
    return false;
  return true;
}

std::optional<NamedPredicate> find_predicate(std::string_view name)
{
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  auto it = r.predicates.find(name);
  if (it == r.predicates.end())
    return std::nullopt;
  return it->second;
}

void register_predicate(NamedPredicate predicate)
{
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.add(std::move(predicate));
}

} // namespace revhist
