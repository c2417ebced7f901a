#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "revhist/entity_set.hpp"
#include "revhist/revision.hpp"
#include "revhist/time.hpp"

namespace revhist {

struct NamedPredicate {
  std::string name;
  std::function<bool(const RevisionRecord&)> test;
};

// Conjunction of optional clauses; an absent clause always passes.
struct FilterSpec {
  std::optional<TimeRange> time_range;
  std::optional<std::set<std::int32_t>> namespaces;
  std::shared_ptr<const EntitySet> entity_set;
  // Restricts to namespace 0, on top of any namespaces clause.
  bool articles_only = false;
  std::optional<NamedPredicate> custom;

  bool empty() const;

  // Throws Error(bad_range) when time_range is empty or reversed.
  void validate() const;

  // Descriptive form for manifests and reports; entity sets appear by size.
  nlohmann::json describe() const;
};

bool apply_filter(const RevisionRecord& record, const FilterSpec& filter);

// Built-in predicates usable by name from the CLI: `non-redirect`,
// `non-deleted`, `has-parent`, `registered-user`.
std::optional<NamedPredicate> find_predicate(std::string_view name);
void register_predicate(NamedPredicate predicate);

} // namespace revhist
