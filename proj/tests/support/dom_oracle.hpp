#pragma once

#include <string>
#include <vector>

#include "revhist/revision.hpp"

namespace revhist::testing {

// Whole-document parse of an export-format dump into the same event
// sequence the streaming parser yields. Built on a DOM reader so it shares
// no code with the streaming path.
std::vector<DumpEvent> dom_parse(const std::string& xml);

} // namespace revhist::testing
