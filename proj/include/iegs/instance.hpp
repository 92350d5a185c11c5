#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "iegs/types.hpp"

namespace iegs {

/// Parses an instance document (JSON, schema in README). Throws ParseError on
/// malformed input and ValidationError when any type invariant fails.
IEGSInstance load_instance(const std::string& text);
IEGSInstance load_instance_file(const std::string& path);

std::string save_instance(const IEGSInstance& instance);

/// Structural checks; one entry per violated invariant, empty when clean.
std::vector<Diagnostic> validate(const IEGSInstance& instance);

// Index helpers shared by the model builders. All lookups are by id and
// throw DimensionError on unknown ids.
std::size_t power_node_index(const PowerSystem& ps, const std::string& id);
std::size_t gas_node_index(const GasSystem& gs, const std::string& id);

} // namespace iegs
