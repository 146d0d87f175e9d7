#pragma once

#include <string>

#include "invreg/hierarchy.hpp"

namespace invreg {

/// Hierarchy description file. Sections "[node <id>]" hold "key = value"
/// lines: parent (id or "none"), motif and mask paths (relative to the file),
/// center ("row col" in the canonical template) and per-node overrides of
/// any NodeParams field. '#' starts a comment. Children follow from parents.
Hierarchy parse_hierarchy(const std::string& text, const std::string& base_dir = "");
Hierarchy read_hierarchy(const std::string& path);

/// Writes the file plus node<id>_motif.raw and node<id>_mask.png next to it
/// for every node that has a motif. Doubles are written to round-trip.
void write_hierarchy(const std::string& path, const Hierarchy& h);

/// Applies one "key = value" override to params; false for unknown keys.
bool set_node_param(NodeParams& p, const std::string& key, const std::string& value);

}  // namespace invreg
