#pragma once

#include <boost/property_tree/ptree.hpp>
#include <string>
#include <vector>

#include "splitnet/solver_config.hpp"

namespace splitnet {

/// Sectioned key = value text, kept in insertion order.
using Ini = boost::property_tree::ptree;

Ini parse_ini(const std::string& text, const std::string& origin = "<text>");
Ini read_ini(const std::string& path);
std::string ini_text(const Ini& ini);
/// Writes to a temporary sibling and renames it over `path`.
void write_ini(const std::string& path, const Ini& ini);

/// Sub-tree of a section, or an empty tree when the section is absent.
const Ini& ini_section(const Ini& ini, const std::string& name);
/// Sets `section.key = value`, creating the section if needed. Section names
/// may contain dots.
void ini_set(Ini& ini, const std::string& section, const std::string& key, const std::string& value);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
std::string join_ints(const std::vector<int>& v);

/// Reads a [solver] section. Every problem (bad value, unknown key, failed
/// validation) is appended to `problems`; the returned config is only
/// meaningful when nothing was appended. `preset = unet` with optional
/// `scale` starts from the preset before applying the other keys.
SolverConfig solver_config_from_ini(const Ini& section, std::vector<std::string>& problems);
/// Throws ValidationError listing every problem.
SolverConfig solver_config_from_ini(const Ini& section);
Ini solver_config_to_ini(const SolverConfig& cfg);

}  // namespace splitnet
