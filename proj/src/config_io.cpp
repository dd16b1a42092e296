#include "splitnet/config_io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <fstream>
#include <set>
#include <sstream>

#include "splitnet/error.hpp"

namespace splitnet {

namespace pt = boost::property_tree;

Ini parse_ini(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  Ini ini;
  try {
    pt::read_ini(in, ini);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return ini;
}

Ini read_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str(), path);
}

std::string ini_text(const Ini& ini) {
  std::ostringstream out;
  pt::write_ini(out, ini);
  return out.str();
}

void write_ini(const std::string& path, const Ini& ini) {
  const std::string text = ini_text(ini);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

const Ini& ini_section(const Ini& ini, const std::string& name) {
  static const Ini empty;
  const auto it = ini.find(name);
  return it == ini.not_found() ? empty : it->second;
}

void ini_set(Ini& ini, const std::string& section, const std::string& key, const std::string& value) {
  auto it = ini.find(section);
  Ini* sec = nullptr;
  if (it == ini.not_found()) {
    sec = &ini.push_back({section, Ini()})->second;
  } else {
    sec = &ini.to_iterator(it)->second;
  }
  auto kit = sec->find(key);
  if (kit == sec->not_found()) {
    sec->push_back({key, Ini(value)});
  } else {
    sec->to_iterator(kit)->second.put_value(value);
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

namespace {

bool parse_int(const std::string& s, int& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_double(const std::string& s, double& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_int_list(const std::string& s, std::vector<int>& out) {
  out.clear();
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) return false;
    int v = 0;
    if (!parse_int(item.substr(b, e - b + 1), v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

}  // namespace

SolverConfig solver_config_from_ini(const Ini& section, std::vector<std::string>& problems) {
  SolverConfig cfg;
  const std::size_t before = problems.size();
  auto get = [&](const char* key) -> std::optional<std::string> {
    const auto v = section.get_optional<std::string>(key);
    return v ? std::optional<std::string>(*v) : std::nullopt;
  };
  auto bad = [&](const std::string& key, const std::string& value, const char* want) {
    problems.push_back("solver." + key + " = '" + value + "' is not " + want);
  };

  if (auto p = get("preset")) {
    double scale = 1.0;
    if (auto s = get("scale"); s && !parse_double(*s, scale)) bad("scale", *s, "a number");
    if (*p != "unet") {
      problems.push_back("solver.preset = '" + *p + "' is unknown (expected unet)");
    } else {
      try {
        cfg = unet_preset(scale);
      } catch (const ValidationError& e) {
        problems.push_back(e.what());
      }
    }
  }

  static const std::set<std::string> known{"preset", "scale", "levels", "substeps", "widths", "kernel_sizes",
                                           "dt", "steps", "down", "up", "relax", "final", "final_tol",
                                           "final_max_iter", "final_damping"};
  for (const auto& [key, child] : section)
    if (!known.count(key)) problems.push_back("unknown key solver." + key);

  auto int_key = [&](const char* key, int& dst) {
    if (auto v = get(key); v && !parse_int(*v, dst)) bad(key, *v, "an integer");
  };
  auto double_key = [&](const char* key, double& dst) {
    if (auto v = get(key); v && !parse_double(*v, dst)) bad(key, *v, "a number");
  };
  auto list_key = [&](const char* key, std::vector<int>& dst) {
    if (auto v = get(key); v && !parse_int_list(*v, dst)) bad(key, *v, "a comma-separated integer list");
  };
  auto enum_key = [&](const char* key, auto parse, auto& dst) {
    if (auto v = get(key)) {
      try {
        dst = parse(*v);
      } catch (const ValidationError& e) {
        problems.push_back(std::string("solver.") + key + ": " + e.what());
      }
    }
  };

  int_key("levels", cfg.levels);
  list_key("substeps", cfg.substeps);
  list_key("widths", cfg.widths);
  list_key("kernel_sizes", cfg.kernel_sizes);
  double_key("dt", cfg.dt);
  int_key("steps", cfg.steps);
  enum_key("down", parse_down_mode, cfg.down);
  enum_key("up", parse_up_mode, cfg.up);
  enum_key("relax", parse_relax_mode, cfg.relax);
  enum_key("final", parse_final_mode, cfg.final_policy.mode);
  double_key("final_tol", cfg.final_policy.tol);
  int_key("final_max_iter", cfg.final_policy.max_iter);
  double_key("final_damping", cfg.final_policy.damping);

  if (problems.size() == before)
    for (auto& p : cfg.problems()) problems.push_back(std::move(p));
  return cfg;
}

SolverConfig solver_config_from_ini(const Ini& section) {
  std::vector<std::string> problems;
  SolverConfig cfg = solver_config_from_ini(section, problems);
  if (!problems.empty()) {
    std::ostringstream os;
    os << "invalid solver configuration:";
    for (const auto& p : problems) os << "\n  - " << p;
    throw ValidationError(os.str());
  }
  return cfg;
}

Ini solver_config_to_ini(const SolverConfig& cfg) {
  Ini s;
  auto put = [&](const char* k, const std::string& v) { s.push_back({k, Ini(v)}); };
  put("levels", std::to_string(cfg.levels));
  put("substeps", join_ints(cfg.substeps));
  put("widths", join_ints(cfg.widths));
  put("kernel_sizes", join_ints(cfg.kernel_sizes));
  put("dt", format_double(cfg.dt));
  put("steps", std::to_string(cfg.steps));
  put("down", to_string(cfg.down));
  put("up", to_string(cfg.up));
  put("relax", to_string(cfg.relax));
  put("final", to_string(cfg.final_policy.mode));
  put("final_tol", format_double(cfg.final_policy.tol));
  put("final_max_iter", std::to_string(cfg.final_policy.max_iter));
  put("final_damping", format_double(cfg.final_policy.damping));
  return s;
}

}  // namespace splitnet
