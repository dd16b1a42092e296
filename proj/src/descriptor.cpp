#include "splitnet/descriptor.hpp"

#include <sstream>

#include "splitnet/config_io.hpp"
#include "splitnet/error.hpp"

namespace splitnet {

ArchitectureDescriptor ArchitectureDescriptor::build(const SolverConfig& cfg) {
  cfg.validate();
  ArchitectureDescriptor d;
  d.levels = cfg.levels;
  d.time_steps = cfg.steps;
  d.dt = cfg.dt;
  d.widths = cfg.widths;
  d.substeps = cfg.substeps;
  d.down = to_string(cfg.down);
  d.up = to_string(cfg.up);
  d.relax = to_string(cfg.relax);
  d.final_policy = to_string(cfg.final_policy.mode);
  for (int j = 1; j <= cfg.levels; ++j)
    for (int l = 1; l <= cfg.substep_count(j); ++l) {
      LayerDescriptor L;
      L.branch = "left";
      L.level = j;
      L.substep = l;
      L.pathways = cfg.width(j);
      L.inputs = cfg.left_inputs(j, l);
      L.kernel = cfg.kernel_size(j);
      L.sampling = (j > 1 && l == 1) ? "down:" + d.down : "none";
      L.gamma = cfg.left_gamma(j);
      L.gamma_dt = L.gamma * cfg.dt;
      d.layers.push_back(L);
    }
  for (int j = cfg.levels - 1; j >= 1; --j)
    for (int l = 1; l <= cfg.substep_count(j); ++l) {
      LayerDescriptor L;
      L.branch = "right";
      L.level = j;
      L.substep = l;
      L.pathways = cfg.width(j);
      L.inputs = cfg.right_inputs(j, l);
      L.kernel = cfg.kernel_size(j);
      L.sampling = l == 1 ? "up:" + d.up : "none";
      L.skip = l == 1 ? d.relax : "none";
      L.gamma = cfg.right_gamma(j, l);
      L.gamma_dt = L.gamma * cfg.dt;
      d.layers.push_back(L);
    }
  LayerDescriptor F;
  F.branch = "final";
  F.level = 1;
  F.substep = 1;
  F.pathways = 1;
  F.inputs = cfg.width(1);
  F.kernel = cfg.kernel_size(1);
  F.activation = Activation::sigmoid_implicit;
  F.gamma = 1.0;
  F.gamma_dt = cfg.dt;
  d.layers.push_back(F);
  return d;
}

namespace {

std::string section_name(const LayerDescriptor& L) {
  if (L.branch == "final") return "final";
  return L.branch + "." + std::to_string(L.level) + "." + std::to_string(L.substep);
}

std::vector<int> split_ints(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValidationError("descriptor: " + key + " is not an integer list");
    }
  }
  return out;
}

template <class T>
T need(const Ini& sec, const std::string& where, const char* key) {
  const auto v = sec.get_optional<T>(key);
  if (!v) throw ValidationError("descriptor: [" + where + "] lacks a valid '" + key + "'");
  return *v;
}

}  // namespace

std::string ArchitectureDescriptor::to_text() const {
  Ini ini;
  Ini net;
  auto put = [](Ini& s, const char* k, const std::string& v) { s.push_back({k, Ini(v)}); };
  put(net, "levels", std::to_string(levels));
  put(net, "time_steps", std::to_string(time_steps));
  put(net, "dt", format_double(dt));
  put(net, "widths", join_ints(widths));
  put(net, "substeps", join_ints(substeps));
  put(net, "down", down);
  put(net, "up", up);
  put(net, "relax", relax);
  put(net, "final_policy", final_policy);
  put(net, "layers", std::to_string(layers.size()));
  ini.push_back({"network", net});
  for (const auto& L : layers) {
    Ini s;
    put(s, "branch", L.branch);
    put(s, "level", std::to_string(L.level));
    put(s, "substep", std::to_string(L.substep));
    put(s, "pathways", std::to_string(L.pathways));
    put(s, "inputs", std::to_string(L.inputs));
    put(s, "kernel", std::to_string(L.kernel));
    put(s, "activation", to_string(L.activation));
    put(s, "sampling", L.sampling);
    put(s, "skip", L.skip);
    put(s, "gamma", format_double(L.gamma));
    put(s, "gamma_dt", format_double(L.gamma_dt));
    ini.push_back({section_name(L), s});
  }
  return ini_text(ini);
}

ArchitectureDescriptor ArchitectureDescriptor::parse(const std::string& text) {
  const Ini ini = parse_ini(text, "architecture descriptor");
  const auto net_it = ini.find("network");
  if (net_it == ini.not_found()) throw ValidationError("descriptor: missing [network] section");
  const Ini& net = net_it->second;
  ArchitectureDescriptor d;
  d.levels = need<int>(net, "network", "levels");
  d.time_steps = need<int>(net, "network", "time_steps");
  d.dt = need<double>(net, "network", "dt");
  d.widths = split_ints(need<std::string>(net, "network", "widths"), "widths");
  d.substeps = split_ints(need<std::string>(net, "network", "substeps"), "substeps");
  d.down = need<std::string>(net, "network", "down");
  d.up = need<std::string>(net, "network", "up");
  d.relax = need<std::string>(net, "network", "relax");
  d.final_policy = need<std::string>(net, "network", "final_policy");
  const int count = need<int>(net, "network", "layers");
  for (const auto& [name, sec] : ini) {
    if (name == "network") continue;
    LayerDescriptor L;
    L.branch = need<std::string>(sec, name, "branch");
    L.level = need<int>(sec, name, "level");
    L.substep = need<int>(sec, name, "substep");
    L.pathways = need<int>(sec, name, "pathways");
    L.inputs = need<int>(sec, name, "inputs");
    L.kernel = need<int>(sec, name, "kernel");
    L.activation = parse_activation(need<std::string>(sec, name, "activation"));
    L.sampling = need<std::string>(sec, name, "sampling");
    L.skip = need<std::string>(sec, name, "skip");
    L.gamma = need<double>(sec, name, "gamma");
    L.gamma_dt = need<double>(sec, name, "gamma_dt");
    if (section_name(L) != name)
      throw ValidationError("descriptor: section [" + name + "] describes " + section_name(L));
    d.layers.push_back(L);
  }
  if (static_cast<int>(d.layers.size()) != count)
    throw ValidationError("descriptor: [network] announces " + std::to_string(count) + " layers, found " +
                          std::to_string(d.layers.size()));
  return d;
}

}  // namespace splitnet
