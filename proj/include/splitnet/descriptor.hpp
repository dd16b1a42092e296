#pragma once

#include <string>
#include <vector>

#include "splitnet/solver.hpp"
#include "splitnet/solver_config.hpp"

namespace splitnet {

/// One convolution-plus-activation layer of the unrolled solver.
struct LayerDescriptor {
  std::string branch;  // "left", "right" or "final"
  int level = 1;
  int substep = 1;
  int pathways = 1;  // output channels
  int inputs = 1;    // input channels
  int kernel = 3;
  Activation activation = Activation::relu_projection;
  std::string sampling = "none";  // "down:<mode>", "up:<mode>" or "none"
  std::string skip = "none";      // relaxation mode where the skip enters, else "none"
  double gamma = 1.0;
  double gamma_dt = 1.0;  // scale of the mapped weights around (1/inputs) delta

  friend bool operator==(const LayerDescriptor&, const LayerDescriptor&) = default;
};

/// Structured text description of the network one solver step unrolls to.
struct ArchitectureDescriptor {
  int levels = 0;
  int time_steps = 0;
  double dt = 1.0;
  std::vector<int> widths;
  std::vector<int> substeps;
  std::string down;
  std::string up;
  std::string relax;
  std::string final_policy;
  std::vector<LayerDescriptor> layers;  // left j=1..J, right j=J-1..1, final

  static ArchitectureDescriptor build(const SolverConfig& cfg);
  /// Sections [network], [left.j.l], [right.j.l], [final] in that order.
  std::string to_text() const;
  /// Throws ValidationError on missing or malformed entries.
  static ArchitectureDescriptor parse(const std::string& text);

  friend bool operator==(const ArchitectureDescriptor&, const ArchitectureDescriptor&) = default;
};

}  // namespace splitnet
