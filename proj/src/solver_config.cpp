#include "splitnet/solver_config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "splitnet/error.hpp"

namespace splitnet {

double FinalPolicy::damping_for(double dt) const {
  return damping > 0.0 ? damping : std::min(1.0, 2.0 * dt);
}

std::string to_string(RelaxMode m) {
  switch (m) {
    case RelaxMode::skip_average: return "skip_average";
    case RelaxMode::paper_literal: return "paper_literal";
    case RelaxMode::concat: return "concat";
  }
  return "unknown";
}

std::string to_string(FinalMode m) { return m == FinalMode::two_step ? "two_step" : "iterate"; }

RelaxMode parse_relax_mode(const std::string& s) {
  if (s == "skip_average") return RelaxMode::skip_average;
  if (s == "paper_literal") return RelaxMode::paper_literal;
  if (s == "concat") return RelaxMode::concat;
  throw ValidationError("unknown relaxation mode '" + s + "' (expected skip_average|paper_literal|concat)");
}

FinalMode parse_final_mode(const std::string& s) {
  if (s == "two_step") return FinalMode::two_step;
  if (s == "iterate") return FinalMode::iterate;
  throw ValidationError("unknown final policy '" + s + "' (expected two_step|iterate)");
}

std::vector<std::string> SolverConfig::problems() const {
  std::vector<std::string> out;
  const auto J = static_cast<std::size_t>(std::max(levels, 0));
  if (levels < 1) out.push_back("levels must be >= 1");
  if (substeps.size() != J) out.push_back("substeps needs one entry per level");
  if (widths.size() != J) out.push_back("widths needs one entry per level");
  if (kernel_sizes.size() != J) out.push_back("kernel_sizes needs one entry per level");
  for (int v : substeps)
    if (v < 1) out.push_back("every substep count must be >= 1");
  for (int v : widths)
    if (v < 1) out.push_back("every width must be >= 1");
  for (int v : kernel_sizes)
    if (v < 1 || v % 2 == 0) out.push_back("kernel sizes must be odd and positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) out.push_back("dt must be a positive finite number");
  if (steps < 1) out.push_back("steps must be >= 1");
  if (final_policy.mode == FinalMode::iterate) {
    if (!(final_policy.tol > 0.0)) out.push_back("final tolerance must be positive");
    if (final_policy.max_iter < 1) out.push_back("final max_iter must be >= 1");
    if (final_policy.damping < 0.0 || final_policy.damping > 1.0) out.push_back("final damping must lie in [0, 1]");
  }
  return out;
}

void SolverConfig::validate() const {
  const auto list = problems();
  if (list.empty()) return;
  std::ostringstream os;
  os << "invalid solver configuration:";
  for (const auto& p : list) os << "\n  - " << p;
  throw ValidationError(os.str());
}

int SolverConfig::width(int j) const {
  if (j == 0) return 1;
  if (j < 0 || j > levels) throw ValidationError("level " + std::to_string(j) + " out of range");
  return widths[static_cast<std::size_t>(j - 1)];
}

int SolverConfig::substep_count(int j) const {
  if (j < 1 || j > levels) throw ValidationError("level " + std::to_string(j) + " out of range");
  return substeps[static_cast<std::size_t>(j - 1)];
}

int SolverConfig::kernel_size(int j) const {
  if (j < 1 || j > levels) throw ValidationError("level " + std::to_string(j) + " out of range");
  return kernel_sizes[static_cast<std::size_t>(j - 1)];
}

int SolverConfig::left_inputs(int j, int l) const { return l == 1 ? width(j - 1) : width(j); }

int SolverConfig::right_inputs(int j, int l) const {
  if (j >= levels) throw ValidationError("the right branch has no level " + std::to_string(j));
  if (l > 1) return width(j);
  switch (relax) {
    case RelaxMode::skip_average: return width(j);
    case RelaxMode::paper_literal: return width(j + 1);
    case RelaxMode::concat: return width(j) + width(j + 1);
  }
  return width(j);
}

double SolverConfig::left_gamma(int j) const { return std::ldexp(static_cast<double>(width(j)), j - 1); }

double SolverConfig::right_gamma(int j, int l) const {
  return std::ldexp(static_cast<double>(right_inputs(j, l)), j - 1);
}

SolverConfig unet_preset(double scale) {
  if (!(scale > 0.0)) throw ValidationError("preset scale must be positive");
  SolverConfig cfg;
  cfg.levels = 5;
  cfg.substeps = {2, 2, 2, 2, 2};
  cfg.widths.clear();
  for (int base : {64, 128, 256, 512, 1024}) {
    const double w = base * scale;
    if (w < 1.0 || std::abs(w - std::round(w)) > 1e-9)
      throw ValidationError("preset scale does not give integer widths");
    cfg.widths.push_back(static_cast<int>(std::lround(w)));
  }
  cfg.kernel_sizes = {3, 3, 3, 3, 3};
  cfg.dt = 1.0;
  cfg.steps = 1;
  cfg.down = DownMode::max;
  cfg.up = UpMode::transpose_conv;
  cfg.relax = RelaxMode::skip_average;
  cfg.final_policy = FinalPolicy{};
  return cfg;
}

}  // namespace splitnet
