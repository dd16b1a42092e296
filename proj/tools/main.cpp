#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include "run_manifest.hpp"
#include "splitnet/checkpoint.hpp"
#include "splitnet/config_io.hpp"
#include "splitnet/descriptor.hpp"
#include "splitnet/error.hpp"
#include "splitnet/kernels.hpp"
#include "splitnet/model.hpp"
#include "splitnet/training.hpp"
#include "splitnet/verification.hpp"

namespace fs = std::filesystem;
using namespace splitnet;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitVerification = 3;
constexpr int kExitIo = 4;

using Clock = std::chrono::steady_clock;

// A flag that, when given, overrides `section.key` of the loaded config.
struct Binding {
  CLI::App* owner = nullptr;
  std::string section;
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

class Bindings {
 public:
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& section, const std::string& key,
                   const std::string& help) {
    auto b = std::make_unique<Binding>();
    b->owner = app;
    b->section = section;
    b->key = key;
    b->option = app->add_option(flag, b->value, help);
    items_.push_back(std::move(b));
    return items_.back()->option;
  }

  /// Config file (if any) with every given flag of `app` applied on top.
  Ini resolve(const CLI::App* app, const std::string& config_path) const {
    Ini ini;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw IoError("config file " + config_path + " does not exist");
      ini = read_ini(config_path);
    }
    for (const auto& b : items_)
      if (b->owner == app && b->option->count() > 0) ini_set(ini, b->section, b->key, b->value);
    return ini;
  }

 private:
  std::vector<std::unique_ptr<Binding>> items_;
};

class Problems {
 public:
  void add(std::string p) { list_.push_back(std::move(p)); }
  std::vector<std::string>& list() { return list_; }

  template <class T>
  T get(const Ini& ini, const std::string& section, const std::string& key, T fallback) {
    const Ini& sec = ini_section(ini, section);
    const auto raw = sec.get_optional<std::string>(key);
    if (!raw) return fallback;
    const auto v = sec.get_optional<T>(key);
    if (!v) {
      add(section + "." + key + " = '" + *raw + "' is not a valid value");
      return fallback;
    }
    return *v;
  }

  std::string path(const Ini& ini, const std::string& section, const std::string& key, bool required) {
    const auto v = ini_section(ini, section).get_optional<std::string>(key);
    if ((!v || v->empty()) && required) add(section + "." + key + " is required");
    return v ? *v : std::string();
  }

  void only_keys(const Ini& ini, const std::string& section, std::initializer_list<const char*> known) {
    for (const auto& [key, child] : ini_section(ini, section)) {
      bool ok = false;
      for (const char* k : known) ok = ok || key == k;
      if (!ok) add("unknown key " + section + "." + key);
    }
  }

  void only_sections(const Ini& ini, std::initializer_list<const char*> known) {
    for (const auto& [name, child] : ini) {
      bool ok = false;
      for (const char* k : known) ok = ok || name == k;
      if (!ok) add("unknown section [" + name + "]");
    }
  }

  void raise() const {
    if (list_.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& p : list_) msg += "\n  - " + p;
    throw ValidationError(msg);
  }

 private:
  std::vector<std::string> list_;
};

std::vector<double> parse_list(const std::string& text, const std::string& what, Problems& problems) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      problems.add(what + ": '" + item + "' is not a number");
    }
  }
  return out;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void make_parent(const fs::path& p) {
  if (!p.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
}

// make-dataset -----------------------------------------------------------------

int cmd_make_dataset(const Ini& ini) {
  const auto t0 = Clock::now();
  Problems pr;
  pr.only_sections(ini, {"dataset"});
  pr.only_keys(ini, "dataset", {"count", "size", "seed", "min_shapes", "max_shapes", "noise_max", "levels", "out"});
  ShapesSpec spec;
  const int count = pr.get<int>(ini, "dataset", "count", 200);
  spec.size = pr.get<int>(ini, "dataset", "size", spec.size);
  const auto seed = pr.get<std::uint64_t>(ini, "dataset", "seed", 1);
  spec.min_shapes = pr.get<int>(ini, "dataset", "min_shapes", spec.min_shapes);
  spec.max_shapes = pr.get<int>(ini, "dataset", "max_shapes", spec.max_shapes);
  spec.noise_max = pr.get<double>(ini, "dataset", "noise_max", spec.noise_max);
  const int levels = pr.get<int>(ini, "dataset", "levels", 1);
  const std::string out = pr.path(ini, "dataset", "out", true);
  if (count < 0) pr.add("dataset.count must be >= 0");
  pr.raise();

  // Generation validates the spec and happens before anything is written.
  const auto samples = generate_shapes(count, spec, seed, levels);
  write_dataset(out, samples, spec, seed);

  cli::RunManifest run{"make-dataset", ini, seed, {"manifest.ini"}, 0.0};
  for (int i = 0; i < count; ++i) {
    char stem[16];
    std::snprintf(stem, sizeof stem, "%05d", i);
    run.artifacts.push_back(std::string("images/") + stem + ".png");
    run.artifacts.push_back(std::string("masks/") + stem + ".png");
  }
  run.wall_time = seconds_since(t0);
  cli::write_run_manifest(out, run);
  std::cout << "wrote " << count << " samples of " << spec.size << "x" << spec.size << " to " << out << "\n";
  return 0;
}

// train --------------------------------------------------------------------------

int cmd_train(const Ini& ini, bool dry_run) {
  const auto t0 = Clock::now();
  Problems pr;
  pr.only_sections(ini, {"solver", "train", "paths"});
  pr.only_keys(ini, "paths", {"data", "out", "resume"});
  const std::string resume = pr.path(ini, "paths", "resume", false);
  const bool has_solver = ini.find("solver") != ini.not_found();
  SolverConfig cfg = solver_config_from_ini(ini_section(ini, "solver"), pr.list());
  const TrainConfig tc = train_config_from_ini(ini_section(ini, "train"), pr.list());
  const std::string data = pr.path(ini, "paths", "data", !dry_run);
  const std::string out = pr.path(ini, "paths", "out", !dry_run);
  pr.raise();

  std::optional<Checkpoint> start;
  if (!resume.empty()) {
    start = load_checkpoint(resume);
    if (has_solver && ini_text(solver_config_to_ini(cfg)) != ini_text(solver_config_to_ini(start->config)))
      throw ValidationError("the [solver] section differs from the configuration stored in " + resume);
    cfg = start->config;
  }
  const ControlVariables theta = start ? start->theta : ControlVariables::random(cfg, tc.init_seed);
  const int start_epoch = start ? start->meta.get<int>("epochs_completed", 0) : 0;

  if (dry_run) {
    std::cout << "parameters = " << theta.parameter_count() << "\n";
    std::cout << "start_epoch = " << start_epoch << "\n";
    std::cout << "epochs = " << tc.epochs << "\n";
    return 0;
  }

  if (!fs::is_directory(data)) throw IoError("data directory " + data + " does not exist");
  cli::check_run_manifest(data);
  const std::vector<Sample> all = read_dataset(data);
  if (all.empty()) throw ValidationError("dataset " + data + " holds no samples");
  for (const auto& s : all) GridPyramid(s.image.grid.rows, s.image.grid.cols, cfg.levels);
  const auto n_val = static_cast<std::size_t>(tc.holdout * static_cast<double>(all.size()));
  if (n_val >= all.size()) throw ValidationError("train.holdout leaves no training samples");
  const std::vector<Sample> train_set(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_val));
  const std::vector<Sample> val_set(all.end() - static_cast<std::ptrdiff_t>(n_val), all.end());

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out + ": " + ec.message());
  const fs::path log_path = fs::path(out) / "metrics.jsonl";
  if (start && fs::exists(fs::path(resume) / "metrics.jsonl") && fs::path(resume) != fs::path(out))
    fs::copy_file(fs::path(resume) / "metrics.jsonl", log_path, fs::copy_options::overwrite_existing);
  std::ofstream log(log_path, start ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());

  const TrainResult res = train(cfg, theta, train_set, val_set, tc, &log, start_epoch);
  log.close();

  Checkpoint ckpt{cfg, res.theta, Ini()};
  ckpt.meta.put("epochs_completed", res.epochs_completed);
  ckpt.meta.put("seed", tc.seed);
  ckpt.meta.put("init_seed", tc.init_seed);
  ckpt.meta.put("loss", to_string(tc.loss));
  ckpt.meta.put("initial_loss", format_double(res.initial_loss));
  ckpt.meta.put("final_loss", format_double(res.final_loss));
  ckpt.meta.put("train_samples", train_set.size());
  ckpt.meta.put("val_samples", val_set.size());
  save_checkpoint(out, ckpt);

  cli::RunManifest run{"train", ini, tc.seed, {"manifest.ini", "metrics.jsonl"}, seconds_since(t0)};
  cli::write_run_manifest(out, run);

  std::cout << "epochs_completed = " << res.epochs_completed << "\n";
  std::cout << "initial_loss = " << format_double(res.initial_loss) << "\n";
  std::cout << "final_loss = " << format_double(res.final_loss) << "\n";
  for (auto it = res.metrics.rbegin(); it != res.metrics.rend(); ++it)
    if (it->split == "val") {
      std::cout << "val_iou = " << format_double(it->iou) << "\n";
      break;
    }
  if (res.clamped_pixels > 0) std::cout << "clamped_pixels = " << res.clamped_pixels << "\n";
  return 0;
}

// solve ----------------------------------------------------------------------------

int cmd_solve(const Ini& ini) {
  const auto t0 = Clock::now();
  Problems pr;
  pr.only_sections(ini, {"solve"});
  pr.only_keys(ini, "solve", {"checkpoint", "image", "out", "steps"});
  const std::string ckpt_dir = pr.path(ini, "solve", "checkpoint", true);
  const std::string image_path = pr.path(ini, "solve", "image", true);
  const std::string out = pr.path(ini, "solve", "out", true);
  const int steps = pr.get<int>(ini, "solve", "steps", 0);
  if (steps < 0) pr.add("solve.steps must be >= 1");
  pr.raise();

  Checkpoint ckpt = load_checkpoint(ckpt_dir);
  const Field image = read_image(image_path);
  const int rows = image.grid.rows, cols = image.grid.cols;
  const int need = 1 << (ckpt.config.levels - 1);
  if (!is_power_of_two(rows) || !is_power_of_two(cols) || rows < need || cols < need)
    throw ValidationError(image_path + " is " + std::to_string(rows) + "x" + std::to_string(cols) +
                          "; both sides must be powers of two and at least " + std::to_string(need) + " for " +
                          std::to_string(ckpt.config.levels) + " levels");
  if (steps > 0 && steps != ckpt.config.steps) {
    if (steps > ckpt.config.steps)
      throw ValidationError("the checkpoint holds controls for " + std::to_string(ckpt.config.steps) +
                            " time steps; cannot run " + std::to_string(steps));
    ckpt.config.steps = steps;
    ckpt.theta.steps.resize(static_cast<std::size_t>(steps));
  }

  const Field u = forward(as_rgb(image), ckpt.theta, ckpt.config);
  Field mask(u.grid, 1);
  for (std::size_t i = 0; i < u.values.size(); ++i) mask.values[i] = u.values[i] >= 0.5 ? 1.0 : 0.0;

  const fs::path png = out;
  fs::path blob = png;
  blob.replace_extension(".splf");
  make_parent(png);
  write_png(png.string(), mask);
  write_field(blob.string(), u);

  const fs::path dir = png.has_parent_path() ? png.parent_path() : fs::path(".");
  cli::RunManifest run{"solve", ini, 0, {png.filename().string(), blob.filename().string()}, seconds_since(t0)};
  cli::write_run_manifest(dir.string(), run);
  std::cout << "wrote " << png.string() << " and " << blob.string() << " (" << ckpt.config.steps << " step"
            << (ckpt.config.steps == 1 ? "" : "s") << ")\n";
  return 0;
}

// verify -----------------------------------------------------------------------------

int cmd_verify_convergence(const Ini& ini) {
  Problems pr;
  pr.only_sections(ini, {"convergence"});
  pr.only_keys(ini, "convergence", {"problem", "horizon", "coarse", "fine", "seed"});
  const std::string problem = pr.get<std::string>(ini, "convergence", "problem", "all");
  const double horizon = pr.get<double>(ini, "convergence", "horizon", 1.0);
  const int coarse = pr.get<int>(ini, "convergence", "coarse", 4);
  const int fine = pr.get<int>(ini, "convergence", "fine", 8);
  const auto seed = pr.get<std::uint64_t>(ini, "convergence", "seed", 11);
  if (problem != "scalar" && problem != "diagonal" && problem != "all")
    pr.add("convergence.problem must be scalar, diagonal or all");
  if (!(horizon > 0.0)) pr.add("convergence.horizon must be positive");
  if (coarse < 0 || fine <= coarse || fine > 20) pr.add("convergence needs 0 <= coarse < fine <= 20");
  pr.raise();

  const auto dts = dyadic_steps(horizon, coarse, fine);
  bool ok = true;
  if (problem != "diagonal") {
    const auto rep = convergence_study(scalar_decay_problem(horizon), dts);
    std::cout << rep.to_text();
    ok = ok && rep.pass;
  }
  if (problem != "scalar") {
    const auto rep = convergence_study(diagonal_two_stage_problem(4, 4, seed, horizon), dts);
    std::cout << rep.to_text();
    ok = ok && rep.pass;
  }
  return ok ? 0 : kExitVerification;
}

int cmd_verify_equivalence(const Ini& ini) {
  Problems pr;
  pr.only_sections(ini, {"equivalence", "solver"});
  pr.only_keys(ini, "equivalence", {"specs", "seed", "max_size", "max_pathways", "size"});
  const int specs = pr.get<int>(ini, "equivalence", "specs", 1000);
  const auto seed = pr.get<std::uint64_t>(ini, "equivalence", "seed", 1);
  const int max_size = pr.get<int>(ini, "equivalence", "max_size", 16);
  const int max_pathways = pr.get<int>(ini, "equivalence", "max_pathways", 8);
  const int size = pr.get<int>(ini, "equivalence", "size", 16);
  Ini solver = ini_section(ini, "solver");
  if (solver.empty()) {
    solver.put("levels", "3");
    solver.put("substeps", "2,2,2");
    solver.put("widths", "4,8,8");
    solver.put("kernel_sizes", "3,3,3");
    solver.put("down", "max");
    solver.put("up", "transpose_conv");
  }
  const SolverConfig cfg = solver_config_from_ini(solver, pr.list());
  if (specs < 1) pr.add("equivalence.specs must be >= 1");
  if (max_pathways < 1) pr.add("equivalence.max_pathways must be >= 1");
  pr.raise();

  const auto rep = equivalence_sweep(specs, seed, max_size, max_pathways);
  std::cout << rep.to_text();

  // Whole network on a fresh random theta against the plain conv+ReLU oracle.
  const ControlVariables theta = ControlVariables::random(cfg, seed);
  const ControlVariables weights = map_to_network_weights(theta, cfg);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Field image(GridSpec{1, size, size, 1.0}, 3);
  for (double& v : image.values) v = unit(rng);
  const Field got = forward(image, theta, cfg);
  const Field want = unet_reference_forward(image, weights, cfg);
  double dev = 0.0;
  for (std::size_t i = 0; i < got.values.size(); ++i) dev = std::max(dev, std::abs(got.values[i] - want.values[i]));
  const bool net_ok = dev <= rep.tolerance;
  std::cout << "[network]\n";
  std::cout << "max_deviation = " << dev << "\n";
  std::cout << "result = " << (net_ok ? "pass" : "fail") << "\n";
  return rep.pass() && net_ok ? 0 : kExitVerification;
}

int cmd_verify_architecture(const Ini& ini) {
  Problems pr;
  pr.only_sections(ini, {"architecture", "solver"});
  pr.only_keys(ini, "architecture", {"preset", "scale"});
  SolverConfig cfg;
  if (ini.find("solver") != ini.not_found()) {
    cfg = solver_config_from_ini(ini_section(ini, "solver"), pr.list());
  } else {
    const std::string preset = pr.get<std::string>(ini, "architecture", "preset", "unet");
    const double scale = pr.get<double>(ini, "architecture", "scale", 1.0);
    if (preset != "unet") pr.add("architecture.preset must be unet");
    if (!(scale > 0.0)) pr.add("architecture.scale must be positive");
    pr.raise();
    cfg = unet_preset(scale);
  }
  pr.raise();
  const auto rep = architecture_audit(cfg);
  std::cout << rep.to_text();
  return rep.pass() ? 0 : kExitVerification;
}

int cmd_verify_fixedpoint(const Ini& ini) {
  Problems pr;
  pr.only_sections(ini, {"fixedpoint"});
  pr.only_keys(ini, "fixedpoint", {"ubar", "dt", "damping", "tol", "max_iter", "residual_tol"});
  const auto ubars = parse_list(pr.get<std::string>(ini, "fixedpoint", "ubar", "-3,-1,-0.25,0,0.3,0.5,1,2.5,7"),
                                "fixedpoint.ubar", pr);
  const auto dts = parse_list(pr.get<std::string>(ini, "fixedpoint", "dt", "4,8,16,64"), "fixedpoint.dt", pr);
  const double damping = pr.get<double>(ini, "fixedpoint", "damping", 0.0);
  const double tol = pr.get<double>(ini, "fixedpoint", "tol", 1e-12);
  const int max_iter = pr.get<int>(ini, "fixedpoint", "max_iter", 100000);
  const double residual_tol = pr.get<double>(ini, "fixedpoint", "residual_tol", 1e-10);
  for (double dt : dts)
    if (!(dt > 0.0)) pr.add("fixedpoint.dt values must be positive");
  if (ubars.empty() || dts.empty()) pr.add("fixedpoint needs at least one ubar and one dt");
  if (damping > 1.0) pr.add("fixedpoint.damping must be in (0, 1], or <= 0 for the default");
  pr.raise();

  const auto rep = fixedpoint_diagnostics(ubars, dts, damping, tol, max_iter);
  std::cout << rep.to_text();
  bool ok = rep.first_iterate_half;
  for (const auto& p : rep.probes) ok = ok && p.converged && p.residual <= residual_tol && p.oracle_error <= residual_tol;
  std::cout << "residual_tol = " << residual_tol << "\n";
  std::cout << "result = " << (ok ? "pass" : "fail") << "\n";
  return ok ? 0 : kExitVerification;
}

// export-arch ----------------------------------------------------------------------------

int cmd_export_arch(const Ini& ini) {
  Problems pr;
  pr.only_sections(ini, {"solver", "export"});
  pr.only_keys(ini, "export", {"out"});
  const std::string out = pr.path(ini, "export", "out", true);
  if (ini.find("solver") == ini.not_found()) pr.add("a [solver] section (or --preset) is required");
  const SolverConfig cfg = solver_config_from_ini(ini_section(ini, "solver"), pr.list());
  pr.raise();

  const ArchitectureDescriptor d = ArchitectureDescriptor::build(cfg);
  const std::string text = d.to_text();
  if (!(ArchitectureDescriptor::parse(text) == d)) throw Error("descriptor does not survive a round trip");
  if (out == "-") {
    std::cout << text;
    return 0;
  }
  make_parent(out);
  write_ini(out, parse_ini(text, out));
  std::cout << "wrote " << d.layers.size() << " layers over " << d.levels << " levels to " << out << "\n";
  return 0;
}

int apply_thread_env() {
  const char* env = std::getenv("SPLITNET_THREADS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 0 || n > 4096) {
    std::cerr << "error: SPLITNET_THREADS must be a non-negative integer, got '" << env << "'\n";
    return kExitValidation;
  }
  kernels::set_thread_limit(static_cast<int>(n));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Operator-splitting V-cycle solver for image segmentation"};
  app.require_subcommand(1);
  Bindings flags;
  std::string config_path;

  auto* mk = app.add_subcommand("make-dataset", "Generate a synthetic shapes dataset");
  mk->add_option("--config", config_path, "Config file with a [dataset] section");
  flags.add(mk, "--count", "dataset", "count", "Number of samples");
  flags.add(mk, "--size", "dataset", "size", "Image side length (power of two)");
  flags.add(mk, "--seed", "dataset", "seed", "Generator seed");
  flags.add(mk, "--levels", "dataset", "levels", "Solver depth the images must support");
  flags.add(mk, "--out", "dataset", "out", "Output directory");

  bool dry_run = false;
  auto* tr = app.add_subcommand("train", "Fit control variables to a dataset");
  tr->add_option("--config", config_path, "Config file with [solver], [train] and [paths]");
  tr->add_flag("--dry-run", dry_run, "Validate and print the parameter count without training");
  flags.add(tr, "--data", "paths", "data", "Dataset directory");
  flags.add(tr, "--out", "paths", "out", "Checkpoint directory");
  flags.add(tr, "--resume", "paths", "resume", "Checkpoint to continue from");
  flags.add(tr, "--epochs", "train", "epochs", "Epochs to run");
  flags.add(tr, "--batch-size", "train", "batch_size", "Samples per update");
  flags.add(tr, "--learning-rate", "train", "learning_rate", "Adam step size");
  flags.add(tr, "--seed", "train", "seed", "Shuffling seed");
  flags.add(tr, "--init-seed", "train", "init_seed", "Parameter initialisation seed");
  flags.add(tr, "--loss", "train", "loss", "logistic or hinge");

  auto* so = app.add_subcommand("solve", "Run a trained solver on one image");
  so->add_option("--config", config_path, "Config file with a [solve] section");
  flags.add(so, "--checkpoint", "solve", "checkpoint", "Checkpoint directory");
  flags.add(so, "--image", "solve", "image", "Input PNG, PGM or PPM");
  flags.add(so, "--out", "solve", "out", "Mask PNG; the raw field goes next to it as .splf");
  flags.add(so, "--steps", "solve", "steps", "Time steps N (default: the checkpoint's)");

  auto* ve = app.add_subcommand("verify", "Run a verification harness");
  ve->require_subcommand(1);
  auto* vc = ve->add_subcommand("convergence", "Order of the hybrid splitting scheme");
  vc->add_option("--config", config_path, "Config file with a [convergence] section");
  flags.add(vc, "--problem", "convergence", "problem", "scalar, diagonal or all");
  flags.add(vc, "--horizon", "convergence", "horizon", "Final time T");
  flags.add(vc, "--coarse", "convergence", "coarse", "Coarsest step is T/2^coarse");
  flags.add(vc, "--fine", "convergence", "fine", "Finest step is T/2^fine");
  auto* vq = ve->add_subcommand("equivalence", "Sub-step versus conv+ReLU layer");
  vq->add_option("--config", config_path, "Config file with [equivalence] and optional [solver]");
  flags.add(vq, "--specs", "equivalence", "specs", "Random sub-step specs");
  flags.add(vq, "--seed", "equivalence", "seed", "Seed");
  auto* va = ve->add_subcommand("architecture", "Audit the unrolled network against UNet");
  va->add_option("--config", config_path, "Config file with [architecture] or [solver]");
  flags.add(va, "--preset", "architecture", "preset", "Preset name (unet)");
  flags.add(va, "--scale", "architecture", "scale", "Width scale of the preset");
  auto* vf = ve->add_subcommand("fixedpoint", "Logit fixed-point iteration");
  vf->add_option("--config", config_path, "Config file with a [fixedpoint] section");
  flags.add(vf, "--ubar", "fixedpoint", "ubar", "Comma-separated probe values");
  flags.add(vf, "--dt", "fixedpoint", "dt", "Comma-separated time steps");
  flags.add(vf, "--damping", "fixedpoint", "damping", "Damping in (0, 1]; <= 0 for min(1, 2 dt)");

  auto* ex = app.add_subcommand("export-arch", "Write the architecture descriptor");
  ex->add_option("--config", config_path, "Config file with a [solver] section");
  flags.add(ex, "--preset", "solver", "preset", "Preset name (unet)");
  flags.add(ex, "--scale", "solver", "scale", "Width scale of the preset");
  flags.add(ex, "--out", "export", "out", "Output file, or - for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }
  if (const int rc = apply_thread_env(); rc != 0) return rc;

  try {
    if (mk->parsed()) return cmd_make_dataset(flags.resolve(mk, config_path));
    if (tr->parsed()) return cmd_train(flags.resolve(tr, config_path), dry_run);
    if (so->parsed()) return cmd_solve(flags.resolve(so, config_path));
    if (vc->parsed()) return cmd_verify_convergence(flags.resolve(vc, config_path));
    if (vq->parsed()) return cmd_verify_equivalence(flags.resolve(vq, config_path));
    if (va->parsed()) return cmd_verify_architecture(flags.resolve(va, config_path));
    if (vf->parsed()) return cmd_verify_fixedpoint(flags.resolve(vf, config_path));
    if (ex->parsed()) return cmd_export_arch(flags.resolve(ex, config_path));
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
