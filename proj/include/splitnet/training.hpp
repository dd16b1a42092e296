#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "splitnet/config_io.hpp"
#include "splitnet/controls.hpp"
#include "splitnet/field.hpp"
#include "splitnet/solver_config.hpp"

namespace splitnet {

struct Sample {
  Field image;  // 3 channels in [0, 1]
  Field mask;   // 1 channel in {0, 1}
};

// Losses on a prediction u in (0, 1) and a binary mask g.

/// Mean of -[g ln u + (1 - g) ln(1 - u)] with u clamped to [1e-12, 1 - 1e-12];
/// the number of clamped pixels is added to *clamped.
double logistic_loss(const Field& u, const Field& g, std::size_t* clamped = nullptr);
/// Mean of max{0, 1 - y (2u - 1)}, y = 2g - 1.
double hinge_loss(const Field& u, const Field& g);
/// |{u >= t} and {g = 1}| / |{u >= t} or {g = 1}|; 1 when both are empty.
double iou(const Field& u, const Field& g, double threshold = 0.5);

struct ShapesSpec {
  int size = 64;
  int min_shapes = 1;
  int max_shapes = 3;
  double noise_max = 0.2;  // per-image Gaussian sigma ~ U[0, noise_max]
};

/// Deterministic sample `index` of the stream selected by `seed`.
Sample generate_sample(const ShapesSpec& spec, std::uint64_t seed, std::uint64_t index);
/// Samples 0..count-1 of the stream. `levels` is the solver depth the
/// images must support; a size below 2^(levels-1) or not a power of two
/// throws ValidationError.
std::vector<Sample> generate_shapes(int count, const ShapesSpec& spec, std::uint64_t seed, int levels = 1);

/// images/NNNNN.png, masks/NNNNN.png and manifest.ini under `dir`.
void write_dataset(const std::string& dir, const std::vector<Sample>& samples, const ShapesSpec& spec,
                   std::uint64_t seed);
std::vector<Sample> read_dataset(const std::string& dir);

enum class LossKind { logistic, hinge };
std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct TrainConfig {
  LossKind loss = LossKind::logistic;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 1;       // shuffling
  std::uint64_t init_seed = 1;  // parameter initialisation
  double holdout = 0.2;         // fraction of a dataset kept for validation by the CLI

  std::vector<std::string> problems() const;
  void validate() const;
};

/// Reads a [train] section, appending every problem found.
TrainConfig train_config_from_ini(const Ini& section, std::vector<std::string>& problems);
Ini train_config_to_ini(const TrainConfig& tc);

struct EpochMetrics {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double iou = 0.0;
  double wall_time = 0.0;  // seconds since the run started
};

struct TrainResult {
  ControlVariables theta;
  std::vector<EpochMetrics> metrics;
  double initial_loss = 0.0;  // full training-set loss before the first update
  double final_loss = 0.0;    // full training-set loss after the last update
  int epochs_completed = 0;
  std::size_t clamped_pixels = 0;
};

struct EvalResult {
  double loss = 0.0;
  double iou = 0.0;
};

/// Mean loss and mean per-sample IoU of forward(f_i) against g_i.
EvalResult evaluate(const ControlVariables& theta, const SolverConfig& cfg, const std::vector<Sample>& data,
                    LossKind loss);

/// Adam on the control variables. Each tensor's step is divided by the
/// gamma dt factor multiplying it in the solver, which makes the update the
/// Adam step of the mapped network weights. Epochs are numbered from
/// start_epoch + 1. Every metrics record is also written to `log` as a JSON
/// line when non-null. Throws Error on a non-finite loss.
TrainResult train(const SolverConfig& cfg, const ControlVariables& theta_init, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& tc, std::ostream* log = nullptr,
                  int start_epoch = 0);

}  // namespace splitnet
