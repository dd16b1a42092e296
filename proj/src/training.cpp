#include "splitnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "splitnet/autodiff.hpp"
#include "splitnet/error.hpp"
#include "splitnet/model.hpp"

namespace splitnet {

namespace fs = std::filesystem;

namespace {

void require_pair(const Field& u, const Field& g, const char* what) {
  if (u.channels != 1 || g.channels != 1 || u.values.size() != g.values.size() || u.grid.rows != g.grid.rows ||
      u.grid.cols != g.grid.cols)
    throw ValidationError(std::string(what) + ": prediction and mask must be single-channel fields of equal size");
}

}  // namespace

double logistic_loss(const Field& u, const Field& g, std::size_t* clamped) {
  require_pair(u, g, "logistic_loss");
  ad::Tape t;
  return ad::bce_loss(t.constant(u.to_tensor()), g.to_tensor(), 1e-12, clamped).value().data[0];
}

double hinge_loss(const Field& u, const Field& g) {
  require_pair(u, g, "hinge_loss");
  ad::Tape t;
  return ad::hinge_loss(t.constant(u.to_tensor()), g.to_tensor()).value().data[0];
}

double iou(const Field& u, const Field& g, double threshold) {
  require_pair(u, g, "iou");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    const bool p = u.values[i] >= threshold;
    const bool m = g.values[i] >= 0.5;
    inter += p && m;
    uni += p || m;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Synthetic shapes ---------------------------------------------------------

namespace {

struct Shape {
  bool ellipse;
  double cx, cy, a, b, angle;
  double colour[3];

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    if (!ellipse) return std::abs(dx) <= a && std::abs(dy) <= b;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double u = (c * dx + s * dy) / a;
    const double v = (-s * dx + c * dy) / b;
    return u * u + v * v <= 1.0;
  }
};

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

Sample generate_sample(const ShapesSpec& spec, std::uint64_t seed, std::uint64_t index) {
  if (!is_power_of_two(spec.size)) throw ValidationError("image size must be a power of two");
  if (spec.min_shapes < 1 || spec.max_shapes < spec.min_shapes) throw ValidationError("bad shape count range");
  auto rng = sample_rng(seed, index);
  auto U = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const int n = spec.size;
  const GridSpec grid{1, n, n, 1.0};

  double base[3];
  for (double& c : base) c = U(0.15, 0.45);
  const double fx = U(0.05, 0.3);
  const double fy = U(0.05, 0.3);
  const double px = U(0.0, 2.0 * std::numbers::pi);
  const double py = U(0.0, 2.0 * std::numbers::pi);
  const double texture = U(0.03, 0.08);

  const int count = std::uniform_int_distribution<int>(spec.min_shapes, spec.max_shapes)(rng);
  std::vector<Shape> shapes;
  Field mask(grid, 1);
  for (int s = 0; s < count; ++s) {
    Shape sh{};
    sh.ellipse = U(0.0, 1.0) < 0.5;
    sh.cx = U(0.25, 0.75) * n;
    sh.cy = U(0.25, 0.75) * n;
    if (sh.ellipse) {
      sh.a = U(0.14, 0.24) * n;
      sh.b = U(0.14, 0.24) * n;
      sh.angle = U(0.0, std::numbers::pi);
    } else {
      sh.a = U(0.12, 0.2) * n;
      sh.b = U(0.12, 0.2) * n;
    }
    for (int c = 0; c < 3; ++c) sh.colour[c] = std::min(1.0, base[c] + U(0.3, 0.5));
    Field trial = mask;
    std::size_t on = 0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        if (sh.contains(c + 0.5, r + 0.5)) trial.at(0, r, c) = 1.0;
        on += trial.at(0, r, c) > 0.5;
      }
    if (s > 0 && static_cast<double>(on) > 0.55 * n * n) break;
    mask = std::move(trial);
    shapes.push_back(sh);
  }

  Field image(grid, 3);
  const double sigma = U(0.0, spec.noise_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double tex = texture * std::sin(fx * c + px) * std::sin(fy * r + py);
      const Shape* top = nullptr;
      for (const Shape& sh : shapes)
        if (sh.contains(c + 0.5, r + 0.5)) top = &sh;
      for (int k = 0; k < 3; ++k) {
        const double clean = (top ? top->colour[k] : base[k]) + tex;
        image.at(k, r, c) = std::clamp(clean + sigma * noise(rng), 0.0, 1.0);
      }
    }
  return Sample{std::move(image), std::move(mask)};
}

std::vector<Sample> generate_shapes(int count, const ShapesSpec& spec, std::uint64_t seed, int levels) {
  if (count < 0) throw ValidationError("sample count must be non-negative");
  if (!is_power_of_two(spec.size)) throw ValidationError("image size " + std::to_string(spec.size) + " is not a power of two");
  if (levels < 1 || spec.size < (1 << (levels - 1)))
    throw ValidationError("image size " + std::to_string(spec.size) + " is too small for " + std::to_string(levels) +
                          " grid levels");
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_sample(spec, seed, static_cast<std::uint64_t>(i)));
  return out;
}

namespace {

std::string sample_stem(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", i);
  return buf;
}

}  // namespace

void write_dataset(const std::string& dir, const std::vector<Sample>& samples, const ShapesSpec& spec,
                   std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (!ec) fs::create_directories(fs::path(dir) / "masks", ec);
  if (ec) throw IoError("cannot create dataset directories under " + dir + ": " + ec.message());
  Ini manifest;
  Ini head;
  auto put = [](Ini& s, const char* k, const std::string& v) { s.push_back({k, Ini(v)}); };
  put(head, "format_version", "1");
  put(head, "generator", "shapes");
  put(head, "count", std::to_string(samples.size()));
  put(head, "size", std::to_string(spec.size));
  put(head, "seed", std::to_string(seed));
  put(head, "min_shapes", std::to_string(spec.min_shapes));
  put(head, "max_shapes", std::to_string(spec.max_shapes));
  put(head, "noise_max", format_double(spec.noise_max));
  manifest.push_back({"dataset", head});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = sample_stem(static_cast<int>(i));
    const std::string img = "images/" + stem + ".png";
    const std::string msk = "masks/" + stem + ".png";
    write_png((fs::path(dir) / img).string(), samples[i].image);
    write_png((fs::path(dir) / msk).string(), samples[i].mask);
    Ini sec;
    put(sec, "image", img);
    put(sec, "mask", msk);
    put(sec, "rows", std::to_string(samples[i].image.grid.rows));
    put(sec, "cols", std::to_string(samples[i].image.grid.cols));
    put(sec, "index", std::to_string(i));
    manifest.push_back({"sample." + std::to_string(i), sec});
  }
  write_ini((fs::path(dir) / "manifest.ini").string(), manifest);
}

std::vector<Sample> read_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir + " does not exist");
  const std::string manifest_path = (fs::path(dir) / "manifest.ini").string();
  if (!fs::exists(manifest_path)) throw IoError("dataset manifest " + manifest_path + " does not exist");
  const Ini manifest = read_ini(manifest_path);
  const auto version = ini_section(manifest, "dataset").get_optional<int>("format_version");
  if (!version) throw IoError(manifest_path + " lacks dataset.format_version");
  if (*version != 1) throw UnsupportedVersion("dataset format version " + std::to_string(*version) + " is not supported");
  std::vector<Sample> out;
  for (const auto& [name, sec] : manifest) {
    if (name.rfind("sample.", 0) != 0) continue;
    const auto img = sec.get_optional<std::string>("image");
    const auto msk = sec.get_optional<std::string>("mask");
    if (!img || !msk) throw IoError(manifest_path + ": [" + name + "] lacks image or mask");
    Field image = read_image((fs::path(dir) / *img).string());
    Field mask = read_image((fs::path(dir) / *msk).string());
    if (image.channels != 1 && image.channels != 3)
      throw ValidationError(*img + " has " + std::to_string(image.channels) + " channels");
    if (mask.channels == 3) mask = Field(mask.grid, 1, std::vector<double>(mask.channel(0).begin(), mask.channel(0).end()));
    if (mask.grid.rows != image.grid.rows || mask.grid.cols != image.grid.cols)
      throw ValidationError(*msk + " does not match the size of " + *img);
    for (double& v : mask.values) {
      if (v != 0.0 && v != 1.0) throw ValidationError(*msk + " is not a binary mask");
    }
    Field rgb = image.channels == 1 ? as_rgb(image) : image;
    out.push_back(Sample{std::move(rgb), std::move(mask)});
  }
  return out;
}

// Training -----------------------------------------------------------------

std::string to_string(LossKind k) { return k == LossKind::logistic ? "logistic" : "hinge"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "logistic") return LossKind::logistic;
  if (s == "hinge") return LossKind::hinge;
  throw ValidationError("unknown loss '" + s + "' (expected logistic|hinge)");
}

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) out.push_back("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) out.push_back("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) out.push_back("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) out.push_back("epsilon must be positive");
  if (epochs < 0) out.push_back("epochs must be >= 0");
  if (batch_size < 1) out.push_back("batch_size must be >= 1");
  if (!(holdout >= 0.0 && holdout < 1.0)) out.push_back("holdout must lie in [0, 1)");
  return out;
}

void TrainConfig::validate() const {
  const auto list = problems();
  if (list.empty()) return;
  std::ostringstream os;
  os << "invalid training configuration:";
  for (const auto& p : list) os << "\n  - " << p;
  throw ValidationError(os.str());
}

TrainConfig train_config_from_ini(const Ini& section, std::vector<std::string>& problems) {
  TrainConfig tc;
  const std::size_t before = problems.size();
  auto number = [&](const char* key, auto& dst) {
    const auto v = section.get_optional<std::string>(key);
    if (!v) return;
    using T = std::remove_reference_t<decltype(dst)>;
    const auto parsed = section.get_optional<T>(key);
    if (!parsed) {
      problems.push_back(std::string("train.") + key + " = '" + *v + "' is not a valid number");
    } else {
      dst = *parsed;
    }
  };
  static const char* known[] = {"loss", "learning_rate", "beta1", "beta2", "epsilon", "epochs",
                                "batch_size", "seed", "init_seed", "holdout"};
  for (const auto& [key, child] : section)
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
      problems.push_back("unknown key train." + key);
  if (const auto v = section.get_optional<std::string>("loss")) {
    try {
      tc.loss = parse_loss_kind(*v);
    } catch (const ValidationError& e) {
      problems.push_back(std::string("train.loss: ") + e.what());
    }
  }
  number("learning_rate", tc.learning_rate);
  number("beta1", tc.beta1);
  number("beta2", tc.beta2);
  number("epsilon", tc.epsilon);
  number("epochs", tc.epochs);
  number("batch_size", tc.batch_size);
  number("seed", tc.seed);
  number("init_seed", tc.init_seed);
  number("holdout", tc.holdout);
  if (problems.size() == before)
    for (auto& p : tc.problems()) problems.push_back("train: " + p);
  return tc;
}

Ini train_config_to_ini(const TrainConfig& tc) {
  Ini s;
  auto put = [&](const char* k, const std::string& v) { s.push_back({k, Ini(v)}); };
  put("loss", to_string(tc.loss));
  put("learning_rate", format_double(tc.learning_rate));
  put("beta1", format_double(tc.beta1));
  put("beta2", format_double(tc.beta2));
  put("epsilon", format_double(tc.epsilon));
  put("epochs", std::to_string(tc.epochs));
  put("batch_size", std::to_string(tc.batch_size));
  put("seed", std::to_string(tc.seed));
  put("init_seed", std::to_string(tc.init_seed));
  put("holdout", format_double(tc.holdout));
  return s;
}

namespace {

struct SampleOutcome {
  double loss = 0.0;
  double iou = 0.0;
  std::size_t clamped = 0;
  std::vector<Tensor> grads;  // for_each_tensor order; empty when not requested
};

ad::Var loss_node(ad::Var u, const Field& mask, LossKind kind, std::size_t* clamped) {
  return kind == LossKind::logistic ? ad::bce_loss(u, mask.to_tensor(), 1e-12, clamped)
                                    : ad::hinge_loss(u, mask.to_tensor());
}

SampleOutcome run_sample(const ControlVariables& theta, const SolverConfig& cfg, const Sample& s, LossKind kind,
                         bool with_grad) {
  ad::Tape t;
  const tape::ModelVars vars = tape::bind(t, theta, with_grad);
  const ad::Var u = tape::forward(t.constant(s.image.to_tensor()), vars, cfg);
  SampleOutcome out;
  const ad::Var loss = loss_node(u, s.mask, kind, &out.clamped);
  out.loss = loss.value().data[0];
  out.iou = iou(Field::from_tensor(s.mask.grid, u.value()), s.mask);
  if (!with_grad || !std::isfinite(out.loss)) return out;
  t.backward(loss);
  tape::for_each_var(vars, [&](const ad::Var& v) {
    const Tensor* g = v.grad();
    out.grads.push_back(g ? *g : Tensor(v.value().shape));
  });
  return out;
}

// Runs fn(i) for i in [0, n), concurrently when OpenMP is available, and
// rethrows the first failure in index order.
template <class Fn>
void for_samples(std::size_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double parameter_norm(const ControlVariables& theta, const SolverConfig& cfg) {
  double s = 0.0;
  for_each_tensor(theta, cfg, [&](const TensorInfo&, const Tensor& t) {
    for (double v : t.data) s += v * v;
  });
  return std::sqrt(s);
}

void emit(std::ostream* log, const EpochMetrics& m) {
  if (!log) return;
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["split"] = m.split;
  j["loss"] = m.loss;
  j["iou"] = m.iou;
  j["wall_time"] = m.wall_time;
  *log << j.dump() << '\n';
  log->flush();
}

}  // namespace

EvalResult evaluate(const ControlVariables& theta, const SolverConfig& cfg, const std::vector<Sample>& data,
                    LossKind loss) {
  EvalResult r;
  if (data.empty()) return r;
  std::vector<SampleOutcome> outs(data.size());
  for_samples(data.size(), [&](std::size_t i) { outs[i] = run_sample(theta, cfg, data[i], loss, false); });
  for (const auto& o : outs) {
    r.loss += o.loss;
    r.iou += o.iou;
  }
  r.loss /= static_cast<double>(data.size());
  r.iou /= static_cast<double>(data.size());
  return r;
}

TrainResult train(const SolverConfig& cfg, const ControlVariables& theta_init, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& tc, std::ostream* log, int start_epoch) {
  cfg.validate();
  tc.validate();
  theta_init.validate(cfg);
  if (train_set.empty()) throw ValidationError("training needs at least one sample");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  TrainResult res;
  res.theta = theta_init;
  res.epochs_completed = start_epoch;

  std::vector<double> step_scale;
  for_each_tensor(res.theta, cfg, [&](const TensorInfo& info, const Tensor&) { step_scale.push_back(1.0 / info.gamma_dt); });
  std::vector<Tensor> m1, m2;
  for_each_tensor(res.theta, cfg, [&](const TensorInfo&, const Tensor& t) {
    m1.emplace_back(t.shape);
    m2.emplace_back(t.shape);
  });

  const EvalResult init = evaluate(res.theta, cfg, train_set, tc.loss);
  res.initial_loss = init.loss;
  res.final_loss = init.loss;
  auto record = [&](const EpochMetrics& m) {
    res.metrics.push_back(m);
    emit(log, m);
  };
  record({start_epoch, "train", init.loss, init.iou, elapsed()});
  if (!val_set.empty()) {
    const EvalResult v = evaluate(res.theta, cfg, val_set, tc.loss);
    record({start_epoch, "val", v.loss, v.iou, elapsed()});
  }
  if (tc.epochs == 0) return res;

  std::vector<std::size_t> order(train_set.size());
  long long step = 0;
  for (int e = 1; e <= tc.epochs; ++e) {
    const int epoch = start_epoch + e;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(tc.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    double iou_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(tc.batch_size));
      std::vector<SampleOutcome> outs(b1 - b0);
      for_samples(outs.size(), [&](std::size_t i) {
        outs[i] = run_sample(res.theta, cfg, train_set[order[b0 + i]], tc.loss, true);
      });
      for (std::size_t i = 0; i < outs.size(); ++i) {
        if (!std::isfinite(outs[i].loss)) {
          std::ostringstream os;
          os << "non-finite loss at epoch " << epoch << ", iteration " << step + 1 << " (sample "
             << order[b0 + i] << "); parameter norm " << parameter_norm(res.theta, cfg);
          throw Error(os.str());
        }
        loss_sum += outs[i].loss;
        iou_sum += outs[i].iou;
        res.clamped_pixels += outs[i].clamped;
      }

      ++step;
      const double inv_b = 1.0 / static_cast<double>(outs.size());
      const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
      std::size_t k = 0;
      for_each_tensor(res.theta, cfg, [&](const TensorInfo&, Tensor& p) {
        Tensor& a = m1[k];
        Tensor& v = m2[k];
        const double lr = tc.learning_rate * step_scale[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
          double g = 0.0;
          for (const auto& o : outs) g += o.grads[k].data[i];
          g *= inv_b;
          a.data[i] = tc.beta1 * a.data[i] + (1.0 - tc.beta1) * g;
          v.data[i] = tc.beta2 * v.data[i] + (1.0 - tc.beta2) * g * g;
          const double mhat = a.data[i] / bc1;
          const double vhat = v.data[i] / bc2;
          p.data[i] -= lr * mhat / (std::sqrt(vhat) + tc.epsilon);
        }
        ++k;
      });
    }
    res.epochs_completed = epoch;
    const double n = static_cast<double>(order.size());
    record({epoch, "train", loss_sum / n, iou_sum / n, elapsed()});
    if (!val_set.empty()) {
      const EvalResult v = evaluate(res.theta, cfg, val_set, tc.loss);
      record({epoch, "val", v.loss, v.iou, elapsed()});
    }
  }
  res.final_loss = evaluate(res.theta, cfg, train_set, tc.loss).loss;
  return res;
}

}  // namespace splitnet
