#include "splitnet/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "splitnet/error.hpp"
#include "splitnet/kernels.hpp"

namespace splitnet {

namespace {

kernels::Planes planes_of(const Field& f) { return {f.channels, f.grid.rows, f.grid.cols}; }

// Index of f's level inside the pyramid after checking the grid matches.
int checked_level(const GridPyramid& pyr, const Field& f) {
  const int j = f.grid.level;
  if (j < 1 || j > pyr.depth())
    throw ValidationError("field level " + std::to_string(j) + " outside pyramid 1.." +
                          std::to_string(pyr.depth()));
  if (!(pyr.level(j) == f.grid))
    throw ValidationError("field grid does not match pyramid level " + std::to_string(j));
  if (f.values.size() != f.plane_size() * static_cast<std::size_t>(f.channels))
    throw ValidationError("field value count does not match its grid");
  return j;
}

void require_finite(const Field& f, const char* what) {
  if (!f.all_finite()) throw ValidationError(std::string(what) + ": input has non-finite values");
}

}  // namespace

Field::Field(GridSpec g, int c, double fill)
    : grid(g), channels(c), values(static_cast<std::size_t>(g.rows) * g.cols * c, fill) {
  if (c <= 0 || g.rows <= 0 || g.cols <= 0) throw ValidationError("field dimensions must be positive");
}

Field::Field(GridSpec g, int c, std::vector<double> v) : grid(g), channels(c), values(std::move(v)) {
  if (c <= 0 || g.rows <= 0 || g.cols <= 0) throw ValidationError("field dimensions must be positive");
  if (values.size() != static_cast<std::size_t>(g.rows) * g.cols * c)
    throw ValidationError("field value count does not match its grid");
}

bool Field::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double Field::min_value() const { return *std::min_element(values.begin(), values.end()); }
double Field::max_value() const { return *std::max_element(values.begin(), values.end()); }

Tensor Field::to_tensor() const { return Tensor({channels, grid.rows, grid.cols}, values); }

Field Field::from_tensor(GridSpec g, const Tensor& t) {
  if (t.rank() != 3 || t.dim(1) != g.rows || t.dim(2) != g.cols)
    throw ValidationError("tensor " + t.shape_string() + " does not fit the grid");
  return Field(g, t.dim(0), t.data);
}

std::string to_string(DownMode m) { return m == DownMode::average ? "average" : "max"; }
std::string to_string(UpMode m) { return m == UpMode::nearest ? "nearest" : "transpose_conv"; }

DownMode parse_down_mode(const std::string& s) {
  if (s == "average" || s == "avg") return DownMode::average;
  if (s == "max") return DownMode::max;
  throw ValidationError("unknown down mode '" + s + "' (expected average|max)");
}

UpMode parse_up_mode(const std::string& s) {
  if (s == "nearest") return UpMode::nearest;
  if (s == "transpose_conv") return UpMode::transpose_conv;
  throw ValidationError("unknown up mode '" + s + "' (expected nearest|transpose_conv)");
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

GridPyramid::GridPyramid(int rows, int cols, int depth, double fine_step, DownMode down, UpMode up)
    : down_(down), up_(up) {
  if (!is_power_of_two(rows) || !is_power_of_two(cols))
    throw ValidationError("image size " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " is not a power of two in each dimension");
  if (!(fine_step > 0.0)) throw ValidationError("grid step must be positive");
  s1_ = std::countr_zero(static_cast<unsigned>(rows));
  s2_ = std::countr_zero(static_cast<unsigned>(cols));
  if (depth < 1 || depth > std::min(s1_, s2_) + 1)
    throw ValidationError("pyramid depth " + std::to_string(depth) + " needs at most " +
                          std::to_string(std::min(s1_, s2_) + 1) + " levels for a " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " grid");
  for (int j = 1; j <= depth; ++j)
    levels_.push_back({j, rows >> (j - 1), cols >> (j - 1), std::ldexp(fine_step, j - 1)});
}

const GridSpec& GridPyramid::level(int j) const {
  if (j < 1 || j > depth()) throw ValidationError("level " + std::to_string(j) + " out of range");
  return levels_[static_cast<std::size_t>(j - 1)];
}

Field downsample_avg(const GridPyramid& pyr, const Field& f) {
  const int j = checked_level(pyr, f);
  if (j >= pyr.depth()) throw ValidationError("cannot downsample the coarsest level");
  require_finite(f, "downsample_avg");
  Field out(pyr.level(j + 1), f.channels);
  kernels::active().avgpool2(f.values, planes_of(f), out.values);
  return out;
}

Field downsample_max(const GridPyramid& pyr, const Field& f) {
  const int j = checked_level(pyr, f);
  if (j >= pyr.depth()) throw ValidationError("cannot downsample the coarsest level");
  require_finite(f, "downsample_max");
  Field out(pyr.level(j + 1), f.channels);
  std::vector<int> argmax(out.values.size());
  kernels::active().maxpool2(f.values, planes_of(f), out.values, argmax);
  return out;
}

Field downsample(const GridPyramid& pyr, const Field& f) {
  return pyr.down_mode() == DownMode::average ? downsample_avg(pyr, f) : downsample_max(pyr, f);
}

Field upsample_nearest(const GridPyramid& pyr, const Field& f) {
  const int j = checked_level(pyr, f);
  if (j <= 1) throw ValidationError("cannot upsample the finest level");
  Field out(pyr.level(j - 1), f.channels);
  kernels::active().upsample_nearest(f.values, planes_of(f), out.values);
  return out;
}

Field upsample_transpose_conv(const GridPyramid& pyr, const Field& f,
                              std::span<const double> kernel) {
  const int j = checked_level(pyr, f);
  if (j <= 1) throw ValidationError("cannot upsample the finest level");
  int kc = 0;
  if (kernel.size() == 4) kc = 1;
  else if (kernel.size() == 4 * static_cast<std::size_t>(f.channels)) kc = f.channels;
  else throw ValidationError("transpose-conv kernel must hold 4 or 4*channels values");
  if (!std::all_of(kernel.begin(), kernel.end(), [](double v) { return std::isfinite(v); }))
    throw ValidationError("transpose-conv kernel has non-finite values");
  Field out(pyr.level(j - 1), f.channels);
  kernels::active().transpose_conv2(f.values, planes_of(f), kernel, kc, out.values);
  return out;
}

Field discretize(const GridPyramid& pyr, const Field& fine, int level) {
  if (fine.grid.level != 1) throw ValidationError("discretize expects a level-1 array");
  checked_level(pyr, fine);
  require_finite(fine, "discretize");
  pyr.level(level);
  Field f = fine;
  for (int j = 1; j < level; ++j) f = downsample_avg(pyr, f);
  return f;
}

Field discretize(const GridPyramid& pyr, const std::function<double(double, double)>& u, int level,
                 int sub) {
  if (sub < 1) throw ValidationError("quadrature subdivision must be >= 1");
  const GridSpec& g1 = pyr.level(1);
  Field fine(g1, 1);
  const double h = g1.step;
  for (int a1 = 0; a1 < g1.rows; ++a1) {
    for (int a2 = 0; a2 < g1.cols; ++a2) {
      double sum = 0.0;
      for (int p = 0; p < sub; ++p)
        for (int q = 0; q < sub; ++q)
          sum += u((a1 + (p + 0.5) / sub) * h, (a2 + (q + 0.5) / sub) * h);
      fine.at(0, a1, a2) = sum / (sub * sub);
    }
  }
  return discretize(pyr, fine, level);
}

}  // namespace splitnet
