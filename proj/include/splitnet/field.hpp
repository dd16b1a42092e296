#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "splitnet/tensor.hpp"

namespace splitnet {

/// One level T^j of the dyadic grid hierarchy.
struct GridSpec {
  int level = 1;     // j, 1 = finest
  int rows = 1;      // m_j
  int cols = 1;      // n_j
  double step = 1.0; // h_j = 2^{j-1} h

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Piecewise-constant grid function with one or more channels.
///
/// Values are channel-major, row-major inside a channel; pixel (a1, a2) of
/// channel c lives at `(c * rows + a1) * cols + a2`.
struct Field {
  GridSpec grid;
  int channels = 1;
  std::vector<double> values;

  Field() = default;
  Field(GridSpec g, int channels, double fill = 0.0);
  Field(GridSpec g, int channels, std::vector<double> v);

  std::size_t plane_size() const { return static_cast<std::size_t>(grid.rows) * grid.cols; }
  double& at(int c, int r, int col) { return values[(static_cast<std::size_t>(c) * grid.rows + r) * grid.cols + col]; }
  double at(int c, int r, int col) const { return values[(static_cast<std::size_t>(c) * grid.rows + r) * grid.cols + col]; }

  std::span<double> channel(int c) { return std::span<double>(values).subspan(c * plane_size(), plane_size()); }
  std::span<const double> channel(int c) const { return std::span<const double>(values).subspan(c * plane_size(), plane_size()); }

  bool all_finite() const;
  double min_value() const;
  double max_value() const;

  Tensor to_tensor() const;
  static Field from_tensor(GridSpec g, const Tensor& t);
};

enum class DownMode { average, max };
enum class UpMode { nearest, transpose_conv };

std::string to_string(DownMode m);
std::string to_string(UpMode m);
DownMode parse_down_mode(const std::string& s);
UpMode parse_up_mode(const std::string& s);

/// The nested grids T^1 > T^2 > ... > T^J for an image of 2^s1 x 2^s2 pixels.
class GridPyramid {
 public:
  /// Throws ValidationError when rows/cols are not powers of two or when the
  /// coarsest grid would have less than one pixel per side.
  GridPyramid(int rows, int cols, int depth, double fine_step = 1.0,
              DownMode down = DownMode::average, UpMode up = UpMode::nearest);

  int depth() const { return static_cast<int>(levels_.size()); }
  const GridSpec& level(int j) const;  // 1-based
  const std::vector<GridSpec>& levels() const { return levels_; }
  DownMode down_mode() const { return down_; }
  UpMode up_mode() const { return up_; }
  int s1() const { return s1_; }
  int s2() const { return s2_; }

 private:
  std::vector<GridSpec> levels_;
  DownMode down_;
  UpMode up_;
  int s1_ = 0;
  int s2_ = 0;
};

bool is_power_of_two(int v);

/// Mean of each 2x2 block, per channel.
Field downsample_avg(const GridPyramid& pyr, const Field& f);
/// Max of each 2x2 block; ties keep the first element in row-major order.
Field downsample_max(const GridPyramid& pyr, const Field& f);
/// Dispatches on the pyramid's down mode.
Field downsample(const GridPyramid& pyr, const Field& f);

/// Piecewise-constant embedding V^{j+1} -> V^j.
Field upsample_nearest(const GridPyramid& pyr, const Field& f);
/// Stride-2 transposed convolution with a 2x2 kernel per channel.
/// `kernel` holds either 4 values (shared) or 4 * channels values.
Field upsample_transpose_conv(const GridPyramid& pyr, const Field& f,
                              std::span<const double> kernel);

/// Coefficients of a fine-grid array on level j: the mean over each patch.
Field discretize(const GridPyramid& pyr, const Field& fine, int level);
/// Scaled inner product of a continuous function u(x, y) with every basis
/// function of level j, evaluated with a `sub` x `sub` midpoint rule per
/// fine pixel.
Field discretize(const GridPyramid& pyr, const std::function<double(double, double)>& u,
                 int level, int sub = 4);

// Binary field blob: "SPLF", u16 version, u32 level, channels, rows, cols,
// then little-endian f64 values in storage order. Level 0 marks a parameter
// tensor that is not attached to a grid.
inline constexpr std::uint16_t kFieldFormatVersion = 1;

std::vector<unsigned char> encode_field(const Field& f);
Field decode_field(std::span<const unsigned char> bytes);
void write_field(const std::string& path, const Field& f);
Field read_field(const std::string& path);

/// Reads PNG, PGM (P2/P5) or PPM (P3/P6) at level 1; 8-bit samples map to
/// [0, 1] by /255. Gray images give one channel, colour images three.
Field read_image(const std::string& path);
/// Writes channel 0 (1 channel) or channels 0..2 (3 channels) as 8-bit PNG,
/// clamping to [0, 1].
void write_png(const std::string& path, const Field& f);

}  // namespace splitnet
