#include "splitnet/kernels.hpp"

#include <cstddef>

namespace splitnet::kernels::serial {

namespace {

inline bool inside(int y, int x, const Planes& d) {
  return y >= 0 && y < d.rows && x >= 0 && x < d.cols;
}

inline std::size_t at(const Planes& d, int c, int y, int x) {
  return (static_cast<std::size_t>(c) * d.rows + y) * d.cols + x;
}

inline std::size_t bank_at(int in_channels, int k, int o, int s, int a, int b) {
  return ((static_cast<std::size_t>(o) * in_channels + s) * k + a) * k + b;
}

}  // namespace

void conv2d_same(std::span<const double> x, Planes xd, std::span<const double> bank,
                 int out_channels, int ksize, std::span<double> out, bool accumulate) {
  const int r = ksize / 2;
  const Planes od{out_channels, xd.rows, xd.cols};
  for (int o = 0; o < out_channels; ++o) {
    for (int y = 0; y < xd.rows; ++y) {
      for (int xx = 0; xx < xd.cols; ++xx) {
        double sum = 0.0;
        for (int s = 0; s < xd.channels; ++s) {
          for (int a = 0; a < ksize; ++a) {
            for (int b = 0; b < ksize; ++b) {
              const int sy = y + a - r;
              const int sx = xx + b - r;
              if (!inside(sy, sx, xd)) continue;
              sum += bank[bank_at(xd.channels, ksize, o, s, a, b)] * x[at(xd, s, sy, sx)];
            }
          }
        }
        double& dst = out[at(od, o, y, xx)];
        dst = accumulate ? dst + sum : sum;
      }
    }
  }
}

void conv2d_same_grad_input(std::span<const double> gout, Planes xd,
                            std::span<const double> bank, int out_channels, int ksize,
                            std::span<double> gx) {
  const int r = ksize / 2;
  const Planes od{out_channels, xd.rows, xd.cols};
  for (int s = 0; s < xd.channels; ++s) {
    for (int y = 0; y < xd.rows; ++y) {
      for (int xx = 0; xx < xd.cols; ++xx) {
        double sum = 0.0;
        for (int o = 0; o < out_channels; ++o) {
          for (int a = 0; a < ksize; ++a) {
            for (int b = 0; b < ksize; ++b) {
              const int ty = y - (a - r);
              const int tx = xx - (b - r);
              if (!inside(ty, tx, od)) continue;
              sum += bank[bank_at(xd.channels, ksize, o, s, a, b)] * gout[at(od, o, ty, tx)];
            }
          }
        }
        gx[at(xd, s, y, xx)] += sum;
      }
    }
  }
}

void conv2d_same_grad_kernel(std::span<const double> gout, std::span<const double> x,
                             Planes xd, int out_channels, int ksize,
                             std::span<double> gbank) {
  const int r = ksize / 2;
  const Planes od{out_channels, xd.rows, xd.cols};
  for (int o = 0; o < out_channels; ++o) {
    for (int s = 0; s < xd.channels; ++s) {
      for (int a = 0; a < ksize; ++a) {
        for (int b = 0; b < ksize; ++b) {
          double sum = 0.0;
          for (int y = 0; y < xd.rows; ++y) {
            for (int xx = 0; xx < xd.cols; ++xx) {
              const int sy = y + a - r;
              const int sx = xx + b - r;
              if (!inside(sy, sx, xd)) continue;
              sum += gout[at(od, o, y, xx)] * x[at(xd, s, sy, sx)];
            }
          }
          gbank[bank_at(xd.channels, ksize, o, s, a, b)] += sum;
        }
      }
    }
  }
}

void avgpool2(std::span<const double> x, Planes xd, std::span<double> out) {
  const Planes cd{xd.channels, xd.rows / 2, xd.cols / 2};
  for (int c = 0; c < cd.channels; ++c)
    for (int i = 0; i < cd.rows; ++i)
      for (int j = 0; j < cd.cols; ++j)
        out[at(cd, c, i, j)] = 0.25 * (x[at(xd, c, 2 * i, 2 * j)] + x[at(xd, c, 2 * i, 2 * j + 1)] +
                                       x[at(xd, c, 2 * i + 1, 2 * j)] +
                                       x[at(xd, c, 2 * i + 1, 2 * j + 1)]);
}

void avgpool2_grad(std::span<const double> gout, Planes xd, std::span<double> gx) {
  const Planes cd{xd.channels, xd.rows / 2, xd.cols / 2};
  for (int c = 0; c < xd.channels; ++c)
    for (int y = 0; y < xd.rows; ++y)
      for (int xx = 0; xx < xd.cols; ++xx) gx[at(xd, c, y, xx)] += 0.25 * gout[at(cd, c, y / 2, xx / 2)];
}

void maxpool2(std::span<const double> x, Planes xd, std::span<double> out,
              std::span<int> argmax) {
  const Planes cd{xd.channels, xd.rows / 2, xd.cols / 2};
  for (int c = 0; c < cd.channels; ++c) {
    for (int i = 0; i < cd.rows; ++i) {
      for (int j = 0; j < cd.cols; ++j) {
        std::size_t best = at(xd, c, 2 * i, 2 * j);
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            const std::size_t idx = at(xd, c, 2 * i + a, 2 * j + b);
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[at(cd, c, i, j)] = x[best];
        argmax[at(cd, c, i, j)] = static_cast<int>(best);
      }
    }
  }
}

void maxpool2_grad(std::span<const double> gout, std::span<const int> argmax, Planes coarse,
                   std::span<double> gx) {
  for (int q = 0; q < coarse.size(); ++q) gx[static_cast<std::size_t>(argmax[q])] += gout[q];
}

void upsample_nearest(std::span<const double> x, Planes coarse, std::span<double> out) {
  const Planes fd{coarse.channels, coarse.rows * 2, coarse.cols * 2};
  for (int c = 0; c < fd.channels; ++c)
    for (int y = 0; y < fd.rows; ++y)
      for (int xx = 0; xx < fd.cols; ++xx) out[at(fd, c, y, xx)] = x[at(coarse, c, y / 2, xx / 2)];
}

void upsample_nearest_grad(std::span<const double> gout, Planes coarse, std::span<double> gx) {
  const Planes fd{coarse.channels, coarse.rows * 2, coarse.cols * 2};
  for (int c = 0; c < coarse.channels; ++c)
    for (int i = 0; i < coarse.rows; ++i)
      for (int j = 0; j < coarse.cols; ++j) {
        double sum = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) sum += gout[at(fd, c, 2 * i + a, 2 * j + b)];
        gx[at(coarse, c, i, j)] += sum;
      }
}

void transpose_conv2(std::span<const double> x, Planes coarse, std::span<const double> kernel,
                     int kernel_channels, std::span<double> out) {
  const Planes fd{coarse.channels, coarse.rows * 2, coarse.cols * 2};
  for (int c = 0; c < coarse.channels; ++c) {
    const int kc = kernel_channels == 1 ? 0 : c;
    for (int y = 0; y < fd.rows; ++y)
      for (int xx = 0; xx < fd.cols; ++xx)
        out[at(fd, c, y, xx)] = x[at(coarse, c, y / 2, xx / 2)] * kernel[static_cast<std::size_t>(kc) * 4 + (y % 2) * 2 + (xx % 2)];
  }
}

void transpose_conv2_grad_input(std::span<const double> gout, Planes coarse,
                                std::span<const double> kernel, int kernel_channels,
                                std::span<double> gx) {
  const Planes fd{coarse.channels, coarse.rows * 2, coarse.cols * 2};
  for (int c = 0; c < coarse.channels; ++c) {
    const int kc = kernel_channels == 1 ? 0 : c;
    for (int i = 0; i < coarse.rows; ++i)
      for (int j = 0; j < coarse.cols; ++j) {
        double sum = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            sum += gout[at(fd, c, 2 * i + a, 2 * j + b)] * kernel[static_cast<std::size_t>(kc) * 4 + a * 2 + b];
        gx[at(coarse, c, i, j)] += sum;
      }
  }
}

void transpose_conv2_grad_kernel(std::span<const double> gout, std::span<const double> x,
                                 Planes coarse, int kernel_channels, std::span<double> gkernel) {
  const Planes fd{coarse.channels, coarse.rows * 2, coarse.cols * 2};
  for (int kc = 0; kc < kernel_channels; ++kc) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        double sum = 0.0;
        const int c_begin = kernel_channels == 1 ? 0 : kc;
        const int c_end = kernel_channels == 1 ? coarse.channels : kc + 1;
        for (int c = c_begin; c < c_end; ++c)
          for (int i = 0; i < coarse.rows; ++i)
            for (int j = 0; j < coarse.cols; ++j)
              sum += gout[at(fd, c, 2 * i + a, 2 * j + b)] * x[at(coarse, c, i, j)];
        gkernel[static_cast<std::size_t>(kc) * 4 + a * 2 + b] += sum;
      }
    }
  }
}

}  // namespace splitnet::kernels::serial
