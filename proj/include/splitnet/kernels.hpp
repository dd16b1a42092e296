#pragma once

// Hot loops of the solver: zero-padded "same" convolution banks, 2x2
// pooling, and stride-2 upsampling, each with its adjoint.
//
// Every kernel exists twice. `serial::` is a direct per-pixel reference
// written for readability; `parallel::` splits work over channels with
// OpenMP and streams whole rows. Both accumulate every output pixel in the
// same term order, so their results are bit-identical (the build disables
// floating-point contraction to keep it that way).

#include <span>

namespace splitnet::kernels {

enum class Exec { serial, parallel };

/// Layout of a channel-major, row-major stack of planes.
struct Planes {
  int channels = 1;
  int rows = 1;
  int cols = 1;

  int plane_size() const { return rows * cols; }
  int size() const { return channels * rows * cols; }
};

#define SPLITNET_KERNEL_DECLS                                                  \
  /* out[o] (+)= sum_s bank[o,s] (x) x[s]; cross-correlation, zero padding */  \
  void conv2d_same(std::span<const double> x, Planes xd,                      \
                   std::span<const double> bank, int out_channels, int ksize,  \
                   std::span<double> out, bool accumulate);                    \
  /* gx[s] += sum_o flipped(bank[o,s]) (x) gout[o] */                          \
  void conv2d_same_grad_input(std::span<const double> gout, Planes xd,         \
                              std::span<const double> bank, int out_channels,  \
                              int ksize, std::span<double> gx);                \
  /* gbank[o,s,a,b] += sum_p gout[o](p) x[s](p + (a,b) - r) */                 \
  void conv2d_same_grad_kernel(std::span<const double> gout,                   \
                               std::span<const double> x, Planes xd,           \
                               int out_channels, int ksize,                    \
                               std::span<double> gbank);                       \
  void avgpool2(std::span<const double> x, Planes xd, std::span<double> out);  \
  void avgpool2_grad(std::span<const double> gout, Planes xd,                  \
                     std::span<double> gx);                                    \
  /* argmax holds the fine-grid flat index of each coarse pixel's winner */    \
  void maxpool2(std::span<const double> x, Planes xd, std::span<double> out,   \
                std::span<int> argmax);                                        \
  void maxpool2_grad(std::span<const double> gout, std::span<const int> argmax,\
                     Planes coarse, std::span<double> gx);                     \
  /* coarse -> fine block replication */                                       \
  void upsample_nearest(std::span<const double> x, Planes coarse,              \
                        std::span<double> out);                                \
  void upsample_nearest_grad(std::span<const double> gout, Planes coarse,      \
                             std::span<double> gx);                            \
  /* stride-2 transposed conv, 2x2 kernel per channel (kernel_channels == */   \
  /* channels) or one kernel shared by all channels (kernel_channels == 1) */  \
  void transpose_conv2(std::span<const double> x, Planes coarse,               \
                       std::span<const double> kernel, int kernel_channels,    \
                       std::span<double> out);                                 \
  void transpose_conv2_grad_input(std::span<const double> gout, Planes coarse, \
                                  std::span<const double> kernel,              \
                                  int kernel_channels, std::span<double> gx);  \
  void transpose_conv2_grad_kernel(std::span<const double> gout,               \
                                   std::span<const double> x, Planes coarse,   \
                                   int kernel_channels,                        \
                                   std::span<double> gkernel);

namespace serial {
SPLITNET_KERNEL_DECLS
}  // namespace serial

namespace parallel {
SPLITNET_KERNEL_DECLS
}  // namespace parallel

#undef SPLITNET_KERNEL_DECLS

/// Function table for one execution flavor; lets call sites pick serial or
/// parallel at run time without branching per call.
struct KernelTable {
  decltype(&serial::conv2d_same) conv2d_same;
  decltype(&serial::conv2d_same_grad_input) conv2d_same_grad_input;
  decltype(&serial::conv2d_same_grad_kernel) conv2d_same_grad_kernel;
  decltype(&serial::avgpool2) avgpool2;
  decltype(&serial::avgpool2_grad) avgpool2_grad;
  decltype(&serial::maxpool2) maxpool2;
  decltype(&serial::maxpool2_grad) maxpool2_grad;
  decltype(&serial::upsample_nearest) upsample_nearest;
  decltype(&serial::upsample_nearest_grad) upsample_nearest_grad;
  decltype(&serial::transpose_conv2) transpose_conv2;
  decltype(&serial::transpose_conv2_grad_input) transpose_conv2_grad_input;
  decltype(&serial::transpose_conv2_grad_kernel) transpose_conv2_grad_kernel;
};

const KernelTable& table(Exec exec);

/// Process-wide choice used by the library's own call sites.
Exec default_exec();
void set_default_exec(Exec exec);
inline const KernelTable& active() { return table(default_exec()); }

/// Caps the OpenMP team size used by `parallel::` kernels; 0 restores the
/// runtime default.
void set_thread_limit(int threads);
int thread_limit();

}  // namespace splitnet::kernels
