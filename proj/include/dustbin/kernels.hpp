#pragma once

#include <cstddef>
#include <vector>

#include "dustbin/array.hpp"

namespace dustbin {

enum class Padding { Same, Valid };

/// Resolved extents of a single-sample cross-correlation.
struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t filters, kernel_h, kernel_w;
  std::size_t stride;
  std::size_t out_h, out_w;
  std::size_t pad_top, pad_left;
};

ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, std::size_t stride, Padding padding);

// Forward kernels on plain arrays. The tape records the same functions, so
// taped and untaped evaluation agree bit for bit.

Array matmul(const Array& a, const Array& b);
Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array scale(const Array& a, double s);
/// [m x n] + [n] (row broadcast) or [n] + [n].
Array add_bias(const Array& a, const Array& bias);
/// [F x H x W] + [F].
Array add_channel_bias(const Array& a, const Array& bias);
Array relu(const Array& a);
Array tanh(const Array& a);
Array conv2d(const Array& input, const Array& kernels, std::size_t stride, Padding padding);
/// 2x2 max-pool, stride 2, floor. `argmax` receives the flat source index of each output.
Array maxpool2d(const Array& input, std::vector<std::size_t>* argmax = nullptr);
Array sum(const Array& a);
/// Softmax over the last axis of a rank-1 or rank-2 array, max-subtracted.
Array softmax(const Array& logits);
/// Rank-1 logits with one target, or rank-2 [B x K] logits with B targets
/// (mean over rows). Returns a scalar.
Array softmax_cross_entropy(const Array& logits, const std::vector<std::size_t>& targets);
Array softmax_cross_entropy(const Array& logits, std::size_t target);

/// Column matrix of receptive fields, [C*kh*kw x out_h*out_w].
Eigen::MatrixXd im2col(const Array& input, const ConvGeometry& g);
/// Adjoint of im2col: scatter-add columns back into a C x H x W array.
Array col2im(const Eigen::MatrixXd& cols, const ConvGeometry& g);

}  // namespace dustbin
