#include "dustbin/kernels.hpp"

#include <cmath>
#include <limits>

namespace dustbin {

namespace {

void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, std::size_t stride, Padding padding) {
  if (input.size() != 3 || kernels.size() != 4) {
    throw DimensionError("conv2d expects C x H x W input and F x C x kh x kw kernels, got " +
                         shape_string(input) + " and " + shape_string(kernels));
  }
  if (stride == 0) throw DimensionError("conv2d stride must be positive");
  if (input[0] != kernels[1]) {
    throw DimensionError("conv2d channel mismatch: input " + shape_string(input) + ", kernels " +
                         shape_string(kernels));
  }
  ConvGeometry g{};
  g.channels = input[0];
  g.height = input[1];
  g.width = input[2];
  g.filters = kernels[0];
  g.kernel_h = kernels[2];
  g.kernel_w = kernels[3];
  g.stride = stride;
  if (padding == Padding::Valid) {
    if (g.kernel_h > g.height || g.kernel_w > g.width) {
      throw DimensionError("conv2d kernel " + shape_string(kernels) + " larger than input " + shape_string(input));
    }
    g.out_h = (g.height - g.kernel_h) / stride + 1;
    g.out_w = (g.width - g.kernel_w) / stride + 1;
    g.pad_top = g.pad_left = 0;
  } else {
    g.out_h = (g.height + stride - 1) / stride;
    g.out_w = (g.width + stride - 1) / stride;
    const std::size_t need_h = (g.out_h - 1) * stride + g.kernel_h;
    const std::size_t need_w = (g.out_w - 1) * stride + g.kernel_w;
    g.pad_top = need_h > g.height ? (need_h - g.height) / 2 : 0;
    g.pad_left = need_w > g.width ? (need_w - g.width) / 2 : 0;
  }
  return g;
}

Array matmul(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  }
  Array out({a.extent(0), b.extent(1)});
  out.matrix().noalias() = a.matrix() * b.matrix();
  return out;
}

Array add(const Array& a, const Array& b) {
  require_same_shape(a, b, "add");
  return Array(a.shape(), a.values() + b.values());
}

Array sub(const Array& a, const Array& b) {
  require_same_shape(a, b, "sub");
  return Array(a.shape(), a.values() - b.values());
}

Array mul(const Array& a, const Array& b) {
  require_same_shape(a, b, "mul");
  return Array(a.shape(), a.values().cwiseProduct(b.values()));
}

Array scale(const Array& a, double s) { return Array(a.shape(), a.values() * s); }

Array add_bias(const Array& a, const Array& bias) {
  if (a.rank() == 1) return add(a, bias);
  if (a.rank() != 2 || bias.rank() != 1 || bias.extent(0) != a.extent(1)) {
    throw DimensionError("add_bias: " + shape_string(a.shape()) + " + " + shape_string(bias.shape()));
  }
  Array out = a;
  out.matrix().rowwise() += bias.values().transpose();
  return out;
}

Array add_channel_bias(const Array& a, const Array& bias) {
  if (a.rank() != 3 || bias.rank() != 1 || bias.extent(0) != a.extent(0)) {
    throw DimensionError("add_channel_bias: " + shape_string(a.shape()) + " + " + shape_string(bias.shape()));
  }
  Array out = a;
  const std::size_t plane = a.extent(1) * a.extent(2);
  for (std::size_t f = 0; f < a.extent(0); ++f) {
    out.values().segment(static_cast<Eigen::Index>(f * plane), static_cast<Eigen::Index>(plane)).array() += bias[f];
  }
  return out;
}

Array relu(const Array& a) { return Array(a.shape(), a.values().cwiseMax(0.0)); }

Array tanh(const Array& a) { return Array(a.shape(), a.values().array().tanh().matrix()); }

Eigen::MatrixXd im2col(const Array& input, const ConvGeometry& g) {
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.channels * g.kernel_h * g.kernel_w),
                                               static_cast<Eigen::Index>(g.out_h * g.out_w));
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const auto row = static_cast<Eigen::Index>((c * g.kernel_h + i) * g.kernel_w + j);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) continue;
            cols(row, static_cast<Eigen::Index>(oy * g.out_w + ox)) =
                input[(c * g.height + static_cast<std::size_t>(y)) * g.width + static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
  return cols;
}

Array col2im(const Eigen::MatrixXd& cols, const ConvGeometry& g) {
  Array out({g.channels, g.height, g.width});
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const auto row = static_cast<Eigen::Index>((c * g.kernel_h + i) * g.kernel_w + j);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) continue;
            out[(c * g.height + static_cast<std::size_t>(y)) * g.width + static_cast<std::size_t>(x)] +=
                cols(row, static_cast<Eigen::Index>(oy * g.out_w + ox));
          }
        }
      }
    }
  }
  return out;
}

Array conv2d(const Array& input, const Array& kernels, std::size_t stride, Padding padding) {
  const ConvGeometry g = conv_geometry(input.shape(), kernels.shape(), stride, padding);
  const Eigen::MatrixXd cols = im2col(input, g);
  const auto k = kernels.reshaped({g.filters, g.channels * g.kernel_h * g.kernel_w});
  Array out({g.filters, g.out_h, g.out_w});
  Eigen::Map<Array::RowMajorMatrix>(out.values().data(), static_cast<Eigen::Index>(g.filters),
                                    static_cast<Eigen::Index>(g.out_h * g.out_w))
      .noalias() = k.matrix() * cols;
  return out;
}

Array maxpool2d(const Array& input, std::vector<std::size_t>* argmax) {
  if (input.rank() != 3 || input.extent(1) < 2 || input.extent(2) < 2) {
    throw DimensionError("maxpool2d needs C x H x W with H, W >= 2, got " + shape_string(input.shape()));
  }
  const std::size_t c_n = input.extent(0), h = input.extent(1), w = input.extent(2);
  const std::size_t oh = h / 2, ow = w / 2;
  Array out({c_n, oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (c * h + 2 * y) * w + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * h + 2 * y + dy) * w + 2 * x + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (c * oh + y) * ow + x;
        out[o] = input[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return out;
}

Array sum(const Array& a) { return Array::scalar(a.values().sum()); }

Array softmax(const Array& logits) {
  if (logits.rank() == 1) {
    const double m = logits.values().maxCoeff();
    Eigen::VectorXd e = (logits.values().array() - m).exp();
    return Array(logits.shape(), e / e.sum());
  }
  if (logits.rank() != 2) throw DimensionError("softmax expects rank 1 or 2, got " + shape_string(logits.shape()));
  Array out = logits;
  auto m = out.matrix();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
  return out;
}

Array softmax_cross_entropy(const Array& logits, const std::vector<std::size_t>& targets) {
  const std::size_t rows = logits.rank() == 1 ? 1 : logits.extent(0);
  if (logits.rank() > 2 || targets.size() != rows) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_string(logits.shape()) + " with " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t k = logits.shape().back();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= k) {
      throw IndexError("softmax_cross_entropy: target " + std::to_string(targets[r]) + " out of range for " +
                       std::to_string(k) + " classes");
    }
    const auto row = logits.values().segment(static_cast<Eigen::Index>(r * k), static_cast<Eigen::Index>(k));
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(static_cast<Eigen::Index>(targets[r]));
  }
  return Array::scalar(total / static_cast<double>(rows));
}

Array softmax_cross_entropy(const Array& logits, std::size_t target) {
  return softmax_cross_entropy(logits, std::vector<std::size_t>{target});
}

}  // namespace dustbin
