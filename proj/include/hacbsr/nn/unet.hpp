#pragma once

#include <vector>

#include "hacbsr/nn/layers.hpp"

namespace hacbsr::nn {

struct UNetConfig {
  Index in_channels = 1;
  Index width = 32;
  Index scales = 3;
};

/// Image estimator G_x: encoder-decoder with skip concatenation, two
/// conv-norm-act blocks per level, average-pool down, nearest up, 1x1 sigmoid head.
template <typename Scalar>
class UNet {
 public:
  using Block = ConvNormAct<Scalar>;

  struct Tape {
    Index height = 0;
    Index width = 0;
    std::vector<typename Block::Tape> blocks;
    std::vector<Planes<Scalar>> skips;
    Planes<Scalar> head_in;
    Planes<Scalar> out;
  };

  explicit UNet(UNetConfig cfg = {}) : cfg_(cfg) {
    if (cfg.in_channels < 1 || cfg.width < 1 || cfg.scales < 1)
      throw ConfigurationError("U-Net configuration must have positive channels, width and scales");
    Index offset = 0;
    auto add = [&](Index in, Index out) {
      Block b;
      b.in_ch = in;
      b.out_ch = out;
      offset = b.assign(offset);
      blocks_.push_back(b);
    };
    const Index w = cfg.width;
    for (Index l = 0; l < cfg.scales; ++l) {
      add(l == 0 ? cfg.in_channels : w, w);
      add(w, w);
    }
    for (Index l = cfg.scales - 2; l >= 0; --l) {
      add(2 * w, w);
      add(w, w);
    }
    head_w_ = offset;
    head_b_ = head_w_ + w;
    param_count_ = head_b_ + 1;
  }

  const UNetConfig& config() const { return cfg_; }
  Index parameter_count() const { return param_count_; }
  Index divisor() const { return Index(1) << (cfg_.scales - 1); }

  Vector<Scalar> init(Rng& rng) const {
    Vector<Scalar> params = Vector<Scalar>::Zero(param_count_);
    for (const auto& b : blocks_) b.init(params, rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.width));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < cfg_.width + 1; ++i) params[head_w_ + i] = static_cast<Scalar>(u(rng));
    return params;
  }

  /// z has in_channels rows of height*width entries; returns a height x width image in (0, 1).
  Image<Scalar> forward(const Vector<Scalar>& params, const Planes<Scalar>& z, Index height, Index width,
                        Tape* tape = nullptr) const {
    check(params, z, height, width);
    typename Block::Tape* bt = nullptr;
    if (tape) {
      tape->height = height;
      tape->width = width;
      tape->blocks.assign(blocks_.size(), {});
      tape->skips.clear();
    }
    auto run = [&](size_t idx, const Planes<Scalar>& in, Index h, Index w) {
      bt = tape ? &tape->blocks[idx] : nullptr;
      return blocks_[idx].forward(params, in, h, w, bt);
    };
    std::vector<Planes<Scalar>> levels;
    Planes<Scalar> a = z;
    Index h = height, w = width;
    size_t idx = 0;
    for (Index l = 0; l < cfg_.scales; ++l) {
      if (l > 0) {
        a = avg_pool2(a, h, w);
        h /= 2;
        w /= 2;
      }
      a = run(idx++, a, h, w);
      a = run(idx++, a, h, w);
      levels.push_back(a);
    }
    for (Index l = cfg_.scales - 2; l >= 0; --l) {
      Planes<Scalar> cat = concat_channels(levels[static_cast<size_t>(l)], upsample_nearest2(a, h, w));
      h *= 2;
      w *= 2;
      a = run(idx++, cat, h, w);
      a = run(idx++, a, h, w);
    }
    const ConstRowMajorMap<Scalar> hw(params.data() + head_w_, 1, cfg_.width);
    Planes<Scalar> logits = hw * a;
    logits.array() += params[head_b_];
    Image<Scalar> out = logits.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
    out.resize(height, width);
    if (tape) {
      tape->head_in = std::move(a);
      tape->out = out;
    }
    return out;
  }

  /// Gradient of a scalar loss with respect to all parameters given dL/d(output image).
  Vector<Scalar> backward(const Vector<Scalar>& params, const Tape& tape, const Image<Scalar>& grad_out) const {
    Vector<Scalar> grad = Vector<Scalar>::Zero(param_count_);
    const Index height = tape.height, width = tape.width;
    Planes<Scalar> dlogit(1, height * width);
    for (Index p = 0; p < height * width; ++p) {
      const Scalar o = tape.out.data()[p];
      dlogit(0, p) = grad_out.data()[p] * o * (Scalar(1) - o);
    }
    RowMajorMap<Scalar> dhw(grad.data() + head_w_, 1, cfg_.width);
    dhw.noalias() += dlogit * tape.head_in.transpose();
    grad[head_b_] += dlogit.sum();
    const ConstRowMajorMap<Scalar> hw(params.data() + head_w_, 1, cfg_.width);
    Planes<Scalar> g = hw.transpose() * dlogit;

    const Index w = cfg_.width;
    std::vector<Planes<Scalar>> skip_grads(static_cast<size_t>(cfg_.scales));
    std::vector<Index> hs(static_cast<size_t>(cfg_.scales)), ws(static_cast<size_t>(cfg_.scales));
    for (Index l = 0; l < cfg_.scales; ++l) {
      hs[static_cast<size_t>(l)] = height >> l;
      ws[static_cast<size_t>(l)] = width >> l;
    }
    size_t idx = blocks_.size();
    for (Index l = 0; l <= cfg_.scales - 2; ++l) {
      const Index h = hs[static_cast<size_t>(l)], wd = ws[static_cast<size_t>(l)];
      --idx;
      g = blocks_[idx].backward(params, tape.blocks[idx], g, h, wd, grad);
      --idx;
      g = blocks_[idx].backward(params, tape.blocks[idx], g, h, wd, grad);
      skip_grads[static_cast<size_t>(l)] = g.topRows(w);
      g = upsample_nearest2_backward(Planes<Scalar>(g.bottomRows(w)), hs[static_cast<size_t>(l + 1)],
                                     ws[static_cast<size_t>(l + 1)]);
    }
    for (Index l = cfg_.scales - 1; l >= 0; --l) {
      const Index h = hs[static_cast<size_t>(l)], wd = ws[static_cast<size_t>(l)];
      if (l < cfg_.scales - 1) g += skip_grads[static_cast<size_t>(l)];
      --idx;
      g = blocks_[idx].backward(params, tape.blocks[idx], g, h, wd, grad);
      --idx;
      g = blocks_[idx].backward(params, tape.blocks[idx], g, h, wd, grad);
      if (l > 0) g = avg_pool2_backward(g, hs[static_cast<size_t>(l - 1)], ws[static_cast<size_t>(l - 1)]);
    }
    return grad;
  }

 private:
  void check(const Vector<Scalar>& params, const Planes<Scalar>& z, Index height, Index width) const {
    if (params.size() != param_count_) throw ConfigurationError("U-Net parameter vector has the wrong size");
    if (z.rows() != cfg_.in_channels || z.cols() != height * width)
      throw ConfigurationError("U-Net input noise does not match the configured shape");
    if (height % divisor() != 0 || width % divisor() != 0)
      throw ConfigurationError("U-Net input size must be divisible by 2^(scales-1)");
  }

  UNetConfig cfg_;
  std::vector<Block> blocks_;
  Index head_w_ = 0;
  Index head_b_ = 0;
  Index param_count_ = 0;
};

/// Fixed DIP input: channels x (height*width) uniform in [0, 0.1].
template <typename Scalar>
Planes<Scalar> make_image_noise(Index channels, Index height, Index width, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 0.1);
  Planes<Scalar> z(channels, height * width);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<Scalar>(u(rng));
  return z;
}

}  // namespace hacbsr::nn
