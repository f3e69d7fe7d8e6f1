// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hpe/nn/layers.hpp"

namespace hpe::nn {

/// relu(body(x) + shortcut(x)); an absent shortcut is the identity.
template <std::floating_point T>
class Residual final : public Layer<T> {
 public:
  Residual(LayerPtr<T> body, LayerPtr<T> shortcut)
      : body_(std::move(body)), shortcut_(std::move(shortcut)) {}

  Tensor<T> infer(const Tensor<T>& x) const override {
    Tensor<T> y = body_->infer(x);
    if (shortcut_) {
      y += shortcut_->infer(x);
    } else {
      y += x;
    }
    for (auto& v : y.vec()) v = v > T(0) ? v : T(0);
    return y;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = body_->forward(x);
    if (shortcut_) {
      y += shortcut_->forward(x);
    } else {
      y += x;
    }
    for (auto& v : y.vec()) v = v > T(0) ? v : T(0);
    output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = dy;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(output_[i] > T(0))) g[i] = T(0);
    }
    Tensor<T> dx = body_->backward(g);
    if (shortcut_) {
      dx += shortcut_->backward(g);
    } else {
      dx += g;
    }
    return dx;
  }

  void visit(const std::string& prefix, const TensorVisitor<T>& v) override {
    body_->visit(join_name(prefix, "body"), v);
    if (shortcut_) shortcut_->visit(join_name(prefix, "downsample"), v);
  }

 private:
  LayerPtr<T> body_;
  LayerPtr<T> shortcut_;
  Tensor<T> output_;
};

template <std::floating_point T>
LayerPtr<T> projection_shortcut(int in, int out, int stride, std::mt19937_64& rng) {
  if (in == out && stride == 1) return nullptr;
  return conv_bn_relu<T>(in, out, 1, stride, 0, rng, false);
}

/// Two 3x3 convolutions (ResNet-18/34 unit).
template <std::floating_point T>
LayerPtr<T> basic_block(int in, int planes, int stride, std::mt19937_64& rng) {
  auto body = std::make_unique<Sequential<T>>();
  body->add("a", conv_bn_relu<T>(in, planes, 3, stride, 1, rng));
  body->add("b", conv_bn_relu<T>(planes, planes, 3, 1, 1, rng, false));
  return std::make_unique<Residual<T>>(std::move(body), projection_shortcut<T>(in, planes, stride, rng));
}

/// 1x1 -> 3x3 -> 1x1 with 4x expansion (ResNet-50/101 unit).
template <std::floating_point T>
LayerPtr<T> bottleneck_block(int in, int planes, int stride, std::mt19937_64& rng) {
  const int out = planes * 4;
  auto body = std::make_unique<Sequential<T>>();
  body->add("a", conv_bn_relu<T>(in, planes, 1, 1, 0, rng));
  body->add("b", conv_bn_relu<T>(planes, planes, 3, stride, 1, rng));
  body->add("c", conv_bn_relu<T>(planes, out, 1, 1, 0, rng, false));
  return std::make_unique<Residual<T>>(std::move(body), projection_shortcut<T>(in, out, stride, rng));
}

// ---------------------------------------------------------------------------

/// Hierarchical multi-scale 3x3 stage of a Res2Net bottleneck. The input is
/// split channel-wise into `scale` groups of `width`; group i (i < scale-1)
/// passes through its own conv-bn-relu after adding the previous group's
/// output ("normal" blocks). In "stage" blocks the groups are independent and
/// the last group is average-pooled so the stride matches.
template <std::floating_point T>
class Res2NetSplit final : public Layer<T> {
 public:
  Res2NetSplit(int width, int scale, int stride, bool stage, std::mt19937_64& rng)
      : width_(width), scale_(scale), stage_(stage), pool_(3, stride, 1) {
    for (int i = 0; i < scale - 1; ++i) convs_.push_back(conv_bn_relu<T>(width, width, 3, stride, 1, rng));
  }

  Tensor<T> infer(const Tensor<T>& x) const override { return run(x, false); }
  Tensor<T> forward(const Tensor<T>& x) override { return run(x, true); }

  Tensor<T> backward(const Tensor<T>& dy) override {
    std::vector<Tensor<T>> dx_parts(static_cast<std::size_t>(scale_));
    Tensor<T> carry;
    for (int i = scale_ - 2; i >= 0; --i) {
      Tensor<T> g = slice_channels(dy, i * width_, width_);
      if (!stage_ && !carry.empty()) g += carry;
      Tensor<T> d_in = convs_[static_cast<std::size_t>(i)]->backward(g);
      dx_parts[static_cast<std::size_t>(i)] = d_in;
      carry = d_in;
    }
    Tensor<T> g_last = slice_channels(dy, (scale_ - 1) * width_, width_);
    dx_parts.back() = stage_ ? pool_.backward(g_last) : g_last;
    return concat_channels<T>(dx_parts);
  }

  void visit(const std::string& prefix, const TensorVisitor<T>& v) override {
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i]->visit(join_name(prefix, std::to_string(i)), v);
  }

 private:
  Tensor<T> run(const Tensor<T>& x, bool training) const {
    std::vector<Tensor<T>> outs;
    Tensor<T> prev;
    for (int i = 0; i < scale_ - 1; ++i) {
      Tensor<T> in = slice_channels(x, i * width_, width_);
      if (!stage_ && i > 0) in += prev;
      auto& conv = convs_[static_cast<std::size_t>(i)];
      prev = training ? conv->forward(in) : conv->infer(in);
      outs.push_back(prev);
    }
    Tensor<T> last = slice_channels(x, (scale_ - 1) * width_, width_);
    if (stage_) {
      last = training ? pool_.forward(last) : pool_.infer(last);
    }
    outs.push_back(std::move(last));
    return concat_channels<T>(outs);
  }

  int width_, scale_;
  bool stage_;
  // Layers are owned here; training forward mutates their caches.
  mutable std::vector<LayerPtr<T>> convs_;
  mutable AvgPool2d<T> pool_;
};

template <std::floating_point T>
LayerPtr<T> res2net_block(int in, int planes, int stride, bool stage, int base_width, int scale,
                          std::mt19937_64& rng) {
  const int width = planes * base_width / 64;
  const int out = planes * 4;
  auto body = std::make_unique<Sequential<T>>();
  body->add("a", conv_bn_relu<T>(in, width * scale, 1, 1, 0, rng));
  body->add("split", std::make_unique<Res2NetSplit<T>>(width, scale, stride, stage, rng));
  body->add("c", conv_bn_relu<T>(width * scale, out, 1, 1, 0, rng, false));
  return std::make_unique<Residual<T>>(std::move(body), projection_shortcut<T>(in, out, stride, rng));
}

// ---------------------------------------------------------------------------

/// Multi-head self-attention over the spatial positions of a feature map,
/// with learned relative height/width position embeddings added to the keys
/// (the bottleneck-transformer unit). Input and output are [N, C, H, W] for a
/// fixed H x W.
template <std::floating_point T>
class SpatialSelfAttention final : public Layer<T> {
 public:
  SpatialSelfAttention(int channels, int heads, int height, int width, std::mt19937_64& rng)
      : c_(channels), heads_(heads), d_(channels / heads), h_(height), w_(width),
        q_(channels, channels, 1, 1, 0, true, rng), k_(channels, channels, 1, 1, 0, true, rng),
        v_(channels, channels, 1, 1, 0, true, rng),
        rel_h_({heads, d_, height, 1}), rel_w_({heads, d_, 1, width}),
        rel_h_grad_(rel_h_.shape()), rel_w_grad_(rel_w_.shape()) {
    if (channels % heads != 0) throw InvalidInput("model-core", "attention channels not divisible by heads");
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d_)));
    for (auto& v : rel_h_.vec()) v = static_cast<T>(dist(rng));
    for (auto& v : rel_w_.vec()) v = static_cast<T>(dist(rng));
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    check(x.shape());
    std::vector<RowMatrix<T>> attn;
    return attend(q_.infer(x), k_.infer(x), v_.infer(x), attn, false);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    check(x.shape());
    q_cache_ = q_.forward(x);
    k_cache_ = k_.forward(x);
    v_cache_ = v_.forward(x);
    return attend(q_cache_, k_cache_, v_cache_, attn_cache_, true);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const Shape s = dy.shape();
    const int L = h_ * w_;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_)));
    Tensor<T> dq(s), dk(s), dv(s);
    for (int n = 0; n < s.n; ++n) {
      for (int hd = 0; hd < heads_; ++hd) {
        const std::size_t off = static_cast<std::size_t>(hd) * d_ * L;
        ConstMatMap<T> Q(q_cache_.sample(n) + off, d_, L);
        ConstMatMap<T> K(k_cache_.sample(n) + off, d_, L);
        ConstMatMap<T> V(v_cache_.sample(n) + off, d_, L);
        ConstMatMap<T> dO(dy.sample(n) + off, d_, L);
        const RowMatrix<T>& A = attn_cache_[static_cast<std::size_t>(n * heads_ + hd)];
        RowMatrix<T> KP = K + positions(hd);

        MatMap<T>(dv.sample(n) + off, d_, L).noalias() = dO * A;
        RowMatrix<T> dA = dO.transpose() * V;
        RowMatrix<T> dS(L, L);
        for (int a = 0; a < L; ++a) {
          const T dot = (dA.row(a).array() * A.row(a).array()).sum();
          dS.row(a) = A.row(a).array() * (dA.row(a).array() - dot);
        }
        MatMap<T>(dq.sample(n) + off, d_, L).noalias() = scale * (KP * dS.transpose());
        RowMatrix<T> dKP = scale * (Q * dS);
        MatMap<T>(dk.sample(n) + off, d_, L) = dKP;
        for (int e = 0; e < d_; ++e) {
          for (int i = 0; i < h_; ++i) {
            for (int j = 0; j < w_; ++j) {
              const T g = dKP(e, i * w_ + j);
              rel_h_grad_.at(hd, e, i, 0) += g;
              rel_w_grad_.at(hd, e, 0, j) += g;
            }
          }
        }
      }
    }
    Tensor<T> dx = q_.backward(dq);
    dx += k_.backward(dk);
    dx += v_.backward(dv);
    return dx;
  }

  void visit(const std::string& prefix, const TensorVisitor<T>& v) override {
    q_.visit(join_name(prefix, "query"), v);
    k_.visit(join_name(prefix, "key"), v);
    v_.visit(join_name(prefix, "value"), v);
    v(join_name(prefix, "rel_h"), rel_h_, &rel_h_grad_);
    v(join_name(prefix, "rel_w"), rel_w_, &rel_w_grad_);
  }

 private:
  void check(const Shape& s) const {
    if (s.c != c_ || s.h != h_ || s.w != w_) {
      throw InvalidInput("model-core", "attention layer built for [" + std::to_string(c_) + ", " +
                                           std::to_string(h_) + ", " + std::to_string(w_) + "], got " +
                                           s.str());
    }
  }

  RowMatrix<T> positions(int hd) const {
    RowMatrix<T> P(d_, h_ * w_);
    for (int e = 0; e < d_; ++e) {
      for (int i = 0; i < h_; ++i) {
        for (int j = 0; j < w_; ++j) P(e, i * w_ + j) = rel_h_.at(hd, e, i, 0) + rel_w_.at(hd, e, 0, j);
      }
    }
    return P;
  }

  Tensor<T> attend(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                   std::vector<RowMatrix<T>>& attn, bool record) const {
    const Shape s = q.shape();
    const int L = h_ * w_;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_)));
    Tensor<T> out(s);
    if (record) attn.assign(static_cast<std::size_t>(s.n * heads_), RowMatrix<T>());
    for (int n = 0; n < s.n; ++n) {
      for (int hd = 0; hd < heads_; ++hd) {
        const std::size_t off = static_cast<std::size_t>(hd) * d_ * L;
        ConstMatMap<T> Q(q.sample(n) + off, d_, L);
        ConstMatMap<T> K(k.sample(n) + off, d_, L);
        ConstMatMap<T> V(v.sample(n) + off, d_, L);
        RowMatrix<T> S = scale * (Q.transpose() * (K + positions(hd)));
        for (int a = 0; a < L; ++a) {
          const T m = S.row(a).maxCoeff();
          S.row(a) = (S.row(a).array() - m).exp();
          S.row(a) /= S.row(a).sum();
        }
        MatMap<T>(out.sample(n) + off, d_, L).noalias() = V * S.transpose();
        if (record) attn[static_cast<std::size_t>(n * heads_ + hd)] = std::move(S);
      }
    }
    return out;
  }

  int c_, heads_, d_, h_, w_;
  Conv2d<T> q_, k_, v_;
  Tensor<T> rel_h_, rel_w_, rel_h_grad_, rel_w_grad_;
  Tensor<T> q_cache_, k_cache_, v_cache_;
  std::vector<RowMatrix<T>> attn_cache_;
};

/// Bottleneck whose 3x3 convolution is replaced by spatial self-attention;
/// a stride of 2 becomes a 3x3/2 average pool after the attention so odd
/// feature maps shrink exactly like the strided projection shortcut.
template <std::floating_point T>
LayerPtr<T> bot_block(int in, int planes, int stride, int height, int width, int heads,
                      std::mt19937_64& rng) {
  const int out = planes * 4;
  auto body = std::make_unique<Sequential<T>>();
  body->add("a", conv_bn_relu<T>(in, planes, 1, 1, 0, rng));
  body->template emplace<SpatialSelfAttention<T>>("mhsa", planes, heads, height, width, rng);
  if (stride == 2) body->template emplace<AvgPool2d<T>>("pool", 3, 2, 1);
  body->template emplace<BatchNorm2d<T>>("bn", planes);
  body->template emplace<ReLU<T>>("relu");
  body->add("c", conv_bn_relu<T>(planes, out, 1, 1, 0, rng, false));
  return std::make_unique<Residual<T>>(std::move(body), projection_shortcut<T>(in, out, stride, rng));
}

}  // namespace hpe::nn
