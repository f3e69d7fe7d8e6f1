// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hpe/nn/blocks.hpp"

namespace hpe::nn {

/// Integer knobs of a backbone (base width, heads, ...). Unset keys take the
/// architecture defaults.
using BackboneParams = std::map<std::string, int>;

inline int param_or(const BackboneParams& p, const std::string& key, int fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline const std::vector<std::string>& registered_backbones() {
  static const std::vector<std::string> names = {"resnet18", "resnet101", "botnet101", "res2net101",
                                                 "tiny-cnn"};
  return names;
}

template <std::floating_point T>
struct Backbone {
  LayerPtr<T> net;
  int feature_dim = 0;
};

namespace detail {

inline int conv_out(int size, int k, int stride, int pad) { return (size + 2 * pad - k) / stride + 1; }

enum class BlockKind { basic, bottleneck, bot, res2net };

template <std::floating_point T>
Backbone<T> build_resnet(BlockKind kind, std::array<int, 4> depths, int input_size,
                         const BackboneParams& params, std::mt19937_64& rng) {
  const int base = param_or(params, "width", 64);
  auto net = std::make_unique<Sequential<T>>();
  net->add("stem", conv_bn_relu<T>(3, base, 7, 2, 3, rng));
  net->template emplace<MaxPool2d<T>>("pool", 3, 2, 1);
  int spatial = conv_out(conv_out(input_size, 7, 2, 3), 3, 2, 1);

  const int expansion = kind == BlockKind::basic ? 1 : 4;
  int in = base;
  for (int stage = 0; stage < 4; ++stage) {
    const int planes = base << stage;
    auto layer = std::make_unique<Sequential<T>>();
    for (int b = 0; b < depths[static_cast<std::size_t>(stage)]; ++b) {
      const int stride = (b == 0 && stage > 0) ? 2 : 1;
      LayerPtr<T> block;
      switch (kind) {
        case BlockKind::basic:
          block = basic_block<T>(in, planes, stride, rng);
          break;
        case BlockKind::bottleneck:
          block = bottleneck_block<T>(in, planes, stride, rng);
          break;
        case BlockKind::bot:
          if (stage == 3) {
            block = bot_block<T>(in, planes, stride, spatial, spatial, param_or(params, "heads", 4), rng);
          } else {
            block = bottleneck_block<T>(in, planes, stride, rng);
          }
          break;
        case BlockKind::res2net:
          block = res2net_block<T>(in, planes, stride, b == 0, param_or(params, "base_width", 26),
                                   param_or(params, "scale", 4), rng);
          break;
      }
      layer->add(std::to_string(b), std::move(block));
      in = planes * expansion;
      spatial = conv_out(spatial, 1, stride, 0);
    }
    net->add("layer" + std::to_string(stage + 1), std::move(layer));
  }
  net->template emplace<GlobalAvgPool<T>>("gap");
  return {std::move(net), in};
}

/// Four strided conv-bn-relu blocks and global pooling; sized for CPU-scale
/// experiments on 112 x 112 inputs.
template <std::floating_point T>
Backbone<T> build_tiny_cnn(const BackboneParams& params, std::mt19937_64& rng) {
  const int w = param_or(params, "width", 16);
  auto net = std::make_unique<Sequential<T>>();
  net->add("block1", conv_bn_relu<T>(3, w, 5, 4, 2, rng));
  net->add("block2", conv_bn_relu<T>(w, 2 * w, 3, 2, 1, rng));
  net->add("block3", conv_bn_relu<T>(2 * w, 4 * w, 3, 2, 1, rng));
  net->add("block4", conv_bn_relu<T>(4 * w, 8 * w, 3, 2, 1, rng));
  net->template emplace<GlobalAvgPool<T>>("gap");
  return {std::move(net), 8 * w};
}

}  // namespace detail

/// Builds a registered backbone; throws InvalidInput for unknown names.
template <std::floating_point T>
Backbone<T> build_backbone(const std::string& name, const BackboneParams& params, int input_size,
                           std::mt19937_64& rng) {
  using detail::BlockKind;
  if (name == "resnet18") return detail::build_resnet<T>(BlockKind::basic, {2, 2, 2, 2}, input_size, params, rng);
  if (name == "resnet101") {
    return detail::build_resnet<T>(BlockKind::bottleneck, {3, 4, 23, 3}, input_size, params, rng);
  }
  if (name == "botnet101") return detail::build_resnet<T>(BlockKind::bot, {3, 4, 23, 3}, input_size, params, rng);
  if (name == "res2net101") {
    return detail::build_resnet<T>(BlockKind::res2net, {3, 4, 23, 3}, input_size, params, rng);
  }
  if (name == "tiny-cnn") return detail::build_tiny_cnn<T>(params, rng);
  throw InvalidInput("model-core", "unknown backbone '" + name + "'");
}

}  // namespace hpe::nn
