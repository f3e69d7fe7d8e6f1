// SPDX-License-Identifier: Apache-2.0
#include "hpe/model.hpp"

#include <bit>
#include <cstring>
#include <random>

#include "hpe/error.hpp"
#include "hpe/io.hpp"

namespace hpe {

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'H', 'P', 'E', 'C', 'K', 'P', 'T', '1'};
const char* const kModule = "model-core";

}  // namespace

PoseModel::PoseModel(BackboneSpec spec, ModelOptions opts) : spec_(std::move(spec)), opts_(opts) {
  opts_.grid.validate();
  if (opts_.input_size <= 0) throw InvalidInput(kModule, "input_size must be positive");
  std::mt19937_64 rng(opts_.seed);
  auto bb = nn::build_backbone<float>(spec_.name, spec_.params, opts_.input_size, rng);
  if (spec_.feature_dim != 0 && spec_.feature_dim != bb.feature_dim) {
    throw InvalidInput(kModule, "backbone '" + spec_.name + "' has feature_dim " +
                                    std::to_string(bb.feature_dim) + ", expected " +
                                    std::to_string(spec_.feature_dim));
  }
  spec_.feature_dim = bb.feature_dim;
  backbone_ = std::move(bb.net);
  for (auto& h : heads_) {
    h = std::make_unique<nn::Linear<float>>(spec_.feature_dim, opts_.grid.num_bins, rng);
  }
}

PoseModel::Tensor PoseModel::make_batch(std::span<const Image> images) const {
  const int s = opts_.input_size;
  Tensor batch({static_cast<int>(images.size()), 3, s, s});
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.width() != s || img.height() != s || img.channels() != 3) {
      throw InvalidInput(kModule, "model expects " + std::to_string(s) + "x" + std::to_string(s) +
                                      "x3 input, got " + std::to_string(img.width()) + "x" +
                                      std::to_string(img.height()) + "x" + std::to_string(img.channels()));
    }
    float* dst = batch.sample(static_cast<int>(n));
    for (int c = 0; c < 3; ++c) {
      const float mean = opts_.normalization.mean[static_cast<std::size_t>(c)];
      const float inv = 1.0f / opts_.normalization.stddev[static_cast<std::size_t>(c)];
      float* p = dst + c * plane;
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) p[static_cast<std::size_t>(y) * s + x] = (img.at(y, x, c) - mean) * inv;
      }
    }
  }
  return batch;
}

namespace {

PoseModel::Tensor assemble_logits(const std::array<PoseModel::Tensor, 3>& parts, int nb) {
  const int n = parts[0].shape().n;
  PoseModel::Tensor out({n, 3 * nb, 1, 1});
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      std::copy_n(parts[static_cast<std::size_t>(a)].sample(i), nb, out.sample(i) + a * nb);
    }
  }
  return out;
}

}  // namespace

PoseModel::Tensor PoseModel::infer(const Tensor& batch) const {
  const Tensor features = backbone_->infer(batch);
  std::array<Tensor, 3> parts;
  for (std::size_t a = 0; a < 3; ++a) parts[a] = heads_[a]->infer(features);
  return assemble_logits(parts, opts_.grid.num_bins);
}

std::vector<PoseLogits<float>> PoseModel::forward(std::span<const Image> images) const {
  const Tensor logits = infer(make_batch(images));
  const std::size_t nb = static_cast<std::size_t>(opts_.grid.num_bins);
  std::vector<PoseLogits<float>> out(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const float* src = logits.sample(static_cast<int>(i));
    for (std::size_t a = 0; a < 3; ++a) out[i].rows[a].assign(src + a * nb, src + (a + 1) * nb);
  }
  return out;
}

PoseModel::Tensor PoseModel::train_forward(const Tensor& batch) {
  const Tensor features = backbone_->forward(batch);
  std::array<Tensor, 3> parts;
  for (std::size_t a = 0; a < 3; ++a) parts[a] = heads_[a]->forward(features);
  return assemble_logits(parts, opts_.grid.num_bins);
}

void PoseModel::train_backward(const Tensor& dlogits) {
  const int n = dlogits.shape().n;
  const int nb = opts_.grid.num_bins;
  Tensor dfeat;
  for (int a = 0; a < 3; ++a) {
    Tensor g({n, nb, 1, 1});
    for (int i = 0; i < n; ++i) std::copy_n(dlogits.sample(i) + a * nb, nb, g.sample(i));
    Tensor d = heads_[static_cast<std::size_t>(a)]->backward(g);
    if (dfeat.empty()) {
      dfeat = std::move(d);
    } else {
      dfeat += d;
    }
  }
  backbone_->backward(dfeat);
}

EulerPose PoseModel::predict_pose(const Image& image) const {
  return predict_poses(std::span<const Image>(&image, 1)).front();
}

std::vector<EulerPose> PoseModel::predict_poses(std::span<const Image> images) const {
  const auto logits = forward(images);
  std::vector<EulerPose> poses(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      std::vector<double> row(logits[i].rows[a].begin(), logits[i].rows[a].end());
      const auto dist = softmax<double>(row);
      poses[i][a] = decode<double>(dist, opts_.grid);
    }
  }
  return poses;
}

std::vector<nn::ParamRef<float>> PoseModel::parameters() {
  auto refs = nn::collect<float>(*backbone_, "backbone");
  for (std::size_t a = 0; a < 3; ++a) {
    heads_[a]->visit(std::string("head_") + kAngleNames[a],
                     [&](const std::string& name, nn::Tensor<float>& v, nn::Tensor<float>* g) {
                       refs.push_back({name, &v, g});
                     });
  }
  return refs;
}

std::vector<nn::ParamRef<float>> PoseModel::parameters_const() const {
  // Visiting is read-only here; the visitor interface is shared with training.
  return const_cast<PoseModel*>(this)->parameters();
}

std::size_t PoseModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters_const()) {
    if (p.grad) n += p.value->size();
  }
  return n;
}

std::uint64_t PoseModel::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : parameters_const()) {
    for (char ch : p.name) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
    for (float v : p.value->vec()) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

PoseModel PoseModel::clone() const {
  PoseModel copy(spec_, opts_);
  copy.copy_state_from(*this);
  return copy;
}

void PoseModel::copy_state_from(const PoseModel& other) {
  auto src = other.parameters_const();
  std::map<std::string, const nn::Tensor<float>*> by_name;
  for (const auto& p : src) by_name[p.name] = p.value;
  for (auto& p : parameters()) {
    auto it = by_name.find(p.name);
    if (it != by_name.end() && it->second->shape() == p.value->shape()) *p.value = *it->second;
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const PoseModel& model, const std::filesystem::path& path, const TrainingState* state) {
  using nlohmann::json;
  json header;
  header["format"] = "hpe-checkpoint";
  header["format_version"] = kCheckpointVersion;
  header["backbone"] = {{"name", model.spec().name},
                        {"feature_dim", model.spec().feature_dim},
                        {"params", model.spec().params}};
  header["input_size"] = model.input_size();
  const BinGrid& g = model.grid();
  header["grid"] = {{"num_bins", g.num_bins}, {"lo", g.lo}, {"hi", g.hi}, {"width", g.width}};
  header["normalization"] = {{"mean", model.normalization().mean}, {"std", model.normalization().stddev}};

  std::vector<float> payload;
  json tensors = json::array();
  auto append = [&](const std::string& name, const nn::Shape& s, std::span<const float> data) {
    tensors.push_back({{"name", name},
                       {"shape", {s.n, s.c, s.h, s.w}},
                       {"offset", payload.size()},
                       {"count", data.size()}});
    payload.insert(payload.end(), data.begin(), data.end());
  };
  for (const auto& p : const_cast<PoseModel&>(model).parameters()) {
    append(p.name, p.value->shape(), p.value->span());
  }
  if (state) {
    header["training"] = {{"epochs_completed", state->epochs_completed},
                          {"optimizer_steps", state->optimizer_steps},
                          {"extra", state->extra}};
    for (const auto& [name, m] : state->first_moments) {
      append("optim.m." + name, {1, static_cast<int>(m.size()), 1, 1}, m);
    }
    for (const auto& [name, v] : state->second_moments) {
      append("optim.v." + name, {1, static_cast<int>(v.size()), 1, 1}, v);
    }
  }
  header["tensors"] = std::move(tensors);
  io::write_container(path, kCheckpointMagic, header, payload);
}

namespace {

struct TensorEntry {
  nn::Shape shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

std::map<std::string, TensorEntry> tensor_index(const nlohmann::json& header, std::size_t payload_size,
                                                const std::string& ctx) {
  std::map<std::string, TensorEntry> index;
  const auto& list = io::require_field(header, "tensors", kModule, ctx);
  for (const auto& t : list) {
    TensorEntry e;
    const auto& shape = io::require_field(t, "shape", kModule, ctx + " tensor entry");
    e.shape = {shape.at(0).get<int>(), shape.at(1).get<int>(), shape.at(2).get<int>(), shape.at(3).get<int>()};
    e.offset = io::require_field(t, "offset", kModule, ctx + " tensor entry").get<std::size_t>();
    e.count = io::require_field(t, "count", kModule, ctx + " tensor entry").get<std::size_t>();
    const auto name = io::require_field(t, "name", kModule, ctx + " tensor entry").get<std::string>();
    if (e.count != e.shape.numel() || e.offset + e.count > payload_size) {
      throw LoadError(kModule, ctx + " tensor '" + name + "' lies outside the payload (file truncated?)");
    }
    index[name] = e;
  }
  return index;
}

}  // namespace

PoseModel load_checkpoint(const std::filesystem::path& path, const CheckpointExpectation& expect) {
  const std::string ctx = "checkpoint '" + path.string() + "'";
  const io::Container c = io::read_container(path, kCheckpointMagic, kModule);
  const auto& h = c.header;
  try {
    const int version = io::require_field(h, "format_version", kModule, ctx).get<int>();
    if (version != kCheckpointVersion) {
      throw LoadError(kModule, ctx + " field 'format_version' is " + std::to_string(version) +
                                   ", expected " + std::to_string(kCheckpointVersion));
    }
    const auto& bb = io::require_field(h, "backbone", kModule, ctx);
    BackboneSpec spec;
    spec.name = io::require_field(bb, "name", kModule, ctx + " backbone").get<std::string>();
    spec.feature_dim = io::require_field(bb, "feature_dim", kModule, ctx + " backbone").get<int>();
    if (bb.contains("params")) spec.params = bb.at("params").get<nn::BackboneParams>();
    if (expect.backbone && *expect.backbone != spec.name) {
      throw LoadError(kModule, ctx + " field 'backbone.name' is '" + spec.name + "', expected '" +
                                   *expect.backbone + "'");
    }

    ModelOptions opts;
    opts.input_size = io::require_field(h, "input_size", kModule, ctx).get<int>();
    const auto& g = io::require_field(h, "grid", kModule, ctx);
    opts.grid.num_bins = io::require_field(g, "num_bins", kModule, ctx + " grid").get<int>();
    opts.grid.lo = io::require_field(g, "lo", kModule, ctx + " grid").get<double>();
    opts.grid.hi = io::require_field(g, "hi", kModule, ctx + " grid").get<double>();
    opts.grid.width = io::require_field(g, "width", kModule, ctx + " grid").get<double>();
    if (expect.grid && !(*expect.grid == opts.grid)) {
      throw LoadError(kModule, ctx + " field 'grid' does not match the expected bin grid");
    }
    const auto& norm = io::require_field(h, "normalization", kModule, ctx);
    opts.normalization.mean = io::require_field(norm, "mean", kModule, ctx + " normalization")
                                  .get<std::array<float, 3>>();
    opts.normalization.stddev = io::require_field(norm, "std", kModule, ctx + " normalization")
                                    .get<std::array<float, 3>>();

    PoseModel model(spec, opts);
    const auto index = tensor_index(h, c.payload.size(), ctx);
    for (auto& p : model.parameters()) {
      auto it = index.find(p.name);
      if (it == index.end()) throw LoadError(kModule, ctx + " is missing tensor '" + p.name + "'");
      if (!(it->second.shape == p.value->shape())) {
        throw LoadError(kModule, ctx + " tensor '" + p.name + "' has shape " + it->second.shape.str() +
                                     ", model expects " + p.value->shape().str());
      }
      std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(it->second.offset), it->second.count,
                  p.value->data());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(kModule, ctx + " has a malformed header: " + e.what());
  } catch (const InvalidInput& e) {
    throw LoadError(kModule, ctx + " describes an invalid model: " + e.what());
  }
}

std::optional<TrainingState> load_training_state(const std::filesystem::path& path) {
  const std::string ctx = "checkpoint '" + path.string() + "'";
  const io::Container c = io::read_container(path, kCheckpointMagic, kModule);
  if (!c.header.contains("training")) return std::nullopt;
  try {
    TrainingState st;
    const auto& t = c.header.at("training");
    st.epochs_completed = io::require_field(t, "epochs_completed", kModule, ctx + " training").get<int>();
    st.optimizer_steps = io::require_field(t, "optimizer_steps", kModule, ctx + " training").get<long>();
    if (t.contains("extra")) st.extra = t.at("extra");
    for (const auto& [name, e] : tensor_index(c.header, c.payload.size(), ctx)) {
      const auto begin = c.payload.begin() + static_cast<std::ptrdiff_t>(e.offset);
      std::vector<float> data(begin, begin + static_cast<std::ptrdiff_t>(e.count));
      if (name.rfind("optim.m.", 0) == 0) st.first_moments[name.substr(8)] = std::move(data);
      if (name.rfind("optim.v.", 0) == 0) st.second_moments[name.substr(8)] = std::move(data);
    }
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(kModule, ctx + " has a malformed training section: " + e.what());
  }
}

}  // namespace hpe
