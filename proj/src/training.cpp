// SPDX-License-Identifier: Apache-2.0
#include "hpe/training.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "hpe/error.hpp"

namespace hpe {

namespace {

constexpr const char* kModule = "training-engine";

using Tensor = nn::Tensor<float>;

struct BatchStats {
  double loss = 0;
  double cls = 0;
  double reg = 0;
  double kl = 0;
};

/// Computes the objective for one augmented batch and writes d(loss)/d(logits)
/// into `grad`.
using Objective = std::function<BatchStats(const std::vector<std::size_t>& idx,
                                           const std::vector<Augmented>& views, const Tensor& batch,
                                           const Tensor& logits, Tensor& grad)>;

std::vector<Image> images_of(const std::vector<Sample>& data, const std::vector<std::size_t>& idx) {
  std::vector<Image> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i].image);
  return out;
}

double holdout_mae(const PoseModel& model, const std::vector<Sample>& data, const std::vector<std::size_t>& idx,
                   int batch_size) {
  double sum = 0;
  for (std::size_t b = 0; b < idx.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(b),
                                        idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), b + batch_size)));
    const auto imgs = images_of(data, part);
    const auto preds = model.predict_poses(imgs);
    for (std::size_t i = 0; i < part.size(); ++i) {
      for (std::size_t a = 0; a < 3; ++a) sum += std::abs(preds[i][a] - data[part[i]].pose[a]);
    }
  }
  return sum / (3.0 * static_cast<double>(idx.size()));
}

std::string batch_ids(const std::vector<Sample>& data, const std::vector<std::size_t>& idx) {
  std::string s;
  for (auto i : idx) s += (s.empty() ? "" : ", ") + data[i].id;
  return s;
}

nlohmann::json history_json(const TrainHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs) epochs.push_back(e.to_json());
  return {{"initial_loss", h.initial_loss}, {"epochs", epochs}, {"best_epoch", h.best_epoch},
          {"best_val_mae", h.best_val_mae}, {"best_checkpoint", h.best_checkpoint.string()}};
}

void restore_history(const nlohmann::json& j, TrainHistory& h) {
  h.initial_loss = j.value("initial_loss", 0.0);
  for (const auto& e : j.value("epochs", nlohmann::json::array())) h.epochs.push_back(EpochRecord::from_json(e));
  h.best_epoch = j.value("best_epoch", -1);
  h.best_val_mae = j.value("best_val_mae", 0.0);
  h.best_checkpoint = j.value("best_checkpoint", std::string{});
}

/// Shared epoch loop: cosine schedule, seeded per-epoch shuffling and
/// augmentation, Adam updates, holdout tracking, checkpoints and metrics.
TrainHistory run(PoseModel& model, const std::vector<Sample>& data, const TrainConfig& cfg, const RunOutputs& out,
                 const Objective& objective, const std::function<double(const std::vector<std::size_t>&)>& initial) {
  if (data.empty()) throw InvalidInput(kModule, "training data is empty");
  cfg.augmentation.validate();
  const int epochs = cfg.effective_epochs();
  const int stop = cfg.stop_after > 0 ? std::min(cfg.stop_after, epochs) : epochs;
  const auto split = split_holdout(data.size(), data.size() > 1 ? cfg.val_fraction : 0.0, cfg.seed);
  if (split.train.empty()) throw InvalidInput(kModule, "no training samples left after the holdout split");

  nn::Adam<float> opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  TrainHistory hist;
  int start = 0;
  if (!cfg.resume.empty()) {
    auto state = load_training_state(cfg.resume);
    if (!state) throw ConfigError(kModule, "'" + cfg.resume.string() + "' holds no training state to resume");
    model.copy_state_from(load_checkpoint(cfg.resume, {model.spec().name, model.grid()}));
    opt.first_moments() = state->first_moments;
    opt.second_moments() = state->second_moments;
    opt.set_steps(state->optimizer_steps);
    restore_history(state->extra.value("history", nlohmann::json::object()), hist);
    start = state->epochs_completed;
    if (start > epochs) throw ConfigError(kModule, "checkpoint is past the configured number of epochs");
  } else {
    hist.initial_loss = initial(split.train);
  }

  if (!out.dir.empty()) std::filesystem::create_directories(out.dir);
  const auto params = model.parameters();
  nn::zero_grad<float>(params);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int e = start; e < stop; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = nn::cosine_lr(cfg.lr, cfg.lr_floor, e, epochs);
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(e)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order = split.train;
    std::shuffle(order.begin(), order.end(), rng);

    BatchStats sum;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t end = std::min(order.size(), b + bs);
      // A single-sample batch has no batch statistics to normalize with.
      if (end - b < 2 && order.size() >= 2) break;
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<Augmented> views;
      std::vector<Image> imgs;
      views.reserve(idx.size());
      imgs.reserve(idx.size());
      for (auto i : idx) {
        views.push_back(augment(data[i].image, data[i].pose, cfg.augmentation, rng));
        imgs.push_back(views.back().image);
      }
      const Tensor batch = model.make_batch(imgs);
      const Tensor logits = model.train_forward(batch);
      Tensor grad(logits.shape());
      const BatchStats s = objective(idx, views, batch, logits, grad);
      bool finite = std::isfinite(s.loss);
      for (float g : grad.vec()) finite = finite && std::isfinite(g);
      if (!finite) {
        throw TrainingError(kModule, "non-finite loss at epoch " + std::to_string(e) + " in batch [" +
                                         batch_ids(data, idx) + "]");
      }
      model.train_backward(grad);
      opt.step(params, lr);
      nn::zero_grad<float>(params);
      const double w = static_cast<double>(idx.size());
      sum.loss += s.loss * w;
      sum.cls += s.cls * w;
      sum.reg += s.reg * w;
      sum.kl += s.kl * w;
      seen += idx.size();
    }

    EpochRecord rec;
    rec.epoch = e;
    rec.lr = lr;
    rec.loss = sum.loss / static_cast<double>(seen);
    rec.cls = sum.cls / static_cast<double>(seen);
    rec.reg = sum.reg / static_cast<double>(seen);
    rec.kl = sum.kl / static_cast<double>(seen);
    if (!split.holdout.empty()) {
      rec.val_mae = holdout_mae(model, data, split.holdout, cfg.batch_size);
      if (hist.best_epoch < 0 || *rec.val_mae < hist.best_val_mae) {
        hist.best_epoch = e;
        hist.best_val_mae = *rec.val_mae;
        if (!out.dir.empty()) {
          hist.best_checkpoint = out.dir / (out.name + "-best.ckpt");
          save_checkpoint(model, hist.best_checkpoint);
        }
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist.epochs.push_back(rec);
    if (out.metrics) {
      nlohmann::json line = rec.to_json();
      line["run"] = out.name;
      *out.metrics << line.dump() << '\n';
      out.metrics->flush();
    }
  }

  hist.completed = stop == epochs;
  if (!out.dir.empty()) {
    TrainingState state;
    state.epochs_completed = stop;
    state.optimizer_steps = opt.steps();
    state.first_moments = opt.first_moments();
    state.second_moments = opt.second_moments();
    state.extra = {{"history", history_json(hist)}, {"config", cfg.to_json()}};
    hist.final_checkpoint = out.dir / (out.name + ".ckpt");
    save_checkpoint(model, hist.final_checkpoint, &state);
  }
  return hist;
}

PoseDistribution<float> distribution_row(const float* logits, std::size_t nb, double temperature) {
  PoseDistribution<float> d;
  for (std::size_t a = 0; a < 3; ++a) {
    d.rows[a].resize(nb);
    softmax_into<float>(std::span<const float>(logits + a * nb, nb), d.rows[a], static_cast<float>(temperature));
  }
  return d;
}

/// Ensemble targets for a batch already normalized for `teachers[0]`.
std::vector<PseudoLabel<float>> ensemble_batch(const std::vector<const PoseModel*>& teachers,
                                               const std::vector<Image>& imgs, double temperature) {
  std::vector<Tensor> outs;
  for (const auto* t : teachers) outs.push_back(t->infer(t->make_batch(imgs)));
  const std::size_t nb = static_cast<std::size_t>(teachers.front()->grid().num_bins);
  std::vector<PseudoLabel<float>> labels;
  labels.reserve(imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    std::vector<PoseDistribution<float>> dists;
    for (const auto& o : outs) dists.push_back(distribution_row(o.sample(static_cast<int>(i)), nb, temperature));
    labels.push_back(ensemble<float>(dists));
  }
  return labels;
}

}  // namespace

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"lr", lr},  {"loss", loss},       {"cls", cls},
                   {"reg", reg},     {"kl", kl},  {"seconds", seconds}};
  j["val_mae"] = val_mae ? nlohmann::json(*val_mae) : nlohmann::json(nullptr);
  return j;
}

EpochRecord EpochRecord::from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.lr = j.at("lr").get<double>();
  r.loss = j.at("loss").get<double>();
  r.cls = j.value("cls", 0.0);
  r.reg = j.value("reg", 0.0);
  r.kl = j.value("kl", 0.0);
  r.seconds = j.value("seconds", 0.0);
  if (j.contains("val_mae") && !j.at("val_mae").is_null()) r.val_mae = j.at("val_mae").get<double>();
  return r;
}

double mean_hard_loss(const PoseModel& model, const std::vector<Sample>& data, double reg_weight, int batch_size) {
  if (data.empty()) throw InvalidInput(kModule, "cannot average a loss over no samples");
  double sum = 0;
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), b + static_cast<std::size_t>(batch_size));
    std::vector<Image> imgs;
    std::vector<EulerPose> poses;
    for (std::size_t i = b; i < end; ++i) {
      imgs.push_back(data[i].image);
      poses.push_back(data[i].pose);
    }
    const Tensor logits = model.infer(model.make_batch(imgs));
    const auto r = total_loss_batch<float>(logits.span(), poses, model.grid(), {reg_weight});
    sum += static_cast<double>(r.total) * static_cast<double>(end - b);
  }
  return sum / static_cast<double>(data.size());
}

TrainHistory train_teacher(PoseModel& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                           const RunOutputs& out) {
  if (cfg.mode != TrainMode::hard) throw ConfigError(kModule, "train_teacher needs mode = hard");
  const HardLossOptions opts{cfg.reg_weight};
  Objective objective = [&](const std::vector<std::size_t>&, const std::vector<Augmented>& views, const Tensor&,
                            const Tensor& logits, Tensor& grad) {
    std::vector<EulerPose> poses;
    poses.reserve(views.size());
    for (const auto& v : views) poses.push_back(v.pose);
    const auto r = total_loss_batch<float>(logits.span(), poses, model.grid(), opts, grad.span());
    BatchStats s;
    s.loss = r.total;
    for (std::size_t a = 0; a < 3; ++a) {
      s.cls += r.cls[a];
      s.reg += r.reg[a];
    }
    return s;
  };
  auto initial = [&](const std::vector<std::size_t>& idx) {
    std::vector<Sample> subset;
    subset.reserve(idx.size());
    for (auto i : idx) subset.push_back(data[i]);
    return mean_hard_loss(model, subset, cfg.reg_weight, cfg.batch_size);
  };
  return run(model, data, cfg, out, objective, initial);
}

TrainHistory distill_student(PoseModel& student, const TeacherSet& teachers, const std::vector<Sample>& data,
                             const TrainConfig& cfg, const RunOutputs& out) {
  if (cfg.mode != TrainMode::distill) throw ConfigError(kModule, "distill_student needs mode = distill");
  const bool use_store = cfg.pseudo_mode == PseudoMode::precomputed;
  if (use_store && !teachers.store) throw ConfigError(kModule, "pseudo_mode = precomputed needs a pseudo-label store");
  if (!use_store && teachers.models.empty()) throw ConfigError(kModule, "on-the-fly distillation needs teachers");

  // Bin-grid compatibility is checked before any work is done.
  for (const auto* t : teachers.models) {
    if (!(t->grid() == student.grid())) {
      throw ConfigError(kModule, "teacher '" + t->spec().name + "' uses a different bin grid than the student");
    }
    if (t->input_size() != student.input_size()) {
      throw ConfigError(kModule, "teacher and student input sizes differ");
    }
  }
  std::map<std::string, std::size_t> store_index;
  if (use_store) {
    if (teachers.store->num_bins != student.grid().num_bins) {
      throw ConfigError(kModule, "pseudo-label store bins differ from the student's grid");
    }
    for (std::size_t i = 0; i < teachers.store->ids.size(); ++i) store_index[teachers.store->ids[i]] = i;
    for (const auto& s : data) {
      if (!store_index.count(s.id)) throw ConfigError(kModule, "pseudo-label store has no entry for '" + s.id + "'");
    }
  }

  auto targets_for = [&](const std::vector<std::size_t>& idx, const std::vector<Augmented>& views) {
    if (use_store) {
      std::vector<PseudoLabel<float>> labels;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& l = teachers.store->labels[store_index.at(data[idx[k]].id)];
        labels.push_back(views[k].flipped ? flip_pseudo_label(l) : l);
      }
      return labels;
    }
    std::vector<Image> imgs;
    for (const auto& v : views) imgs.push_back(v.image);
    return ensemble_batch(teachers.models, imgs, cfg.temperature);
  };

  const DistillOptions dopts{cfg.temperature};
  const HardLossOptions hopts{cfg.reg_weight};
  Objective objective = [&](const std::vector<std::size_t>& idx, const std::vector<Augmented>& views, const Tensor&,
                            const Tensor& logits, Tensor& grad) {
    const auto labels = targets_for(idx, views);
    BatchStats s;
    s.kl = distillation_loss_batch<float>(logits.span(), labels, dopts, grad.span());
    s.loss = s.kl;
    if (cfg.hard_weight > 0) {
      std::vector<EulerPose> poses;
      for (const auto& v : views) poses.push_back(v.pose);
      Tensor hgrad(logits.shape());
      const auto r = total_loss_batch<float>(logits.span(), poses, student.grid(), hopts, hgrad.span());
      const float w = static_cast<float>(cfg.hard_weight);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += w * hgrad[i];
      for (std::size_t a = 0; a < 3; ++a) {
        s.cls += r.cls[a];
        s.reg += r.reg[a];
      }
      s.loss += cfg.hard_weight * r.total;
    }
    return s;
  };

  auto initial = [&](const std::vector<std::size_t>& idx) {
    // Inference mode, un-augmented views.
    double sum = 0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t b = 0; b < idx.size(); b += bs) {
      const std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(b),
                                          idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), b + bs)));
      std::vector<Augmented> views;
      std::vector<Image> imgs;
      for (auto i : part) {
        views.push_back({data[i].image, data[i].pose, false});
        imgs.push_back(data[i].image);
      }
      const auto labels = targets_for(part, views);
      const Tensor logits = student.infer(student.make_batch(imgs));
      double kl = distillation_loss_batch<float>(logits.span(), labels, dopts);
      if (cfg.hard_weight > 0) {
        std::vector<EulerPose> poses;
        for (const auto& v : views) poses.push_back(v.pose);
        kl += cfg.hard_weight * total_loss_batch<float>(logits.span(), poses, student.grid(), hopts).total;
      }
      sum += kl * static_cast<double>(part.size());
    }
    return sum / static_cast<double>(idx.size());
  };
  return run(student, data, cfg, out, objective, initial);
}

PseudoLabelStore compute_pseudo_labels(const std::vector<const PoseModel*>& teachers,
                                       const std::vector<std::string>& names, const std::vector<Sample>& data,
                                       int batch_size) {
  if (teachers.empty()) throw ConfigError(kModule, "pseudo-labelling needs at least one teacher");
  for (const auto* t : teachers) {
    if (!(t->grid() == teachers.front()->grid())) throw ConfigError(kModule, "teachers use different bin grids");
  }
  PseudoLabelStore store;
  store.num_bins = teachers.front()->grid().num_bins;
  store.teacher_names = names;
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), b + static_cast<std::size_t>(batch_size));
    std::vector<Image> imgs;
    for (std::size_t i = b; i < end; ++i) {
      imgs.push_back(data[i].image);
      store.ids.push_back(data[i].id);
    }
    for (auto& l : ensemble_batch(teachers, imgs, 1.0)) store.labels.push_back(std::move(l));
  }
  return store;
}

}  // namespace hpe
