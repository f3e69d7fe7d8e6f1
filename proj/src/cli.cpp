// SPDX-License-Identifier: Apache-2.0
#include "hpe/cli.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hpe/data.hpp"
#include "hpe/error.hpp"
#include "hpe/evaluation.hpp"
#include "hpe/io.hpp"
#include "hpe/model.hpp"
#include "hpe/render.hpp"
#include "hpe/selftest.hpp"
#include "hpe/training.hpp"

namespace hpe {

namespace {

constexpr const char* kModule = "cli";

/// Flags shared by every subcommand.
struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "table";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value config file");
  sub->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
  sub->add_option("--seed", c.seed, "sets both the data seed and the model init seed");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--format", c.format, "report format")->check(CLI::IsMember({"json", "table"}));
}

TrainConfig build_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : load_train_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto [k, v] = parse_override(kv);
    cfg.set(k, v);
  }
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.init_seed = *c.seed;
  }
  return cfg;
}

bool is_synthetic(const std::string& source) { return source.rfind("synthetic:", 0) == 0; }

/// Parses "synthetic:N[:SEED]".
std::pair<int, std::uint64_t> synthetic_args(const std::string& source, std::uint64_t fallback_seed) {
  std::vector<std::string> parts;
  std::stringstream ss(source.substr(10));
  std::string p;
  while (std::getline(ss, p, ':')) parts.push_back(p);
  try {
    if (parts.empty() || parts.size() > 2) throw std::invalid_argument("arity");
    std::size_t used = 0;
    const int n = std::stoi(parts[0], &used);
    if (used != parts[0].size() || n <= 0) throw std::invalid_argument("count");
    std::uint64_t seed = fallback_seed;
    if (parts.size() == 2) {
      seed = std::stoull(parts[1], &used);
      if (used != parts[1].size()) throw std::invalid_argument("seed");
    }
    return {n, seed};
  } catch (const std::exception&) {
    throw ConfigError(kModule, "bad data source '" + source + "', expected synthetic:N[:SEED]");
  }
}

std::vector<SampleRecord> load_records(const std::string& source, bool pose_filter) {
  auto set = load_annotations(source);
  auto records = pose_filter ? filter_pose_range(set.records) : set.records;
  if (records.empty()) throw InvalidInput(kModule, "'" + source + "' holds no usable records");
  return records;
}

std::vector<Sample> load_samples(const std::string& source, int size, bool pose_filter, std::uint64_t seed) {
  if (source.empty()) throw ConfigError(kModule, "no data source given");
  if (is_synthetic(source)) {
    const auto [n, s] = synthetic_args(source, seed);
    return make_synthetic_dataset(n, s, size);
  }
  std::vector<Sample> out;
  for (const auto& r : load_records(source, pose_filter)) out.push_back(preprocess(r, size));
  return out;
}

BoundingBox parse_box(const std::string& text) {
  int v[4];
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d,%d%c", &v[0], &v[1], &v[2], &v[3], &tail) != 4) {
    throw InvalidInput(kModule, "--box expects x1,y1,x2,y2, got '" + text + "'");
  }
  const BoundingBox b{v[0], v[1], v[2], v[3]};
  if (!b.valid()) throw InvalidInput(kModule, "--box '" + text + "' is empty");
  return b;
}

std::filesystem::path out_dir(const Common& c, const char* fallback) {
  return c.out.empty() ? std::filesystem::path(fallback) : std::filesystem::path(c.out);
}

void print_report(std::ostream& out, const Common& c, const std::string& name, const EvalReport& r) {
  if (c.format == "json") {
    nlohmann::json j = r.to_json();
    j.erase("per_sample");
    j["name"] = name;
    out << j.dump() << '\n';
  } else {
    out << format_table({{name, r}});
  }
}

void print_history(std::ostream& out, const Common& c, const TrainHistory& h) {
  nlohmann::json j{{"initial_loss", h.initial_loss},
                   {"epochs_run", h.epochs.size()},
                   {"best_epoch", h.best_epoch},
                   {"final_checkpoint", h.final_checkpoint.string()},
                   {"completed", h.completed}};
  if (!h.best_checkpoint.empty()) {
    j["best_checkpoint"] = h.best_checkpoint.string();
    j["best_val_mae"] = h.best_val_mae;
  }
  if (!h.epochs.empty()) j["final_loss"] = h.epochs.back().loss;
  if (c.format == "json") {
    out << j.dump() << '\n';
    return;
  }
  for (const auto& [k, v] : j.items()) out << k << ": " << v.dump() << '\n';
}

// -- subcommands --------------------------------------------------------------

int cmd_prepare(const Common& c, const std::string& annotations, int synthetic, int size, std::ostream& out) {
  const TrainConfig cfg = build_config(c);
  if (annotations.empty() == (synthetic <= 0)) {
    throw InvalidInput(kModule, "prepare needs exactly one of --annotations or --synthetic");
  }
  const auto dir = out_dir(c, "prepared");
  std::filesystem::create_directories(dir / "crops");
  std::ofstream csv(dir / "annotations.csv");
  if (!csv) throw IoError(kModule, "cannot write '" + (dir / "annotations.csv").string() + "'");
  csv.precision(17);
  csv << "id,image,x1,y1,x2,y2,yaw,pitch,roll,split,source\n";
  std::size_t written = 0;
  std::size_t dropped = 0;
  auto emit = [&](const std::string& id, const Image& img, const EulerPose& p, const std::string& split,
                  const std::string& source) {
    const std::string rel = "crops/" + id + ".png";
    io::write_image(dir / rel, img);
    csv << id << ',' << rel << ",0,0," << img.width() << ',' << img.height() << ',' << p.yaw << ',' << p.pitch << ','
        << p.roll << ',' << split << ',' << source << '\n';
    ++written;
  };
  if (synthetic > 0) {
    for (const auto& s : make_synthetic_dataset(synthetic, cfg.seed, size)) emit(s.id, s.image, s.pose, "train", "synthetic");
  } else {
    const auto set = load_annotations(annotations);
    const auto problems = validate_images(set.records);
    if (!problems.empty()) {
      std::string msg = "unreadable images in '" + annotations + "':";
      for (const auto& p : problems) msg += "\n  " + p;
      throw SchemaError("data-pipeline", msg);
    }
    const auto records = cfg.pose_filter ? filter_pose_range(set.records) : set.records;
    dropped = set.records.size() - records.size();
    for (const auto& r : records) {
      const auto s = preprocess(r, size);
      emit(s.id, s.image, s.pose, to_string(r.split), r.source);
    }
    for (const auto& w : set.warnings) out << "warning: " << w << '\n';
  }
  if (!csv) throw IoError(kModule, "failed writing annotations.csv");
  const nlohmann::json j{{"written", written}, {"dropped", dropped}, {"annotations", (dir / "annotations.csv").string()}};
  out << (c.format == "json" ? j.dump() : "wrote " + std::to_string(written) + " crops to " + dir.string()) << '\n';
  return kExitOk;
}

PoseModel fresh_model(const TrainConfig& cfg) {
  ModelOptions opts;
  opts.seed = cfg.init_seed;
  return PoseModel(cfg.backbone, opts);
}

void evaluate_if_requested(const TrainConfig& cfg, const PoseModel& model, const std::filesystem::path& dir,
                           const Common& c, std::ostream& out) {
  if (cfg.test_data.empty()) return;
  const auto test = load_samples(cfg.test_data, model.input_size(), cfg.pose_filter, cfg.seed + 1);
  const auto report = evaluate(model, test, cfg.batch_size);
  write_report(dir / "report.json", report);
  print_report(out, c, "test", report);
}

int cmd_train(const Common& c, TrainMode mode, std::ostream& out) {
  TrainConfig cfg = build_config(c);
  cfg.mode = mode;
  cfg.validate();
  const auto dir = out_dir(c, mode == TrainMode::hard ? "runs/teacher" : "runs/student");
  std::filesystem::create_directories(dir);
  {
    std::ofstream snapshot(dir / "config.json");
    snapshot << cfg.to_json().dump(2) << '\n';
  }
  PoseModel model = fresh_model(cfg);
  const auto data = load_samples(cfg.train_data, model.input_size(), cfg.pose_filter, cfg.seed);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::app);
  const RunOutputs run{dir, &metrics, mode == TrainMode::hard ? "teacher" : "student"};

  TrainHistory h;
  if (mode == TrainMode::hard) {
    h = train_teacher(model, data, cfg, run);
  } else {
    std::vector<PoseModel> teachers;
    TeacherSet set;
    std::optional<PseudoLabelStore> store;
    if (cfg.pseudo_mode == PseudoMode::precomputed && !cfg.pseudo_labels.empty()) {
      store = read_pseudo_labels(cfg.pseudo_labels, model.grid());
      set.store = &*store;
      set.names = store->teacher_names;
    } else {
      for (const auto& p : cfg.teacher_checkpoints) {
        teachers.push_back(load_checkpoint(p, {std::nullopt, model.grid()}));
        set.names.push_back(p.stem().string());
      }
      for (const auto& t : teachers) set.models.push_back(&t);
    }
    h = distill_student(model, set, data, cfg, run);
  }
  print_history(out, c, h);
  if (h.completed) evaluate_if_requested(cfg, model, dir, c, out);
  return kExitOk;
}

int cmd_pseudo_label(const Common& c, std::vector<std::string> teacher_paths, std::string output, std::ostream& out) {
  const TrainConfig cfg = build_config(c);
  if (teacher_paths.empty()) {
    for (const auto& p : cfg.teacher_checkpoints) teacher_paths.push_back(p.string());
  }
  if (teacher_paths.empty()) throw ConfigError(kModule, "pseudo-label needs --teacher or the 'teachers' key");
  std::vector<PoseModel> teachers;
  std::vector<std::string> names;
  for (const auto& p : teacher_paths) {
    teachers.push_back(load_checkpoint(p));
    names.push_back(std::filesystem::path(p).stem().string());
  }
  std::vector<const PoseModel*> ptrs;
  for (const auto& t : teachers) ptrs.push_back(&t);
  const auto data = load_samples(cfg.train_data, teachers.front().input_size(), cfg.pose_filter, cfg.seed);
  const auto store = compute_pseudo_labels(ptrs, names, data, cfg.batch_size);
  if (output.empty()) output = (out_dir(c, ".") / "pseudo_labels.bin").string();
  write_pseudo_labels(output, store);
  const nlohmann::json j{{"count", store.ids.size()}, {"teachers", names}, {"path", output}};
  out << (c.format == "json" ? j.dump() : "wrote " + std::to_string(store.ids.size()) + " pseudo-labels to " + output)
      << '\n';
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, std::string data, const std::string& predictions,
             const std::string& reference, std::ostream& out) {
  const TrainConfig cfg = build_config(c);
  if (!reference.empty()) {
    const auto table = load_reference_table(reference);
    if (c.format == "json") {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : table.rows) {
        rows.push_back({{"table", r.table}, {"dataset", r.dataset}, {"method", r.method}, {"yaw", r.yaw},
                        {"pitch", r.pitch}, {"roll", r.roll}, {"mae", r.mae}});
      }
      out << nlohmann::json{{"label", table.label}, {"rows", rows}}.dump() << '\n';
    } else {
      out << format_reference_table(table);
    }
    if (checkpoint.empty() && predictions.empty()) return kExitOk;
  }
  EvalReport report;
  std::string name;
  if (!predictions.empty()) {
    if (!checkpoint.empty()) throw InvalidInput(kModule, "give either --predictions or --checkpoint, not both");
    report = evaluate_predictions(load_predictions(predictions));
    name = std::filesystem::path(predictions).stem().string();
  } else if (!checkpoint.empty()) {
    const auto model = load_checkpoint(checkpoint);
    if (data.empty()) data = cfg.test_data;
    report = evaluate(model, load_samples(data, model.input_size(), cfg.pose_filter, cfg.seed + 1), cfg.batch_size);
    name = std::filesystem::path(checkpoint).stem().string();
  } else {
    throw InvalidInput(kModule, "eval needs --predictions, --checkpoint or --reference");
  }
  if (!c.out.empty()) write_report(std::filesystem::path(c.out) / "report.json", report);
  print_report(out, c, name, report);
  return kExitOk;
}

int cmd_predict(const Common& c, const std::string& checkpoint, const std::string& image_path,
                const std::string& box_text, const std::string& overlay, std::ostream& out) {
  const auto model = load_checkpoint(checkpoint);
  const Image image = io::read_image(image_path);
  const BoundingBox box = box_text.empty() ? BoundingBox{0, 0, image.width(), image.height()} : parse_box(box_text);
  const SampleRecord record{"input", image_path, box, {}, Split::test, {}};
  const EulerPose pose = model.predict_pose(preprocess(record, model.input_size()).image);
  if (!overlay.empty()) io::write_image(overlay, draw_axes(image, box, pose));
  if (c.format == "json") {
    out << nlohmann::json{{"yaw", pose.yaw}, {"pitch", pose.pitch}, {"roll", pose.roll}}.dump() << '\n';
  } else {
    char buf[128];
    std::snprintf(buf, sizeof buf, "yaw %.3f pitch %.3f roll %.3f\n", pose.yaw, pose.pitch, pose.roll);
    out << buf;
  }
  return kExitOk;
}

int cmd_plot(const Common& c, const std::string& report_path, const std::string& checkpoint, const std::string& data,
             int overlays, std::ostream& out) {
  const TrainConfig cfg = build_config(c);
  const auto dir = out_dir(c, "figures");
  std::filesystem::create_directories(dir);
  nlohmann::json written = nlohmann::json::array();
  if (!report_path.empty()) {
    const auto report = read_report(report_path);
    for (int a = 0; a < 3; ++a) {
      const auto files = scatter_export(report, a, dir / (std::string("scatter_") + kAngleNames[a]));
      written.push_back(files.csv.string());
      written.push_back(files.png.string());
    }
  }
  if (overlays > 0) {
    if (checkpoint.empty() || data.empty()) throw InvalidInput(kModule, "--overlays needs --checkpoint and --data");
    const auto model = load_checkpoint(checkpoint);
    std::vector<SampleRecord> records;
    std::vector<Image> images;
    if (is_synthetic(data)) {
      const auto [n, s] = synthetic_args(data, cfg.seed);
      for (auto& smp : make_synthetic_dataset(std::min(n, overlays), s, model.input_size())) {
        records.push_back({smp.id, {}, {0, 0, smp.image.width(), smp.image.height()}, smp.pose, Split::test, {}});
        images.push_back(std::move(smp.image));
      }
    } else {
      for (const auto& r : load_records(data, cfg.pose_filter)) {
        if (static_cast<int>(records.size()) == overlays) break;
        records.push_back(r);
        images.push_back(io::read_image(r.image_path));
      }
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto crop = crop_and_resize(images[i], square_box(records[i].box), model.input_size()).image;
      const auto pose = model.predict_pose(crop);
      const auto path = dir / ("overlay_" + records[i].id + ".png");
      io::write_image(path, draw_axes(images[i], records[i].box, pose));
      written.push_back(path.string());
    }
  }
  if (written.empty()) throw InvalidInput(kModule, "plot needs --report or --overlays");
  if (c.format == "json") {
    out << nlohmann::json{{"files", written}}.dump() << '\n';
  } else {
    for (const auto& f : written) out << f.get<std::string>() << '\n';
  }
  return kExitOk;
}

int cmd_selftest(const Common& c, std::ostream& out) {
  const auto results = run_selftest();
  bool ok = true;
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    if (c.format == "json") {
      j.push_back({{"check", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    } else {
      out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    }
  }
  if (c.format == "json") out << j.dump() << '\n';
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Landmark-free head pose estimation: training, distillation and evaluation", "hpe"};
  app.require_subcommand(1);
  Common common;

  auto* prepare = app.add_subcommand("prepare", "validate annotations and write squared-box crops");
  std::string annotations;
  int synthetic = 0;
  int size = 112;
  prepare->add_option("--annotations", annotations, "annotation file (.csv or .jsonl)");
  prepare->add_option("--synthetic", synthetic, "render N synthetic samples instead");
  prepare->add_option("--size", size, "crop side in pixels")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train-teacher", "hard-label training");
  auto* distill = app.add_subcommand("distill", "train a student on teacher-ensemble soft targets");

  auto* pseudo = app.add_subcommand("pseudo-label", "write the ensemble pseudo-label store");
  std::vector<std::string> teacher_paths;
  std::string pseudo_output;
  pseudo->add_option("--teacher", teacher_paths, "teacher checkpoint, repeatable");
  pseudo->add_option("--output", pseudo_output, "store path (default OUT/pseudo_labels.bin)");

  auto* eval = app.add_subcommand("eval", "MAE report for a checkpoint or a predictions file");
  std::string checkpoint;
  std::string data;
  std::string predictions;
  std::string reference;
  eval->add_option("--checkpoint", checkpoint, "model checkpoint");
  eval->add_option("--data", data, "annotation file or synthetic:N[:SEED]");
  eval->add_option("--predictions", predictions, "CSV with id, yaw, pitch, roll, pred_yaw, pred_pitch, pred_roll");
  eval->add_option("--reference", reference, "published results table (JSON) to print verbatim");

  auto* predict = app.add_subcommand("predict", "print the pose of one face");
  std::string image;
  std::string box;
  std::string overlay;
  predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict->add_option("--image", image, "input image")->required();
  predict->add_option("--box", box, "face box x1,y1,x2,y2 (default: whole image)");
  predict->add_option("--overlay", overlay, "write the image with drawn axes here");

  auto* plot = app.add_subcommand("plot", "error scatters and axis overlays");
  std::string report;
  int overlays = 0;
  plot->add_option("--report", report, "report.json from eval");
  plot->add_option("--checkpoint", checkpoint, "model for overlays");
  plot->add_option("--data", data, "samples for overlays");
  plot->add_option("--overlays", overlays, "number of overlay images")->check(CLI::NonNegativeNumber);

  auto* selftest = app.add_subcommand("selftest", "run the invariant checks");

  for (auto* sub : {prepare, train, distill, pseudo, eval, predict, plot, selftest}) add_common(sub, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: cli: " << e.what() << '\n' << app.help();
    return kExitValidation;
  }

  try {
    if (*prepare) return cmd_prepare(common, annotations, synthetic, size, out);
    if (*train) return cmd_train(common, TrainMode::hard, out);
    if (*distill) return cmd_train(common, TrainMode::distill, out);
    if (*pseudo) return cmd_pseudo_label(common, teacher_paths, pseudo_output, out);
    if (*eval) return cmd_eval(common, checkpoint, data, predictions, reference, out);
    if (*predict) return cmd_predict(common, checkpoint, image, box, overlay, out);
    if (*plot) return cmd_plot(common, report, checkpoint, data, overlays, out);
    return cmd_selftest(common, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    if (dynamic_cast<const ConfigError*>(&e) && std::string(e.what()).find("unknown config key") != std::string::npos) {
      err << app.help();
    }
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << kModule << ": " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace hpe
