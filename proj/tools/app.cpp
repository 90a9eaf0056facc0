#include "app.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "vce/checkpoint.hpp"
#include "vce/config.hpp"
#include "vce/dataset.hpp"
#include "vce/error.hpp"
#include "vce/io.hpp"
#include "vce/metrics.hpp"
#include "vce/plot.hpp"
#include "vce/synth.hpp"
#include "vce/training.hpp"
#include "vce/tsne.hpp"

namespace vce::app {

namespace fs = std::filesystem;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
      return kConfigError;
    case ErrorKind::IoError:
    case ErrorKind::EmptyClass:
    case ErrorKind::UnknownClassDir:
    case ErrorKind::UnreadableImage:
    case ErrorKind::TooFewSamples:
    case ErrorKind::PerplexityUnreachable:
      return kDataError;
    case ErrorKind::NonFiniteGradient:
      return kTrainingAborted;
    case ErrorKind::CorruptCheckpoint:
    case ErrorKind::IncompatibleConfig:
      return kCheckpointError;
    default:
      return kFailure;
  }
}

// Runs `body`, reporting any failure on `err` and translating it to an exit code.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const TrainingAborted& e) {
    err << "error: training aborted: " << e.what() << "\n";
    return kTrainingAborted;
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

Checkpoint open_checkpoint(const fs::path& path) {
  try {
    return load_checkpoint(path);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::IoError) throw Error(ErrorKind::CorruptCheckpoint, e.what());
    throw;
  }
}

nlohmann::json config_echo(const RunConfig& cfg) {
  return {{"config_text", dump_config(cfg)},
          {"seed", cfg.seed},
          {"train_fraction", cfg.train_fraction},
          {"data_root", cfg.data_root}};
}

// Run configuration recorded in a checkpoint, or defaults when absent.
RunConfig config_from_checkpoint(const Checkpoint& ckpt) {
  RunConfig cfg;
  if (ckpt.run_config.contains("config_text")) {
    try {
      cfg = parse_config(ckpt.run_config.at("config_text").get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorKind::CorruptCheckpoint, std::string("unreadable config echo: ") + e.what());
    }
  }
  cfg.input_size = ckpt.model.input_size;
  cfg.fusion = ckpt.model.fusion;
  return cfg;
}

// Frames of `split` ("train", "val" or "all") after re-deriving the split the
// checkpoint was trained with.
std::vector<LabeledFrame> select_frames(const fs::path& data_root, const std::string& split, const RunConfig& cfg,
                                        const ClassSet& expected) {
  if (!fs::is_directory(data_root)) throw Error(ErrorKind::IoError, "data directory not found: " + data_root.string());
  auto scan = scan_dataset(data_root);
  if (scan.manifest.class_set.names() != expected.names()) {
    throw Error(ErrorKind::IncompatibleConfig, "dataset has " + std::to_string(scan.manifest.class_set.size()) +
                                                   " classes, checkpoint expects " + std::to_string(expected.size()));
  }
  if (split == "all") return scan.manifest.frames;
  const Split which = parse_split(split);
  const auto manifest = stratified_split(std::move(scan.manifest), {cfg.train_fraction, cfg.seed, true});
  return manifest.frames_in(which);
}

void check_split_name(const std::string& split) {
  if (split != "train" && split != "val" && split != "all") {
    throw Error(ErrorKind::ConfigError, "--split must be train, val or all");
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

int cmd_train(const fs::path& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_config(config_path);
    apply_env_overrides(cfg);
    cfg.validate();

    const fs::path data_root = cfg.data_root;
    if (!fs::is_directory(data_root)) throw Error(ErrorKind::IoError, "data directory not found: " + cfg.data_root);
    std::optional<ClassSet> classes;
    if (!cfg.classes.empty()) classes = ClassSet(cfg.classes);
    auto scan = scan_dataset(data_root, classes);
    const auto manifest = stratified_split(std::move(scan.manifest), {cfg.train_fraction, cfg.seed, true});

    EnsembleModel model(ModelConfig::make(cfg.variant, manifest.class_set, cfg.fusion, cfg.input_size), cfg.seed);
    if (!cfg.init_checkpoint.empty()) {
      const auto copied = load_matching_parameters(model, open_checkpoint(cfg.init_checkpoint));
      spdlog::info("initialized {} arrays from {}", copied, cfg.init_checkpoint);
    }

    const fs::path out_dir = cfg.output_dir;
    fs::create_directories(out_dir);
    write_text_file(out_dir / "config.txt", dump_config(cfg));
    write_manifest_csv(manifest, out_dir / "manifest.csv");

    auto write_history = [&](std::span<const EpochMetrics> history) {
      write_text_file(out_dir / "history.csv", history_to_csv(history));
      write_text_file(out_dir / "history.json", history_to_json(history).dump(2) + "\n");
      if (!history.empty()) render_training_curves(history, out_dir);
    };

    FrameLoader loader(cfg.preprocess());
    try {
      const FitResult result = fit(model, manifest, cfg.train, loader, config_echo(cfg));
      save_checkpoint(result.best, out_dir / "best.ckpt");
      write_history(result.history);
      const auto best = best_epoch_index(result.history);
      out << "best epoch " << result.history[best].epoch << " val_acc " << std::fixed << std::setprecision(4)
          << result.history[best].val_acc << "\n"
          << "checkpoint " << (out_dir / "best.ckpt").string() << "\n";
    } catch (const TrainingAborted& e) {
      write_history(e.history);
      if (e.best) save_checkpoint(*e.best, out_dir / "best.ckpt");
      throw;
    }
    return static_cast<int>(kOk);
  });
}

int cmd_evaluate(const fs::path& checkpoint, const fs::path& data_root, const std::string& split,
                 const std::optional<fs::path>& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    check_split_name(split);
    const Checkpoint ckpt = open_checkpoint(checkpoint);
    const RunConfig cfg = config_from_checkpoint(ckpt);
    const ClassSet& classes = ckpt.model.class_set;
    const auto frames = select_frames(data_root, split, cfg, classes);
    if (frames.empty()) throw Error(ErrorKind::TooFewSamples, "split '" + split + "' is empty");

    EnsembleModel model = model_from_checkpoint(ckpt);
    FrameLoader loader(cfg.preprocess());
    const Evaluation eval = evaluate_model(model, loader, frames, classes, cfg.train.batch_size);

    const fs::path dir = out_dir.value_or(checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path());
    write_text_file(dir / "report.json", report_to_json(eval, classes).dump(2) + "\n");
    render_confusion_heatmap(eval.confusion, classes, dir);
    render_roc(eval, classes, dir);

    out << std::fixed << std::setprecision(4) << "frames: " << frames.size() << "\n"
        << "accuracy: " << eval.report.accuracy << "\n"
        << "macro_f1: " << eval.report.macro_f1 << "\n"
        << "micro_f1: " << eval.report.micro_f1 << "\n";
    return static_cast<int>(kOk);
  });
}

int cmd_predict(const fs::path& checkpoint, const fs::path& input, const fs::path& out_dir, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ckpt = open_checkpoint(checkpoint);
    const RunConfig cfg = config_from_checkpoint(ckpt);
    const ClassSet& classes = ckpt.model.class_set;

    std::vector<fs::path> candidates;
    if (fs::is_directory(input)) {
      for (const auto& entry : fs::recursive_directory_iterator(input))
        if (entry.is_regular_file() && has_image_extension(entry.path())) candidates.push_back(entry.path());
      std::sort(candidates.begin(), candidates.end());
    } else if (fs::exists(input)) {
      candidates.push_back(input);
    } else {
      throw Error(ErrorKind::IoError, "input not found: " + input.string());
    }

    std::vector<LabeledFrame> frames;
    for (const auto& path : candidates) {
      try {
        (void)load_image(path);
        frames.push_back({path.string(), 0, Split::Unassigned});
      } catch (const Error& e) {
        spdlog::warn("skipping {}: {}", path.string(), e.what());
      }
    }
    if (frames.empty()) throw Error(ErrorKind::UnreadableImage, "no decodable images under " + input.string());

    EnsembleModel model = model_from_checkpoint(ckpt);
    FrameLoader loader(cfg.preprocess());
    const Matrix probs = predict_frames(model, loader, frames, cfg.train.batch_size);

    std::string csv = "path,predicted_class,confidence\n";
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto row = probs.row(static_cast<Eigen::Index>(i));
      const int best = argmax(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
      csv += csv_field(frames[i].path) + "," + csv_field(classes.name(best)) + "," + format_double(row(best)) + "\n";
      nlohmann::json per_class = nlohmann::json::object();
      for (int c = 0; c < classes.size(); ++c) per_class[classes.name(c)] = row(c);
      rows.push_back({{"path", frames[i].path}, {"predicted_class", classes.name(best)}, {"probabilities", per_class}});
    }
    write_text_file(out_dir / "predictions.csv", csv);
    write_text_file(out_dir / "probabilities.json",
                    nlohmann::json{{"classes", classes.names()}, {"predictions", rows}}.dump(2) + "\n");
    out << "predicted " << frames.size() << " frames -> " << (out_dir / "predictions.csv").string() << "\n";
    return static_cast<int>(kOk);
  });
}

int cmd_visualize(const fs::path& checkpoint, const fs::path& data_root, const std::string& split,
                  const std::optional<fs::path>& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    check_split_name(split);
    const Checkpoint ckpt = open_checkpoint(checkpoint);
    const RunConfig cfg = config_from_checkpoint(ckpt);
    const ClassSet& classes = ckpt.model.class_set;
    const auto frames = select_frames(data_root, split, cfg, classes);
    if (frames.size() < 8) {
      throw Error(ErrorKind::TooFewSamples,
                  "t-SNE needs at least 8 frames, split '" + split + "' has " + std::to_string(frames.size()));
    }

    EnsembleModel model = model_from_checkpoint(ckpt);
    FrameLoader loader(cfg.preprocess());
    const Matrix features = extract_features(model, loader, frames, cfg.train.batch_size);
    std::vector<int> labels;
    for (const auto& f : frames) labels.push_back(f.label);
    const Embedding2D embedding = tsne_embed(features, labels, cfg.tsne);

    const fs::path dir = out_dir.value_or(checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path());
    render_embedding(embedding, classes, dir);
    out << "t-SNE over " << frames.size() << " frames, KL " << format_double(embedding.initial_kl) << " -> "
        << format_double(embedding.final_kl) << "\n";
    return static_cast<int>(kOk);
  });
}

int cmd_synth(const fs::path& out_root, int per_class, std::uint64_t seed, int image_size, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    try {
      generate_synthetic_dataset(out_root, {per_class, seed, image_size});
    } catch (const fs::filesystem_error& e) {
      throw Error(ErrorKind::IoError, e.what());
    }
    out << "wrote " << per_class * 10 << " frames to " << out_root.string() << "\n";
    return static_cast<int>(kOk);
  });
}

int cmd_dump_config(const std::optional<fs::path>& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = config_path ? load_config(*config_path) : RunConfig{};
    apply_env_overrides(cfg);
    out << dump_config(cfg);
    return static_cast<int>(kOk);
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Video capsule endoscopy frame classifier"};
  cli.require_subcommand(1);

  fs::path config_path;
  auto* train = cli.add_subcommand("train", "Train the ensemble from a config file");
  train->add_option("--config", config_path, "Run configuration")->required();

  fs::path ckpt, data, input, out_dir;
  std::optional<fs::path> maybe_out;
  std::string split = "val";
  auto* evaluate = cli.add_subcommand("evaluate", "Metrics, confusion matrix and ROC on a data split");
  evaluate->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  evaluate->add_option("--data", data, "Dataset root")->required();
  evaluate->add_option("--split", split, "train, val or all")->capture_default_str();
  evaluate->add_option("--out", maybe_out, "Output directory (default: checkpoint directory)");

  auto* predict = cli.add_subcommand("predict", "Classify an image or a directory of images");
  predict->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  predict->add_option("--input", input, "Image file or directory")->required();
  predict->add_option("--out", out_dir, "Output directory")->required();

  auto* visualize = cli.add_subcommand("visualize", "t-SNE embedding of ensemble features");
  visualize->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  visualize->add_option("--data", data, "Dataset root")->required();
  visualize->add_option("--split", split, "train, val or all")->capture_default_str();
  visualize->add_option("--out", maybe_out, "Output directory (default: checkpoint directory)");

  int per_class = 20;
  std::uint64_t seed = 0;
  int size = 64;
  auto* synth = cli.add_subcommand("synth", "Generate the synthetic 10-class dataset");
  synth->add_option("--out", out_dir, "Dataset root to create")->required();
  synth->add_option("--per-class", per_class, "Frames per class")->capture_default_str();
  synth->add_option("--seed", seed, "Generator seed")->capture_default_str();
  synth->add_option("--size", size, "Image side in pixels")->capture_default_str();

  std::optional<fs::path> maybe_config;
  auto* dump = cli.add_subcommand("dump-config", "Print the resolved configuration");
  dump->add_option("--config", maybe_config, "Run configuration (default: built-in defaults)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e, out, err);
    return code == 0 ? static_cast<int>(kOk) : static_cast<int>(kConfigError);
  }

  if (*train) return cmd_train(config_path, out, err);
  if (*evaluate) return cmd_evaluate(ckpt, data, split, maybe_out, out, err);
  if (*predict) return cmd_predict(ckpt, input, out_dir, out, err);
  if (*visualize) return cmd_visualize(ckpt, data, split, maybe_out, out, err);
  if (*synth) return cmd_synth(out_dir, per_class, seed, size, out, err);
  return cmd_dump_config(maybe_config, out, err);
}

}  // namespace vce::app
