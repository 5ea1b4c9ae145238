// ie2d: data generation, training, inference and evaluation from the shell.
//
// Exit codes: 0 ok, 2 config/IO, 3 training abort, 4 checkpoint mismatch,
// 5 evaluation mismatch.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "ie2d/checkpoint.hpp"
#include "ie2d/dataset.hpp"
#include "ie2d/errors.hpp"
#include "ie2d/evaluation.hpp"
#include "ie2d/image_io.hpp"
#include "ie2d/model.hpp"
#include "ie2d/synthetic.hpp"
#include "ie2d/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ie2d;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitEvaluation = 5;

struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IngestionError(path.string() + ": write failed");
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IngestionError(dir.string() + ": cannot create directory");
}

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  fs::path out;
  int volumes = 7;
  int slices = 12;
  int size = 128;
  double contrast = SyntheticOptions{}.contrast;
  std::uint64_t seed = 0;
  int depth = ModelConfig{}.depth;
};

int cmd_gen_data(const GenArgs& a) {
  ModelConfig check;
  check.input_size = a.size;
  check.depth = a.depth;
  check.validate();
  if (a.volumes < 3) throw ConfigError("--volumes must be at least 3 for leave-one-out splits");
  if (a.slices < 1) throw ConfigError("--slices must be positive");

  SyntheticOptions o;
  o.n_slices = a.slices;
  o.size = a.size;
  o.contrast = a.contrast;
  const SyntheticCorpus corpus = generate_corpus(a.volumes, o, a.seed);

  make_dirs(a.out);
  write_corpus(a.out, corpus.volumes);
  json meta;
  meta["val_volume"] = corpus.val_volume;
  meta["same_patient"] = corpus.same_patient;
  meta["volumes"] = a.volumes;
  meta["slices"] = a.slices;
  meta["size"] = a.size;
  meta["contrast"] = a.contrast;
  meta["seed"] = a.seed;
  write_text(a.out / "corpus.json", meta.dump(2) + "\n");

  std::size_t foreground = 0, pixels = 0;
  for (const auto& v : corpus.volumes)
    for (const auto& m : v.masks) {
      foreground += static_cast<std::size_t>(std::count(m.pixels.begin(), m.pixels.end(), 1.0f));
      pixels += m.pixels.size();
    }
  std::cout << "wrote " << corpus.volumes.size() << " volumes x " << a.slices << " slices ("
            << a.size << "x" << a.size << ") to " << a.out.string() << "\n";
  std::cout << "validation volume: " << corpus.val_volume << "\n";
  for (const auto& [x, y] : corpus.same_patient) std::cout << "same patient: " << x << ", " << y << "\n";
  std::cout << "foreground fraction: " << static_cast<double>(foreground) / pixels << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  fs::path config;
  std::optional<fs::path> data, out;
  std::optional<std::string> fold;
  bool loocv = false;
  bool force = false;
  std::optional<int> epochs, batch_size, input_size;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> val_volume;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  fs::path data;
  fs::path out;
  std::string val_volume;
  std::vector<std::pair<std::string, std::string>> same_patient;

  json to_json() const {
    json j;
    j["model"] = ie2d::to_json(model);
    j["train"] = ie2d::to_json(train);
    j["data"] = data.string();
    j["out"] = out.string();
    j["val_volume"] = val_volume;
    j["same_patient"] = same_patient;
    return j;
  }
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("IE2D_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("IE2D_SEED='") + s + "' is not an unsigned integer");
  }
}

// Merges file, environment and flags (flags > file > env).
RunConfig resolve_run_config(const TrainArgs& a) {
  const json file = read_json(a.config);
  static const std::set<std::string> known{"model", "train", "data", "out", "val_volume", "same_patient"};
  for (const auto& [key, _] : file.items())
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");

  RunConfig rc;
  json model = file.value("model", json::object());
  json train = file.value("train", json::object());
  if (const auto seed = env_seed()) {
    if (!model.contains("seed")) model["seed"] = *seed;
    if (!train.contains("seed")) train["seed"] = *seed;
  }
  if (a.seed) model["seed"] = train["seed"] = *a.seed;
  if (a.input_size) model["input_size"] = *a.input_size;
  if (a.epochs) train["epochs"] = *a.epochs;
  if (a.batch_size) train["batch_size"] = *a.batch_size;
  if (a.learning_rate) train["learning_rate"] = *a.learning_rate;
  try {
    rc.model = model_config_from_json(model);
    rc.train = train_config_from_json(train);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  rc.model.validate();
  rc.train.validate();

  if (a.data) rc.data = *a.data;
  else if (file.contains("data")) rc.data = file["data"].get<std::string>();
  else throw ConfigError("no data directory: pass --data or set \"data\" in the config");
  if (a.out) rc.out = *a.out;
  else if (file.contains("out")) rc.out = file["out"].get<std::string>();
  else throw ConfigError("no output directory: pass --out or set \"out\" in the config");

  // The corpus may carry its own split metadata; the config file wins over it.
  json corpus_meta = json::object();
  if (fs::exists(rc.data / "corpus.json")) corpus_meta = read_json(rc.data / "corpus.json");
  if (a.val_volume) rc.val_volume = *a.val_volume;
  else if (file.contains("val_volume")) rc.val_volume = file["val_volume"].get<std::string>();
  else if (corpus_meta.contains("val_volume")) rc.val_volume = corpus_meta["val_volume"].get<std::string>();
  else throw ConfigError("no validation volume: set \"val_volume\" in the config");
  const json& pairs = file.contains("same_patient") ? file["same_patient"]
                                                     : corpus_meta.value("same_patient", json::array());
  try {
    rc.same_patient = pairs.get<std::vector<std::pair<std::string, std::string>>>();
  } catch (const json::exception&) {
    throw ConfigError("same_patient must be a list of [volume, volume] pairs");
  }
  return rc;
}

fs::path fold_dir(const RunConfig& rc, const std::string& id) { return rc.out / ("fold_" + id); }

const Volume& find_volume(const std::vector<Volume>& volumes, const std::string& id) {
  for (const auto& v : volumes)
    if (v.id == id) return v;
  throw ConfigError("volume '" + id + "' is not in the corpus");
}

GrayImage to_gray(const Tensor<float>& t, int n) {
  GrayImage g(t.w(), t.h());
  const auto plane = t.plane(n, 0);
  std::copy(plane.begin(), plane.end(), g.pixels.begin());
  return g;
}

void run_fold(const RunConfig& rc, const std::vector<Volume>& volumes, const Fold& fold) {
  const fs::path dir = fold_dir(rc, fold.test_volume);
  std::vector<Volume> train;
  for (const auto& id : fold.train_volumes) train.push_back(find_volume(volumes, id));
  const Volume& val = find_volume(volumes, fold.val_volume);
  const Volume& test = find_volume(volumes, fold.test_volume);

  std::cerr << "fold " << fold.test_volume << ": training on " << train.size() << " volumes, "
            << rc.train.epochs << " epochs\n";
  FitResult result;
  try {
    result = fit(train, {val}, rc.model, rc.train, [&](const EpochRecord& r, const TrainState<float>&) {
      std::cerr << "  epoch " << r.epoch << " unet " << r.loss[0] << " cae " << r.loss[1] << " ie2d "
                << r.loss[2] << " imit " << r.loss[3] << " | val dsc unet " << r.val_dsc_unet
                << " ie2d " << r.val_dsc_ie2d << "\n";
    });
  } catch (const TrainingAbort& e) {
    throw ExitError(kExitAbort, "fold " + fold.test_volume + ": training aborted in " + e.loss() +
                                    ": " + e.what());
  }

  const auto& params = result.state.best_params;
  save_checkpoint(dir / "checkpoint.bin", rc.model, params);
  write_history_csv(dir / "history.csv", result.history);

  const VolumeScore score = evaluate_volume(rc.model, params, test);
  make_dirs(dir / "overlays");
  for (std::size_t s = 0; s < test.slices(); ++s) {
    Tensor<float> image(Shape{1, 1, rc.model.input_size, rc.model.input_size});
    std::copy(test.images[s].pixels.begin(), test.images[s].pixels.end(), image.data());
    const auto out = ie2d_infer(rc.model, params, image);
    char name[32];
    std::snprintf(name, sizeof name, "slice_%03zu.png", s);
    write_png_rgb(dir / "overlays" / name,
                  render_overlay(test.images[s], &test.masks[s], binarize(to_gray(out.unet, 0)),
                                 binarize(to_gray(out.ie2d, 0))));
  }
  json j;
  j["test_volume"] = fold.test_volume;
  j["dsc_unet"] = score.unet;
  j["dsc_ie2d"] = score.ie2d;
  j["best_epoch"] = result.state.best_epoch;
  j["best_val_dsc_ie2d"] = result.state.best_val_dsc;
  write_text(dir / "score.json", j.dump(2) + "\n");
  std::cout << "fold " << fold.test_volume << ": DSC unet " << score.unet << ", ie2d " << score.ie2d
            << " (best epoch " << result.state.best_epoch << ")\n";
}

// Rebuilds out/report.csv from every fold that has finished, in fold order.
void write_aggregate_report(const RunConfig& rc, const SplitPlan& plan) {
  EvalReport report{{"dsc_unet", "dsc_ie2d"}, {}};
  for (const auto& f : plan.folds) {
    const fs::path score = fold_dir(rc, f.test_volume) / "score.json";
    if (!fs::exists(score)) continue;
    const json j = read_json(score);
    report.rows.push_back({f.test_volume, {j.at("dsc_unet").get<double>(), j.at("dsc_ie2d").get<double>()}});
  }
  write_report_csv(rc.out / "report.csv", report);
  const auto m = report.mean();
  const auto s = report.stddev();
  std::cout << "report: " << report.rows.size() << " fold(s), mean DSC unet " << m[0] << " ± " << s[0]
            << ", ie2d " << m[1] << " ± " << s[1] << " -> " << (rc.out / "report.csv").string() << "\n";
}

int cmd_train(const TrainArgs& a) {
  if (a.loocv == a.fold.has_value()) throw ConfigError("pass exactly one of --fold ID or --loocv");
  const RunConfig rc = resolve_run_config(a);
  const std::vector<Volume> volumes = load_corpus(rc.data, rc.model.input_size);
  std::vector<std::string> ids;
  for (const auto& v : volumes) ids.push_back(v.id);
  const SplitPlan plan = make_loocv_splits(ids, rc.val_volume, rc.same_patient);

  std::vector<Fold> folds;
  if (a.loocv) folds = plan.folds;
  else folds.push_back(plan.fold_for(*a.fold));

  // Refuse before any work so an interrupted run is never half-overwritten.
  for (const auto& f : folds) {
    const fs::path dir = fold_dir(rc, f.test_volume);
    if (fs::exists(dir) && !a.force)
      throw ConfigError(dir.string() + " already exists; pass --force to overwrite");
  }
  make_dirs(rc.out);
  write_text(rc.out / "config.json", rc.to_json().dump(2) + "\n");
  for (const auto& f : folds) {
    const fs::path dir = fold_dir(rc, f.test_volume);
    fs::remove_all(dir);
    make_dirs(dir);
    run_fold(rc, volumes, f);
  }
  write_aggregate_report(rc, plan);
  return 0;
}

// ------------------------------------------------------------------- infer

struct InferArgs {
  fs::path checkpoint;
  fs::path input;
  fs::path out;
  bool overlay = false;
  std::optional<fs::path> gt;
};

int cmd_infer(const InferArgs& a) {
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(a.checkpoint);
  } catch (const CheckpointMismatch& e) {
    throw ExitError(kExitCheckpoint, e.what());
  }
  const int size = ckpt.config.input_size;
  std::vector<fs::path> inputs;
  if (fs::is_directory(a.input)) inputs = png_files(a.input);
  else if (fs::exists(a.input)) inputs.push_back(a.input);
  if (inputs.empty()) throw IngestionError(a.input.string() + ": no PNG inputs found");
  make_dirs(a.out);

  for (const auto& path : inputs) {
    const GrayImage original = read_png_gray(path);
    const GrayImage resized = resize_bilinear(original, size, size);
    Tensor<float> image(Shape{1, 1, size, size});
    std::copy(resized.pixels.begin(), resized.pixels.end(), image.data());
    const auto result = ie2d_infer(ckpt.config, ckpt.params, image);
    // Masks come back at the input's own resolution.
    auto restore = [&](const Tensor<float>& t) {
      return resize_nearest(binarize(to_gray(t, 0), kBinarizeThreshold), original.width, original.height);
    };
    const GrayImage ie2d = restore(result.ie2d);
    const GrayImage unet = restore(result.unet);
    const std::string stem = path.stem().string();
    write_png_gray(a.out / (stem + "_ie2d.png"), ie2d);
    write_png_gray(a.out / (stem + "_unet.png"), unet);
    if (a.overlay) {
      std::optional<GrayImage> truth;
      if (a.gt && fs::exists(*a.gt / path.filename()))
        truth = binarize(resize_nearest(read_png_gray(*a.gt / path.filename()), original.width, original.height));
      write_png_rgb(a.out / (stem + "_overlay.png"),
                    render_overlay(original, truth ? &*truth : nullptr, unet, ie2d));
    }
    std::cout << path.filename().string() << " -> " << stem << "_ie2d.png, " << stem << "_unet.png\n";
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  fs::path report;
};

int cmd_evaluate(const EvalArgs& a) {
  for (const auto& d : {a.pred, a.gt})
    if (!fs::is_directory(d)) throw IngestionError(d.string() + ": not a directory");
  std::set<std::string> pred_names, gt_names;
  for (const auto& p : png_files(a.pred)) pred_names.insert(p.filename().string());
  for (const auto& p : png_files(a.gt)) gt_names.insert(p.filename().string());
  std::vector<std::string> unmatched;
  std::set_symmetric_difference(pred_names.begin(), pred_names.end(), gt_names.begin(), gt_names.end(),
                                std::back_inserter(unmatched));
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& u : unmatched)
      list += "\n  " + u + (pred_names.contains(u) ? " (prediction only)" : " (ground truth only)");
    throw ExitError(kExitEvaluation, std::to_string(unmatched.size()) + " unmatched file(s):" + list);
  }
  if (pred_names.empty()) throw ExitError(kExitEvaluation, "no PNG masks to evaluate");

  EvalReport report{{"dsc"}, {}};
  for (const auto& name : pred_names) {
    const GrayImage pred = binarize(read_png_gray(a.pred / name), kBinarizeThreshold);
    const GrayImage gt = binarize(read_png_gray(a.gt / name), kBinarizeThreshold);
    if (pred.width != gt.width || pred.height != gt.height)
      throw ExitError(kExitEvaluation, name + ": prediction and ground truth sizes differ");
    report.rows.push_back({fs::path(name).stem().string(), {binary_dice(pred.pixels, gt.pixels)}});
  }
  if (a.report.has_parent_path()) make_dirs(a.report.parent_path());
  write_report_csv(a.report, report);
  std::cout << report.rows.size() << " mask(s), mean DSC " << report.mean()[0] << " ± "
            << report.stddev()[0] << " -> " << a.report.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IE2D-Net: U-Net segmentation with a learned shape prior"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write a synthetic PNG corpus with a manifest");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--volumes", gen.volumes, "Number of volumes")->capture_default_str();
  g->add_option("--slices", gen.slices, "Slices per volume")->capture_default_str();
  g->add_option("--size", gen.size, "Image side length")->capture_default_str();
  g->add_option("--contrast", gen.contrast, "Shape-to-background intensity step")->capture_default_str();
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_option("--depth", gen.depth, "Network depth the size must support")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one fold or a full leave-one-out run");
  t->add_option("--config", tr.config, "JSON run config")->required();
  t->add_option("--data", tr.data, "Corpus directory (overrides config)");
  t->add_option("--out", tr.out, "Output directory (overrides config)");
  t->add_option("--fold", tr.fold, "Test volume of the single fold to train");
  t->add_flag("--loocv", tr.loocv, "Train every fold in turn");
  t->add_flag("--force", tr.force, "Overwrite existing fold directories");
  t->add_option("--epochs", tr.epochs, "Override train.epochs");
  t->add_option("--batch-size", tr.batch_size, "Override train.batch_size");
  t->add_option("--learning-rate", tr.learning_rate, "Override train.learning_rate");
  t->add_option("--input-size", tr.input_size, "Override model.input_size");
  t->add_option("--seed", tr.seed, "Override model and train seeds");
  t->add_option("--val-volume", tr.val_volume, "Override the validation volume");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Segment images with a trained checkpoint");
  i->add_option("--checkpoint", inf.checkpoint, "Checkpoint file")->required();
  i->add_option("--input", inf.input, "PNG image or directory of PNGs")->required();
  i->add_option("--out", inf.out, "Output directory")->required();
  i->add_flag("--overlay", inf.overlay, "Also write side-by-side overlay panels");
  i->add_option("--gt", inf.gt, "Directory of ground-truth masks for the overlay (same file names)");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score predicted masks against ground truth");
  e->add_option("--pred", ev.pred, "Directory of predicted masks")->required();
  e->add_option("--gt", ev.gt, "Directory of ground-truth masks")->required();
  e->add_option("--report", ev.report, "CSV report to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitConfig;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(tr);
    if (i->parsed()) return cmd_infer(inf);
    if (e->parsed()) return cmd_evaluate(ev);
  } catch (const ExitError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return ex.code;
  } catch (const CheckpointMismatch& ex) {
    std::cerr << "error: checkpoint mismatch: " << ex.what() << "\n";
    return kExitCheckpoint;
  } catch (const TrainingAbort& ex) {
    std::cerr << "error: training aborted in " << ex.loss() << ": " << ex.what() << "\n";
    return kExitAbort;
  } catch (const std::exception& ex) {  // ConfigError, IngestionError, DimensionError, filesystem
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
