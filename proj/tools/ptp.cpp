#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ptp/errors.hpp"
#include "ptp/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ptp::DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ptp::DataError("cannot write " + path.string());
  out << text;
}

ptp::RunConfig config_from_checkpoint(const ptp::Checkpoint& ckpt) {
  const json meta = json::parse(ckpt.metadata, nullptr, false);
  if (meta.is_discarded() || !meta.contains("config")) throw ptp::DataError("checkpoint has no embedded config");
  return ptp::run_config_from_json(meta.at("config").dump());
}

ptp::RunConfig load_config(const Globals& g) {
  ptp::RunConfig c = g.config_path.empty() ? ptp::RunConfig{} : ptp::load_run_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  return c;
}

fs::path dataset_dir(const ptp::RunConfig& c, const Globals& g, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!c.dataset.empty()) return c.dataset;
  return fs::path(g.out) / "scenes";
}

void print_epoch(const char* stage, int epoch, const ptp::EpochLoss& l) {
  if (std::string(stage) == "dsf") {
    std::printf("[%s] epoch %d  L_dsf=%.6f  steps=%zu\n", stage, epoch + 1, l.dsf, l.steps);
  } else {
    std::printf("[%s] epoch %d  L_aff=%.6f  L_cvae=%.6f  steps=%zu\n", stage, epoch + 1, l.affinity, l.forecast,
                l.steps);
  }
  std::fflush(stdout);
}

int gen_data(const Globals& g) {
  const ptp::RunConfig c = load_config(g);
  const fs::path dir = fs::path(g.out) / "scenes";
  fs::create_directories(dir);
  const auto scenes = ptp::generate_dataset(c, c.seed);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu.jsonl", s);
    ptp::write_scene(scenes[s], dir / name);
  }
  std::printf("wrote %zu scenes to %s\n", scenes.size(), dir.string().c_str());
  return kOk;
}

int train(const Globals& g, const std::string& data) {
  const ptp::RunConfig c = load_config(g);
  const auto scenes = ptp::load_dataset(dataset_dir(c, g, data));
  fs::create_directories(g.out);
  const fs::path ckpt = fs::path(g.out) / ptp::kStage1File;
  auto result = ptp::train_stage1(c, scenes, ptp::init_model(c, c.seed),
                                  [](int e, const ptp::EpochLoss& l) { print_epoch("stage1", e, l); }, ckpt);
  ptp::save_stage1(ckpt, c, result.params);
  std::printf("wrote %s\n", ckpt.string().c_str());
  return kOk;
}

int train_dsf(const Globals& g, const std::string& data, std::string stage1) {
  const ptp::RunConfig c = load_config(g);
  if (stage1.empty()) stage1 = c.stage1_checkpoint;
  if (stage1.empty()) stage1 = (fs::path(g.out) / ptp::kStage1File).string();
  if (!fs::exists(stage1)) throw ptp::ConfigError("stage-1 checkpoint not found: " + stage1);
  const ptp::Checkpoint base = ptp::read_checkpoint(stage1);
  const auto scenes = ptp::load_dataset(dataset_dir(c, g, data));
  auto result = ptp::train_stage2_dsf(c, scenes, base.params,
                                      [](int e, const ptp::EpochLoss& l) { print_epoch("dsf", e, l); });
  fs::create_directories(g.out);
  const fs::path ckpt = fs::path(g.out) / ptp::kDsfFile;
  ptp::save_stage2(ckpt, c, result.params, base.params, stage1, result.omega);
  std::printf("omega=%.6g\nwrote %s\n", result.omega, ckpt.string().c_str());
  return kOk;
}

int run(const Globals& g, const std::string& data, std::string checkpoint) {
  if (checkpoint.empty()) {
    const fs::path dsf = fs::path(g.out) / ptp::kDsfFile;
    checkpoint = (fs::exists(dsf) ? dsf : fs::path(g.out) / ptp::kStage1File).string();
  }
  const ptp::Checkpoint ckpt = ptp::read_checkpoint(checkpoint);
  ptp::RunConfig c = g.config_path.empty() ? config_from_checkpoint(ckpt) : load_config(g);
  if (g.seed) c.seed = *g.seed;
  const json meta = json::parse(ckpt.metadata, nullptr, false);
  const bool has_dsf = !meta.is_discarded() && meta.value("stage", "") == "dsf";
  if (c.sampling == ptp::Sampling::kDsf && !has_dsf) {
    std::fprintf(stderr, "note: %s has no trained DSF, sampling at random\n", checkpoint.c_str());
    c.sampling = ptp::Sampling::kRandom;
  }
  const auto scenes = ptp::load_dataset(dataset_dir(c, g, data));
  std::string tracks, forecasts;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto result = ptp::run_inference(c, ckpt.params, scenes[s]);
    tracks += ptp::tracks_to_jsonl(result, s);
    forecasts += ptp::forecasts_to_jsonl(result, s);
  }
  fs::create_directories(g.out);
  spit(fs::path(g.out) / ptp::kTracksFile, tracks);
  spit(fs::path(g.out) / ptp::kForecastsFile, forecasts);
  std::printf("wrote %s and %s for %zu scenes\n", ptp::kTracksFile, ptp::kForecastsFile, scenes.size());
  return kOk;
}

int evaluate(const Globals& g, const std::string& data, std::string tracks, std::string forecasts) {
  const ptp::RunConfig c = load_config(g);
  const auto scenes = ptp::load_dataset(dataset_dir(c, g, data));
  if (tracks.empty()) tracks = (fs::path(g.out) / ptp::kTracksFile).string();
  if (forecasts.empty()) forecasts = (fs::path(g.out) / ptp::kForecastsFile).string();
  std::vector<std::size_t> frames;
  for (const auto& s : scenes) frames.push_back(s.frames.size());
  const auto predicted = ptp::tracks_from_jsonl(slurp(tracks), frames);
  std::optional<std::vector<ptp::ForecastRecord>> fc;
  if (fs::exists(forecasts)) fc = ptp::forecasts_from_jsonl(slurp(forecasts));
  const auto report = ptp::evaluate(c, scenes, predicted, fc);
  fs::create_directories(g.out);
  const std::string text = ptp::report_to_json(report);
  spit(fs::path(g.out) / ptp::kReportFile, text);
  spit(fs::path(g.out) / ptp::kCurvesFile, ptp::curves_to_csv(report.integrated));
  std::fputs(text.c_str(), stdout);
  return kOk;
}

// Bird's-eye SVG of one frame: ground truth (grey), tracks (blue, labelled)
// and forecast samples (orange).
int export_plot(const Globals& g, const std::string& data, std::size_t scene, std::size_t frame) {
  const ptp::RunConfig c = load_config(g);
  const auto scenes = ptp::load_dataset(dataset_dir(c, g, data));
  if (scene >= scenes.size() || frame >= scenes[scene].frames.size()) {
    throw ptp::DataError("export-plot: scene/frame out of range");
  }
  std::vector<std::size_t> frames;
  for (const auto& s : scenes) frames.push_back(s.frames.size());
  const fs::path tracks_path = fs::path(g.out) / ptp::kTracksFile;
  const fs::path fc_path = fs::path(g.out) / ptp::kForecastsFile;
  std::vector<ptp::TrackedBox> tracked;
  if (fs::exists(tracks_path)) tracked = ptp::tracks_from_jsonl(slurp(tracks_path), frames)[scene][frame];
  std::vector<ptp::ForecastRecord> fc;
  if (fs::exists(fc_path))
    for (auto& r : ptp::forecasts_from_jsonl(slurp(fc_path)))
      if (r.scene == scene && r.frame == frame) fc.push_back(std::move(r));

  const double half = c.generator.extent + 30.0;
  const double px = 10.0;
  auto sx = [&](double x) { return (x + half) * px; };
  auto sz = [&](double z) { return (half - z) * px; };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * half * px << "\" height=\"" << 2 * half * px
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto polygon = [&](const ptp::Box& b, const char* colour) {
    svg << "<polygon fill=\"none\" stroke=\"" << colour << "\" points=\"";
    for (const auto& p : ptp::footprint(b)) svg << sx(p[0]) << ',' << sz(p[1]) << ' ';
    svg << "\"/>\n";
  };
  for (const auto& o : scenes[scene].frames[frame].objects) polygon(o.box, "grey");
  for (const auto& t : tracked) {
    polygon(t.box, "steelblue");
    svg << "<text x=\"" << sx(t.box.x) << "\" y=\"" << sz(t.box.z) << "\" font-size=\"10\">" << t.id << "</text>\n";
  }
  for (const auto& r : fc) {
    svg << "<polyline fill=\"none\" stroke=\"darkorange\" stroke-opacity=\"0.5\" points=\"";
    for (const auto& p : r.trajectory) svg << sx(p.x) << ',' << sz(p.z) << ' ';
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  fs::create_directories(g.out);
  const fs::path out = fs::path(g.out) / ("plot_" + std::to_string(scene) + "_" + std::to_string(frame) + ".svg");
  spit(out, svg.str());
  std::printf("wrote %s\n", out.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint 3D tracking and trajectory forecasting"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "RunConfig JSON file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Overrides the config seed");
  app.add_option("--out", g.out, "Artifact directory");

  std::string data, stage1, checkpoint, tracks, forecasts;
  std::size_t scene = 0, frame = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic scenes under OUT/scenes");
  auto* tr = app.add_subcommand("train", "Stage 1: joint tracking and CVAE training");
  tr->add_option("--data", data, "Scene directory");
  auto* dsf = app.add_subcommand("train-dsf", "Stage 2: DSF training on a frozen stage-1 model");
  dsf->add_option("--data", data, "Scene directory");
  dsf->add_option("--stage1", stage1, "Stage-1 checkpoint");
  auto* rn = app.add_subcommand("run", "Track and forecast every scene");
  rn->add_option("--data", data, "Scene directory");
  rn->add_option("--checkpoint", checkpoint, "Checkpoint (default: OUT/ckpt_dsf.bin, else stage 1)");
  auto* ev = app.add_subcommand("evaluate", "Score tracking and forecast outputs");
  ev->add_option("--data", data, "Ground-truth scene directory");
  ev->add_option("--tracks", tracks, "Tracking output JSONL");
  ev->add_option("--forecasts", forecasts, "Forecast output JSONL");
  auto* plot = app.add_subcommand("export-plot", "Write a bird's-eye SVG of one frame");
  plot->add_option("--data", data, "Scene directory");
  plot->add_option("--scene", scene, "Scene index");
  plot->add_option("--frame", frame, "Frame index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  if (seed_opt->count()) g.seed = seed;

  try {
    if (gen->parsed()) return gen_data(g);
    if (tr->parsed()) return train(g, data);
    if (dsf->parsed()) return train_dsf(g, data, stage1);
    if (rn->parsed()) return run(g, data, checkpoint);
    if (ev->parsed()) return evaluate(g, data, tracks, forecasts);
    if (plot->parsed()) return export_plot(g, data, scene, frame);
  } catch (const ptp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const ptp::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
