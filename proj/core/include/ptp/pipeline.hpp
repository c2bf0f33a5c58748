#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ptp/cvae.hpp"
#include "ptp/dsf.hpp"
#include "ptp/eval.hpp"
#include "ptp/gnn.hpp"
#include "ptp/mot.hpp"
#include "ptp/scene.hpp"

namespace ptp {

enum class Sampling { kDsf, kRandom };

struct RunConfig {
  // model
  std::size_t history = 10;        // H
  std::size_t horizon = 30;        // T
  double graph_threshold = 10.0;   // C, meters
  std::size_t gnn_layers = 2;      // L
  std::size_t samples = 20;        // K
  std::size_t latent_dim = 16;     // D_z
  double alpha = 1.0;
  double omega = 0.0;              // 0: estimate from a warm-up batch
  double quality_radius = 2.0;     // R
  // tracking
  int min_hits = 3;                // F_min
  int max_age = 2;                 // Age_max
  double accept_threshold = 0.5;
  // optimization
  double learning_rate = 1e-3;
  int epochs = 10;
  int dsf_epochs = 10;
  double affinity_weight = 1.0;
  double forecast_weight = 1.0;
  double augment_shift = 0.0;      // meters; random ground-plane shift per training frame
  Sampling sampling = Sampling::kDsf;
  std::uint64_t seed = 0;
  // data
  std::string dataset;             // directory of scene files
  std::string stage1_checkpoint;
  int num_scenes = 20;
  GeneratorConfig generator;
  NoiseConfig noise;
  // evaluation
  double iou_threshold = kDefaultIouThreshold;
  int recall_steps = kDefaultRecallSteps;

  CvaeConfig cvae() const;
  DsfConfig dsf() const;
  TrackerConfig tracker() const;
};

// Throws ConfigError on unknown keys or invalid values.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);
void validate(const RunConfig& config);

// All parameters of the network: encoders, GNN, tracking head, CVAE and DSF.
ParamStore init_model(const RunConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Per-frame forward pass shared by training and inference.

struct FrameForward {
  InteractionGraph graph;
  Var track_features;   // u^0
  NodeFeatures final;   // u^L, v^L
  Var affinity;         // M x N
  ForecastContext context;
};

FrameForward forward_frame(Tape& tape, const ParamStore& params, const RunConfig& config,
                           std::span<const PastTrajectory> tracks, std::span<const Detection> detections);

// One optimization example: GT-identity past trajectories ending at frame t-1,
// the detections of frame t and the targets for both heads.
struct TrainingFrame {
  std::size_t frame = 0;
  std::vector<PastTrajectory> tracks;
  std::vector<Detection> detections;
  NumArray gt_affinity;                 // M x N
  std::vector<std::size_t> future_rows; // tracks whose next T frames all exist
  NumArray futures;                     // |future_rows| x 2T
};

std::optional<TrainingFrame> make_training_frame(const Scene& scene, std::size_t frame,
                                                 std::size_t history, std::size_t horizon);
std::vector<TrainingFrame> training_frames(const Scene& scene, std::size_t history, std::size_t horizon);

// Ground-truth (x, z) positions of `id` at frames t+1 .. t+T.
std::optional<Trajectory2D> gt_future(const Scene& scene, int id, std::size_t frame, std::size_t horizon);

struct EpochLoss {
  double affinity = 0.0;
  double forecast = 0.0;
  double dsf = 0.0;
  std::size_t steps = 0;
};

struct TrainResult {
  ParamStore params;
  std::vector<EpochLoss> epochs;
};

using EpochCallback = std::function<void(int epoch, const EpochLoss&)>;

// Joint L_aff + L_cvae training, one frame per step. On a numeric failure the
// last good parameters are written to `failure_checkpoint` (if set) and the
// NumericError is rethrown.
TrainResult train_stage1(const RunConfig& config, const std::vector<Scene>& scenes,
                         ParamStore params, const EpochCallback& on_epoch = {},
                         const std::filesystem::path& failure_checkpoint = {});
TrainResult train_stage1(const RunConfig& config, const std::vector<Scene>& scenes,
                         const EpochCallback& on_epoch = {});

// Trains only "dsf.*" on the frozen stage-1 network. The similarity scale is
// estimated when config.omega == 0 and returned in the result.
struct DsfTrainResult {
  ParamStore params;
  std::vector<EpochLoss> epochs;
  double omega = 0.0;
};
DsfTrainResult train_stage2_dsf(const RunConfig& config, const std::vector<Scene>& scenes,
                                const ParamStore& stage1, const EpochCallback& on_epoch = {});

// 1 / median pairwise squared distance between prior samples of the same agent.
double estimate_omega(const RunConfig& config, const std::vector<Scene>& scenes, const ParamStore& params);

// Checkpoint helpers: stage-1 metadata records the config; stage-2 metadata
// additionally embeds the FNV-1a hash of the stage-1 checkpoint bytes.
void save_stage1(const std::filesystem::path& path, const RunConfig& config, const ParamStore& params);
void save_stage2(const std::filesystem::path& path, const RunConfig& config, const ParamStore& params,
                 const ParamStore& stage1, const std::filesystem::path& stage1_path, double omega);

// ---------------------------------------------------------------------------
// Inference

struct TrackForecast {
  int id = 0;
  std::vector<Trajectory2D> samples;
};

struct FrameResult {
  std::size_t frame = 0;
  std::vector<int> track_ids_before;   // tracks that existed before association
  Association association;
  std::vector<TrackForecast> forecasts;  // one per track in track_ids_before
  std::vector<TrackedBox> reported;    // tracker output for this frame
};

struct InferenceOptions {
  // Called between association and the tracker update. Lets tests perturb the
  // association without touching the forecasting branch.
  std::function<void(std::size_t frame, Association&)> association_hook;
  // Ground-truth association instead of learned affinity (lifecycle checks).
  bool oracle_affinity = false;
  bool forecast = true;
};

struct InferenceResult {
  std::vector<FrameResult> frames;
  FrameTracks tracks;  // reported boxes per frame
};

InferenceResult run_inference(const RunConfig& config, const ParamStore& params, const Scene& scene,
                              const InferenceOptions& options = {});

// One JSON object per line; `scene` distinguishes scenes of a dataset run.
std::string tracks_to_jsonl(const InferenceResult& result, std::size_t scene_index = 0);
std::string forecasts_to_jsonl(const InferenceResult& result, std::size_t scene_index = 0);

// Groups records by scene. Throws DataError listing every (scene, frame)
// outside the ground truth, and ParseError on malformed lines.
std::vector<FrameTracks> tracks_from_jsonl(const std::string& text,
                                           const std::vector<std::size_t>& frames_per_scene);

struct ForecastRecord {
  std::size_t scene = 0;
  std::size_t frame = 0;
  int id = 0;
  std::size_t sample_index = 0;
  Trajectory2D trajectory;
};
std::vector<ForecastRecord> forecasts_from_jsonl(const std::string& text);

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationReport {
  MotReport mot;
  IntegratedReport integrated;
  std::optional<ForecastReport> forecast;
};

// Scenes are concatenated in time with disjoint identities. Forecasts are
// attributed to ground truth through the reported track box at frame t-1
// (IoU matching); only agents with a complete future are scored.
EvaluationReport evaluate(const RunConfig& config, const std::vector<Scene>& gt,
                          const std::vector<FrameTracks>& tracks,
                          const std::optional<std::vector<ForecastRecord>>& forecasts);

std::string report_to_json(const EvaluationReport& report);
std::string curves_to_csv(const IntegratedReport& report);

// ---------------------------------------------------------------------------
// Ablation probes on teacher-forced frames

// Fraction of tracked objects whose association decision (matched detection
// or no match) equals the ground truth.
double association_accuracy(const RunConfig& config, const ParamStore& params,
                            const std::vector<Scene>& scenes);

// Forecast metrics over every GT agent with a complete future in the frames
// where frame_filter returns true (all frames when empty).
ForecastReport forecast_quality(const RunConfig& config, const ParamStore& params,
                                const std::vector<Scene>& scenes, Sampling sampling,
                                const std::function<bool(std::size_t)>& frame_filter = {});

// Stable filenames under --out.
inline constexpr const char* kStage1File = "ckpt_stage1.bin";
inline constexpr const char* kDsfFile = "ckpt_dsf.bin";
inline constexpr const char* kTracksFile = "tracks.jsonl";
inline constexpr const char* kForecastsFile = "forecasts.jsonl";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kCurvesFile = "curves.csv";

std::vector<Scene> generate_dataset(const RunConfig& config, std::uint64_t seed);
std::vector<Scene> load_dataset(const std::filesystem::path& dir);

}  // namespace ptp
