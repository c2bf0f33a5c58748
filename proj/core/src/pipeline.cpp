#include "ptp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ptp/errors.hpp"
#include "ptp/layers.hpp"

namespace ptp {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

CvaeConfig RunConfig::cvae() const { return {horizon, latent_dim, 64, alpha}; }

DsfConfig RunConfig::dsf() const { return {samples, latent_dim, 128, omega > 0.0 ? omega : 1.0, quality_radius}; }

TrackerConfig RunConfig::tracker() const { return {min_hits, max_age, history}; }

namespace {

const std::set<std::string> kConfigKeys = {
    "history",        "horizon",         "graph_threshold", "gnn_layers",      "samples",
    "latent_dim",     "alpha",           "omega",           "quality_radius",  "min_hits",
    "max_age",        "accept_threshold", "learning_rate",  "epochs",          "dsf_epochs",
    "affinity_weight", "forecast_weight", "augment_shift", "sampling",       "seed",            "dataset",
    "stage1_checkpoint", "num_scenes",   "generator",       "noise",           "iou_threshold",
    "recall_steps"};

const std::set<std::string> kGeneratorKeys = {
    "min_agents", "max_agents", "duration",       "frame_rate",     "mix",            "min_speed",
    "max_speed",  "extent",     "min_spacing",    "turn_rate",      "stop_time",      "birth_fraction",
    "death_fraction", "decision_frame", "history", "horizon",      "agents"};

const std::set<std::string> kMixKeys = {"straight", "left", "right", "stop"};
const std::set<std::string> kAgentKeys = {"x",        "z",           "heading",    "speed",
                                          "maneuver", "birth_frame", "death_frame"};
const std::set<std::string> kNoiseKeys = {"center_sigma", "heading_sigma", "miss_rate",
                                          "false_positive_rate", "seed"};

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

const char* sampling_name(Sampling s) { return s == Sampling::kDsf ? "dsf" : "random"; }

}  // namespace

void validate(const RunConfig& c) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(std::string("config: ") + msg);
  };
  require(c.history >= 1, "history must be >= 1");
  require(c.horizon >= 1, "horizon must be >= 1");
  require(c.graph_threshold > 0.0, "graph_threshold must be positive");
  require(c.samples >= 1, "samples must be >= 1");
  require(c.latent_dim >= 1, "latent_dim must be >= 1");
  require(c.alpha > 0.0, "alpha must be positive");
  require(c.omega >= 0.0, "omega must be >= 0");
  require(c.quality_radius >= 0.0, "quality_radius must be >= 0");
  require(c.min_hits >= 1, "min_hits must be >= 1");
  require(c.max_age >= 0, "max_age must be >= 0");
  require(c.accept_threshold >= 0.0 && c.accept_threshold <= 1.0, "accept_threshold must be in [0, 1]");
  require(c.learning_rate > 0.0, "learning_rate must be positive");
  require(c.epochs >= 0 && c.dsf_epochs >= 0, "epochs must be >= 0");
  require(c.affinity_weight >= 0.0 && c.forecast_weight >= 0.0, "loss weights must be >= 0");
  require(c.augment_shift >= 0.0, "augment_shift must be >= 0");
  require(c.num_scenes >= 1, "num_scenes must be >= 1");
  require(c.iou_threshold > 0.0 && c.iou_threshold <= 1.0, "iou_threshold must be in (0, 1]");
  require(c.recall_steps >= 2, "recall_steps must be >= 2");
  validate(c.generator);
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  reject_unknown(j, kConfigKeys, "config");
  RunConfig c;
  read_key(j, "history", c.history);
  read_key(j, "horizon", c.horizon);
  read_key(j, "graph_threshold", c.graph_threshold);
  read_key(j, "gnn_layers", c.gnn_layers);
  read_key(j, "samples", c.samples);
  read_key(j, "latent_dim", c.latent_dim);
  read_key(j, "alpha", c.alpha);
  read_key(j, "omega", c.omega);
  read_key(j, "quality_radius", c.quality_radius);
  read_key(j, "min_hits", c.min_hits);
  read_key(j, "max_age", c.max_age);
  read_key(j, "accept_threshold", c.accept_threshold);
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "epochs", c.epochs);
  read_key(j, "dsf_epochs", c.dsf_epochs);
  read_key(j, "affinity_weight", c.affinity_weight);
  read_key(j, "forecast_weight", c.forecast_weight);
  read_key(j, "augment_shift", c.augment_shift);
  read_key(j, "seed", c.seed);
  read_key(j, "dataset", c.dataset);
  read_key(j, "stage1_checkpoint", c.stage1_checkpoint);
  read_key(j, "num_scenes", c.num_scenes);
  read_key(j, "iou_threshold", c.iou_threshold);
  read_key(j, "recall_steps", c.recall_steps);
  if (j.contains("sampling")) {
    std::string s;
    read_key(j, "sampling", s);
    if (s == "dsf") c.sampling = Sampling::kDsf;
    else if (s == "random") c.sampling = Sampling::kRandom;
    else throw ConfigError("config: sampling must be \"dsf\" or \"random\"");
  }
  if (j.contains("generator")) {
    const json& g = j.at("generator");
    reject_unknown(g, kGeneratorKeys, "config.generator");
    if (g.contains("mix")) reject_unknown(g.at("mix"), kMixKeys, "config.generator.mix");
    if (g.contains("agents")) {
      if (!g.at("agents").is_array()) throw ConfigError("config.generator.agents: expected an array");
      for (const auto& a : g.at("agents")) reject_unknown(a, kAgentKeys, "config.generator.agents[]");
    }
    try {
      c.generator = generator_config_from_json(g.dump());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("noise")) {
    reject_unknown(j.at("noise"), kNoiseKeys, "config.noise");
    c.noise = noise_config_from_json(j.at("noise").dump());
  }
  c.generator.history = static_cast<int>(c.history);
  c.generator.horizon = static_cast<int>(c.horizon);
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

std::string run_config_to_json(const RunConfig& c) {
  json j = {{"history", c.history},
            {"horizon", c.horizon},
            {"graph_threshold", c.graph_threshold},
            {"gnn_layers", c.gnn_layers},
            {"samples", c.samples},
            {"latent_dim", c.latent_dim},
            {"alpha", c.alpha},
            {"omega", c.omega},
            {"quality_radius", c.quality_radius},
            {"min_hits", c.min_hits},
            {"max_age", c.max_age},
            {"accept_threshold", c.accept_threshold},
            {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"dsf_epochs", c.dsf_epochs},
            {"affinity_weight", c.affinity_weight},
            {"forecast_weight", c.forecast_weight},
            {"augment_shift", c.augment_shift},
            {"sampling", sampling_name(c.sampling)},
            {"seed", c.seed},
            {"dataset", c.dataset},
            {"stage1_checkpoint", c.stage1_checkpoint},
            {"num_scenes", c.num_scenes},
            {"generator", json::parse(generator_config_to_json(c.generator))},
            {"noise", json::parse(noise_config_to_json(c.noise))},
            {"iou_threshold", c.iou_threshold},
            {"recall_steps", c.recall_steps}};
  return j.dump(2);
}

ParamStore init_model(const RunConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore store;
  init_encoder_params(store, rng);
  init_gnn_params(store, config.gnn_layers, rng);
  init_mot_params(store, rng);
  init_cvae_params(store, config.cvae(), rng);
  init_dsf_params(store, config.dsf(), rng);
  return store;
}

// ---------------------------------------------------------------------------
// Forward pass

FrameForward forward_frame(Tape& tape, const ParamStore& params, const RunConfig& config,
                           std::span<const PastTrajectory> tracks, std::span<const Detection> detections) {
  std::vector<Box> boxes;
  boxes.reserve(detections.size());
  for (const auto& d : detections) boxes.push_back(d.box);
  std::vector<Point3> track_pos, det_pos;
  for (const auto& t : tracks) track_pos.push_back(node_position(t));
  for (const auto& b : boxes) det_pos.push_back(node_position(b));

  FrameForward out;
  out.graph = build_graph(track_pos, det_pos, config.graph_threshold);
  out.track_features = encode_tracks(tape, params, tracks, config.history);
  Var dets = encode_detections(tape, params, boxes);
  out.final = propagate(tape, params, out.graph, {out.track_features, dets}, config.gnn_layers);
  if (out.graph.track_det.empty()) {
    out.affinity = tape.constant(NumArray(tracks.size(), detections.size()));
  } else {
    out.affinity = affinity(tape, params, edge_features(out.final, out.graph), out.graph);
  }
  out.context = make_context(out.final.tracks, out.track_features, tracks);
  return out;
}

// ---------------------------------------------------------------------------
// Training data

std::optional<Trajectory2D> gt_future(const Scene& scene, int id, std::size_t frame, std::size_t horizon) {
  if (frame + horizon >= scene.frames.size()) return std::nullopt;
  Trajectory2D out;
  out.reserve(horizon);
  for (std::size_t k = 1; k <= horizon; ++k) {
    const ObjectState* o = scene.frames[frame + k].find(id);
    if (!o) return std::nullopt;
    out.push_back({o->box.x, o->box.z});
  }
  return out;
}

namespace {

const Detection* detection_of(const Frame& f, int id) {
  for (const auto& d : f.detections)
    if (d.source_id == id) return &d;
  return nullptr;
}

}  // namespace

std::optional<TrainingFrame> make_training_frame(const Scene& scene, std::size_t frame,
                                                 std::size_t history, std::size_t horizon) {
  if (frame == 0 || frame >= scene.frames.size()) return std::nullopt;
  TrainingFrame tf;
  tf.frame = frame;
  const Frame& prev = scene.frames[frame - 1];
  for (const auto& obj : prev.objects) {
    PastTrajectory past;
    past.id = obj.id;
    for (std::size_t back = 0; back < history && back < frame; ++back) {
      const Frame& f = scene.frames[frame - 1 - back];
      const ObjectState* o = f.find(obj.id);
      if (!o) break;
      const Detection* d = detection_of(f, obj.id);
      past.states.push_back(d ? d->box : o->box);
    }
    std::reverse(past.states.begin(), past.states.end());
    tf.tracks.push_back(std::move(past));
  }
  if (tf.tracks.empty()) return std::nullopt;
  tf.detections = scene.frames[frame].detections;

  std::vector<int> ids, sources;
  for (const auto& t : tf.tracks) ids.push_back(t.id);
  for (const auto& d : tf.detections) sources.push_back(d.source_id);
  tf.gt_affinity = gt_affinity(ids, sources);

  std::vector<Trajectory2D> futures;
  for (std::size_t i = 0; i < tf.tracks.size(); ++i) {
    if (auto f = gt_future(scene, tf.tracks[i].id, frame, horizon)) {
      tf.future_rows.push_back(i);
      futures.push_back(std::move(*f));
    }
  }
  tf.futures = NumArray(futures.size(), 2 * horizon);
  for (std::size_t r = 0; r < futures.size(); ++r) {
    for (std::size_t k = 0; k < horizon; ++k) {
      tf.futures(r, 2 * k) = futures[r][k].x;
      tf.futures(r, 2 * k + 1) = futures[r][k].z;
    }
  }
  return tf;
}

std::vector<TrainingFrame> training_frames(const Scene& scene, std::size_t history, std::size_t horizon) {
  std::vector<TrainingFrame> out;
  for (std::size_t t = 1; t < scene.frames.size(); ++t)
    if (auto tf = make_training_frame(scene, t, history, horizon)) out.push_back(std::move(*tf));
  return out;
}

namespace {

NumArray take_rows(const NumArray& src, const std::vector<std::size_t>& rows) {
  NumArray out(rows.size(), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) out(r, c) = src(rows[r], c);
  return out;
}

ForecastContext subset(const ForecastContext& ctx, const std::vector<std::size_t>& rows) {
  return {gather_rows(ctx.node_feature, rows), gather_rows(ctx.past_summary, rows),
          take_rows(ctx.last_position, rows), take_rows(ctx.last_displacement, rows)};
}

// Context rows detached from any tape.
struct ContextValues {
  NumArray node_feature;
  NumArray past_summary;
  NumArray last_position;
  NumArray last_displacement;
};

ContextValues detach(const ForecastContext& ctx) {
  return {ctx.node_feature.value(), ctx.past_summary.value(), ctx.last_position, ctx.last_displacement};
}

ForecastContext attach(Tape& tape, const ContextValues& v) {
  return {tape.constant(v.node_feature), tape.constant(v.past_summary), v.last_position, v.last_displacement};
}

std::vector<std::vector<TrainingFrame>> all_training_frames(const RunConfig& config,
                                                             const std::vector<Scene>& scenes) {
  std::vector<std::vector<TrainingFrame>> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(training_frames(s, config.history, config.horizon));
  return out;
}

TrainingFrame shifted(const TrainingFrame& tf, double dx, double dz) {
  TrainingFrame out = tf;
  for (auto& t : out.tracks)
    for (auto& b : t.states) {
      b.x += dx;
      b.z += dz;
    }
  for (auto& d : out.detections) {
    d.box.x += dx;
    d.box.z += dz;
  }
  for (std::size_t r = 0; r < out.futures.rows(); ++r)
    for (std::size_t c = 0; c < out.futures.cols(); c += 2) {
      out.futures(r, c) += dx;
      out.futures(r, c + 1) += dz;
    }
  return out;
}

std::string stage1_metadata(const RunConfig& config) {
  return json{{"stage", "stage1"}, {"config", json::parse(run_config_to_json(config))}}.dump();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage 1

TrainResult train_stage1(const RunConfig& config, const std::vector<Scene>& scenes, ParamStore params,
                         const EpochCallback& on_epoch, const std::filesystem::path& failure_checkpoint) {
  validate(config);
  const auto frames = all_training_frames(config, scenes);
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (std::size_t s = 0; s < frames.size(); ++s)
    for (std::size_t f = 0; f < frames[s].size(); ++f) order.emplace_back(s, f);

  const CvaeConfig cvae = config.cvae();
  const AdamConfig adam{config.learning_rate};
  Rng shuffle_rng(config.seed ^ 0x5bd1e995ULL);
  Rng eps_rng(config.seed ^ 0x27d4eb2fULL);
  Rng shift_rng(config.seed ^ 0x9e3779b9ULL);
  std::uniform_real_distribution<double> shift(-config.augment_shift, config.augment_shift);
  params.set_trainable_prefixes({"enc.", "gnn.", "mot.", "cvae."});

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLoss log;
    std::size_t aff_steps = 0, fc_steps = 0;
    for (const auto& [s, f] : order) {
      std::optional<TrainingFrame> moved;
      if (config.augment_shift > 0.0) {
        const double dx = shift(shift_rng);
        moved = shifted(frames[s][f], dx, shift(shift_rng));
      }
      const TrainingFrame& tf = moved ? *moved : frames[s][f];
      try {
        Tape tape;
        FrameForward fw = forward_frame(tape, params, config, tf.tracks, tf.detections);
        std::vector<Var> terms;
        if (config.affinity_weight > 0.0 && !tf.detections.empty()) {
          AffinityLoss aff = affinity_loss(tape, fw.affinity, tf.gt_affinity);
          terms.push_back(scale(aff.total, config.affinity_weight));
          log.affinity += aff.total.value().item();
          ++aff_steps;
        }
        if (config.forecast_weight > 0.0 && !tf.future_rows.empty()) {
          ForecastContext ctx = subset(fw.context, tf.future_rows);
          ElboTerms elbo = elbo_loss(tape, params, cvae, tf.futures, ctx, eps_rng);
          terms.push_back(scale(elbo.total, config.forecast_weight));
          log.forecast += elbo.total.value().item();
          ++fc_steps;
        }
        if (terms.empty()) continue;
        Var total = terms.size() == 1 ? terms[0] : terms[0] + terms[1];
        GradientMap grads = tape.backward(total, params);
        sgd_adam_step(params, grads, adam);
        ++log.steps;
      } catch (const NumericError&) {
        if (!failure_checkpoint.empty()) save_stage1(failure_checkpoint, config, params);
        throw;
      }
    }
    if (aff_steps) log.affinity /= static_cast<double>(aff_steps);
    if (fc_steps) log.forecast /= static_cast<double>(fc_steps);
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(epoch, log);
  }
  params.set_trainable_prefixes({});
  result.params = std::move(params);
  return result;
}

TrainResult train_stage1(const RunConfig& config, const std::vector<Scene>& scenes,
                         const EpochCallback& on_epoch) {
  return train_stage1(config, scenes, init_model(config, config.seed), on_epoch);
}

void save_stage1(const std::filesystem::path& path, const RunConfig& config, const ParamStore& params) {
  write_checkpoint(path, params, stage1_metadata(config));
}

// ---------------------------------------------------------------------------
// Stage 2

namespace {

struct CachedFrame {
  ContextValues context;  // rows with complete futures only
  NumArray futures;
};

std::vector<CachedFrame> cache_contexts(const RunConfig& config, const std::vector<Scene>& scenes,
                                        const ParamStore& params) {
  std::vector<CachedFrame> out;
  for (const auto& scene : scenes) {
    for (const auto& tf : training_frames(scene, config.history, config.horizon)) {
      if (tf.future_rows.empty()) continue;
      Tape tape;
      FrameForward fw = forward_frame(tape, params, config, tf.tracks, tf.detections);
      out.push_back({detach(subset(fw.context, tf.future_rows)), tf.futures});
    }
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  return v[mid];
}

double omega_from_cache(const RunConfig& config, const std::vector<CachedFrame>& cache,
                        const ParamStore& params) {
  constexpr std::size_t kWarmupFrames = 32;
  const std::size_t k = std::max<std::size_t>(config.samples, 2);
  Rng rng(config.seed ^ 0x165667b1ULL);
  std::vector<double> dists;
  for (std::size_t f = 0; f < cache.size() && f < kWarmupFrames; ++f) {
    Tape tape;
    ForecastContext ctx = attach(tape, cache[f].context);
    const NumArray samples = sample_random(tape, params, config.cvae(), ctx, k, rng).value();
    for (std::size_t a = 0; a < ctx.agents(); ++a) {
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t q = p + 1; q < k; ++q) {
          double d = 0.0;
          for (std::size_t c = 0; c < samples.cols(); ++c) {
            const double diff = samples(a * k + p, c) - samples(a * k + q, c);
            d += diff * diff;
          }
          dists.push_back(d);
        }
      }
    }
  }
  const double med = median(std::move(dists));
  return med > 0.0 ? 1.0 / med : 1.0;
}

std::vector<std::string> frozen_names(const ParamStore& params) {
  std::vector<std::string> out;
  for (const auto& name : params.names())
    if (name.rfind("dsf.", 0) != 0) out.push_back(name);
  return out;
}

void check_frozen(const ParamStore& now, const ParamStore& stage1) {
  for (const auto& name : frozen_names(stage1)) {
    if (!now.contains(name) || !(now.value(name) == stage1.value(name))) {
      throw ContractError("stage 2 modified frozen parameter '" + name + "'");
    }
  }
}

}  // namespace

double estimate_omega(const RunConfig& config, const std::vector<Scene>& scenes, const ParamStore& params) {
  return omega_from_cache(config, cache_contexts(config, scenes, params), params);
}

DsfTrainResult train_stage2_dsf(const RunConfig& config, const std::vector<Scene>& scenes,
                                const ParamStore& stage1, const EpochCallback& on_epoch) {
  validate(config);
  if (config.samples < 2) throw ConfigError("train-dsf: samples must be >= 2");
  ParamStore params = stage1;
  params.set_trainable_prefixes({"dsf."});
  const auto cache = cache_contexts(config, scenes, params);

  DsfTrainResult result;
  result.omega = config.omega > 0.0 ? config.omega : omega_from_cache(config, cache, params);
  DsfConfig dsf = config.dsf();
  dsf.omega = result.omega;
  const CvaeConfig cvae = config.cvae();
  const AdamConfig adam{config.learning_rate};
  Rng shuffle_rng(config.seed ^ 0x85ebca6bULL);
  std::vector<std::size_t> order(cache.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.dsf_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLoss log;
    for (std::size_t idx : order) {
      Tape tape;
      ForecastContext ctx = attach(tape, cache[idx].context);
      DsfLossTerms terms = dsf_loss(tape, params, dsf, cvae, ctx, cache[idx].futures);
      GradientMap grads = tape.backward(terms.total, params);
      sgd_adam_step(params, grads, adam);
      log.dsf += terms.total.value().item();
      ++log.steps;
    }
    if (log.steps) log.dsf /= static_cast<double>(log.steps);
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(epoch, log);
  }
  check_frozen(params, stage1);
  params.set_trainable_prefixes({});
  result.params = std::move(params);
  return result;
}

void save_stage2(const std::filesystem::path& path, const RunConfig& config, const ParamStore& params,
                 const ParamStore& stage1, const std::filesystem::path& stage1_path, double omega) {
  check_frozen(params, stage1);
  const std::uint64_t hash = fnv1a64(read_file_bytes(stage1_path));
  const json meta = {{"stage", "dsf"},
                     {"stage1_hash", hex64(hash)},
                     {"omega", omega},
                     {"config", json::parse(run_config_to_json(config))}};
  write_checkpoint(path, params, meta.dump());
}

// ---------------------------------------------------------------------------
// Inference

namespace {

Trajectory2D row_trajectory(const NumArray& flat, std::size_t row) {
  Trajectory2D t(flat.cols() / 2);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = {flat(row, 2 * k), flat(row, 2 * k + 1)};
  return t;
}

Rng frame_rng(std::uint64_t seed, std::size_t frame) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame), 0x9e3779b9U};
  return Rng(seq);
}

Association oracle_association(std::span<const TrackState> tracks, std::span<const Detection> dets,
                               const std::map<int, int>& track_to_gt) {
  Association a;
  std::vector<bool> det_used(dets.size(), false);
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    auto it = track_to_gt.find(tracks[i].id);
    bool matched = false;
    if (it != track_to_gt.end() && it->second >= 0) {
      for (std::size_t j = 0; j < dets.size(); ++j) {
        if (!det_used[j] && dets[j].source_id == it->second) {
          a.matches.emplace_back(i, j);
          det_used[j] = true;
          matched = true;
          break;
        }
      }
    }
    if (!matched) a.unmatched_tracks.push_back(i);
  }
  for (std::size_t j = 0; j < dets.size(); ++j)
    if (!det_used[j]) a.unmatched_dets.push_back(j);
  return a;
}

}  // namespace

InferenceResult run_inference(const RunConfig& config, const ParamStore& params, const Scene& scene,
                              const InferenceOptions& options) {
  validate(config);
  Tracker tracker(config.tracker());
  InferenceResult result;
  result.tracks.resize(scene.frames.size());
  const CvaeConfig cvae = config.cvae();
  const DsfConfig dsf = config.dsf();
  std::map<int, int> track_to_gt;  // oracle mode only

  for (std::size_t t = 0; t < scene.frames.size(); ++t) {
    const auto& dets = scene.frames[t].detections;
    const auto& live = tracker.tracks();
    std::vector<PastTrajectory> pasts;
    pasts.reserve(live.size());
    for (const auto& tr : live) pasts.push_back(tr.past);

    FrameResult fr;
    fr.frame = t;
    for (const auto& tr : live) fr.track_ids_before.push_back(tr.id);

    if (!pasts.empty() || !dets.empty()) {
      Tape tape;
      FrameForward fw = forward_frame(tape, params, config, pasts, dets);
      if (options.oracle_affinity) {
        fr.association = oracle_association(live, dets, track_to_gt);
      } else {
        fr.association = associate(fw.affinity.value(), config.accept_threshold);
      }
      if (options.forecast && !pasts.empty()) {
        NumArray samples;
        std::size_t k = config.samples;
        if (config.sampling == Sampling::kDsf) {
          samples = sample_dsf(tape, params, dsf, cvae, fw.context).value();
        } else {
          Rng rng = frame_rng(config.seed, t);
          samples = sample_random(tape, params, cvae, fw.context, k, rng).value();
        }
        for (std::size_t i = 0; i < pasts.size(); ++i) {
          TrackForecast tf{pasts[i].id, {}};
          for (std::size_t s = 0; s < k; ++s) tf.samples.push_back(row_trajectory(samples, i * k + s));
          fr.forecasts.push_back(std::move(tf));
        }
      }
    }
    if (options.association_hook) options.association_hook(t, fr.association);

    tracker.step(dets, fr.association);
    if (options.oracle_affinity) {
      for (const auto& tr : tracker.tracks()) {
        if (!track_to_gt.count(tr.id) && tr.updated) {
          // A newborn track inherits the identity of the detection it was born from.
          const Box& b = tr.past.last();
          for (const auto& d : dets)
            if (d.box == b) track_to_gt[tr.id] = d.source_id;
        }
      }
    }
    for (const TrackState* tr : tracker.reportable()) {
      TrackedBox tb{tr->id, tr->past.last(), tr->score};
      fr.reported.push_back(tb);
      result.tracks[t].push_back(tb);
    }
    result.frames.push_back(std::move(fr));
  }
  return result;
}

namespace {

json box_fields(json j, const Box& b) {
  j["x"] = b.x;
  j["y"] = b.y;
  j["z"] = b.z;
  j["l"] = b.l;
  j["w"] = b.w;
  j["h"] = b.h;
  j["theta"] = b.theta;
  return j;
}

}  // namespace

std::string tracks_to_jsonl(const InferenceResult& result, std::size_t scene_index) {
  std::ostringstream out;
  for (std::size_t t = 0; t < result.tracks.size(); ++t) {
    for (const auto& tb : result.tracks[t]) {
      json j = {{"scene", scene_index}, {"frame", t}, {"id", tb.id}};
      j = box_fields(std::move(j), tb.box);
      j["score"] = tb.score;
      out << j.dump() << '\n';
    }
  }
  return out.str();
}

std::string forecasts_to_jsonl(const InferenceResult& result, std::size_t scene_index) {
  std::ostringstream out;
  for (const auto& fr : result.frames) {
    for (const auto& tf : fr.forecasts) {
      for (std::size_t s = 0; s < tf.samples.size(); ++s) {
        json traj = json::array();
        for (const auto& p : tf.samples[s]) traj.push_back({p.x, p.z});
        out << json{{"scene", scene_index}, {"frame", fr.frame}, {"id", tf.id}, {"sample_index", s},
                    {"trajectory", traj}}
                   .dump()
            << '\n';
      }
    }
  }
  return out.str();
}

namespace {

template <typename F>
void for_each_line(const std::string& text, F&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      fn(j, number);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), number);
    }
  }
}

}  // namespace

std::vector<FrameTracks> tracks_from_jsonl(const std::string& text,
                                           const std::vector<std::size_t>& frames_per_scene) {
  std::vector<FrameTracks> out(frames_per_scene.size());
  for (std::size_t s = 0; s < out.size(); ++s) out[s].resize(frames_per_scene[s]);
  std::set<std::pair<std::size_t, std::size_t>> bad;
  for_each_line(text, [&](const json& j, std::size_t) {
    const std::size_t scene = j.value("scene", std::size_t{0});
    const std::size_t frame = j.at("frame").get<std::size_t>();
    if (scene >= out.size() || frame >= out[scene].size()) {
      bad.emplace(scene, frame);
      return;
    }
    TrackedBox tb;
    tb.id = j.at("id").get<int>();
    tb.box = Box{j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(),
                 j.at("l").get<double>(), j.at("w").get<double>(), j.at("h").get<double>(),
                 j.at("theta").get<double>()};
    tb.score = j.at("score").get<double>();
    out[scene][frame].push_back(tb);
  });
  if (!bad.empty()) {
    std::string msg = "tracking output frames not present in the ground truth:";
    for (const auto& [s, f] : bad) msg += " " + std::to_string(s) + ":" + std::to_string(f);
    throw DataError(msg);
  }
  return out;
}

std::vector<ForecastRecord> forecasts_from_jsonl(const std::string& text) {
  std::vector<ForecastRecord> out;
  for_each_line(text, [&](const json& j, std::size_t) {
    ForecastRecord r;
    r.scene = j.value("scene", std::size_t{0});
    r.frame = j.at("frame").get<std::size_t>();
    r.id = j.at("id").get<int>();
    r.sample_index = j.at("sample_index").get<std::size_t>();
    for (const auto& p : j.at("trajectory")) r.trajectory.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    out.push_back(std::move(r));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

constexpr int kSceneIdStride = 1'000'000;

// Predicted id -> GT id at one frame, by maximum-IoU assignment above the gate.
std::map<int, int> match_frame(const std::vector<TrackedBox>& pred, const std::vector<TrackedBox>& gt,
                               double iou_threshold) {
  std::map<int, int> out;
  if (pred.empty() || gt.empty()) return out;
  NumArray w(pred.size(), gt.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double iou = iou3d(pred[i].box, gt[j].box);
      w(i, j) = iou >= iou_threshold ? iou : 0.0;
    }
  const auto assign = hungarian_max(w);
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (assign[i] >= 0 && w(i, static_cast<std::size_t>(assign[i])) > 0.0)
      out[pred[i].id] = gt[static_cast<std::size_t>(assign[i])].id;
  return out;
}

}  // namespace

EvaluationReport evaluate(const RunConfig& config, const std::vector<Scene>& gt,
                          const std::vector<FrameTracks>& tracks,
                          const std::optional<std::vector<ForecastRecord>>& forecasts) {
  if (tracks.size() != gt.size()) {
    throw DataError("evaluate: " + std::to_string(tracks.size()) + " tracked scenes for " +
                    std::to_string(gt.size()) + " ground-truth scenes");
  }
  std::vector<std::string> misaligned;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    if (tracks[s].size() != gt[s].frames.size()) {
      for (std::size_t f = gt[s].frames.size(); f < tracks[s].size(); ++f)
        misaligned.push_back(std::to_string(s) + ":" + std::to_string(f));
      if (tracks[s].size() < gt[s].frames.size())
        misaligned.push_back(std::to_string(s) + ":" + std::to_string(tracks[s].size()) + "-" +
                             std::to_string(gt[s].frames.size() - 1) + " missing");
    }
  }
  if (!misaligned.empty()) {
    std::string msg = "evaluate: misaligned frames:";
    for (const auto& m : misaligned) msg += " " + m;
    throw DataError(msg);
  }

  FrameTracks all_gt, all_pred;
  std::vector<FrameTracks> gt_tracks;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    gt_tracks.push_back(ground_truth_tracks(gt[s]));
    const int offset = static_cast<int>(s) * kSceneIdStride;
    for (std::size_t f = 0; f < gt[s].frames.size(); ++f) {
      auto g = gt_tracks[s][f];
      for (auto& tb : g) tb.id += offset;
      all_gt.push_back(std::move(g));
      auto p = tracks[s][f];
      for (auto& tb : p) tb.id += offset;
      all_pred.push_back(std::move(p));
    }
  }

  EvaluationReport report;
  const ClearReport clear = clear_metrics(all_gt, all_pred, config.iou_threshold);
  report.integrated = integrated_metrics(all_gt, all_pred, config.recall_steps, config.iou_threshold);
  report.mot = mot_report(clear, report.integrated);

  if (forecasts) {
    // (scene, frame, id) -> samples ordered by index.
    std::map<std::tuple<std::size_t, std::size_t, int>, std::map<std::size_t, Trajectory2D>> grouped;
    for (const auto& r : *forecasts) {
      if (r.scene >= gt.size() || r.frame >= gt[r.scene].frames.size()) {
        throw DataError("evaluate: forecast for frame " + std::to_string(r.scene) + ":" +
                        std::to_string(r.frame) + " not present in the ground truth");
      }
      grouped[{r.scene, r.frame, r.id}][r.sample_index] = r.trajectory;
    }
    std::map<std::pair<std::size_t, std::size_t>, std::map<int, int>> matches;
    std::vector<std::vector<Trajectory2D>> samples;
    std::vector<Trajectory2D> futures;
    for (const auto& [key, by_index] : grouped) {
      const auto& [s, f, id] = key;
      if (f == 0 || by_index.empty()) continue;
      auto mk = std::make_pair(s, f - 1);
      auto it = matches.find(mk);
      if (it == matches.end())
        it = matches.emplace(mk, match_frame(tracks[s][f - 1], gt_tracks[s][f - 1], config.iou_threshold)).first;
      auto m = it->second.find(id);
      if (m == it->second.end()) continue;
      const std::size_t horizon = by_index.begin()->second.size();
      auto fut = gt_future(gt[s], m->second, f, horizon);
      if (!fut) continue;
      std::vector<Trajectory2D> ks;
      for (const auto& [_, traj] : by_index) {
        if (traj.size() != horizon) throw DataError("evaluate: forecast samples differ in length");
        ks.push_back(traj);
      }
      samples.push_back(std::move(ks));
      futures.push_back(std::move(*fut));
    }
    report.forecast = forecast_metrics(samples, futures);
  }
  return report;
}

std::string report_to_json(const EvaluationReport& r) {
  json mot = {{"sAMOTA", r.mot.samota}, {"AMOTA", r.mot.amota}, {"AMOTP", r.mot.amotp},
              {"MOTA", r.mot.mota},     {"MOTP", r.mot.motp},   {"IDS", r.mot.ids},
              {"FP", r.mot.fp},         {"FN", r.mot.fn},       {"num_gt", r.mot.num_gt}};
  json j = {{"mot", mot}};
  if (r.forecast) {
    json fc = {{"ADE", r.forecast->ade}, {"FDE", r.forecast->fde}, {"agents", r.forecast->agents}};
    if (r.forecast->asd) fc["ASD"] = *r.forecast->asd;
    if (r.forecast->fsd) fc["FSD"] = *r.forecast->fsd;
    j["forecast"] = fc;
  }
  return j.dump(2) + "\n";
}

std::string curves_to_csv(const IntegratedReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "target_recall,achieved_recall,threshold,mota,smota,motp\n";
  for (const auto& p : report.curve) {
    out << p.target_recall << ',' << p.achieved_recall << ',' << p.threshold << ',' << p.mota << ','
        << p.smota << ',' << p.motp << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Ablation probes

double association_accuracy(const RunConfig& config, const ParamStore& params,
                            const std::vector<Scene>& scenes) {
  std::size_t correct = 0, total = 0;
  for (const auto& scene : scenes) {
    for (const auto& tf : training_frames(scene, config.history, config.horizon)) {
      Tape tape;
      FrameForward fw = forward_frame(tape, params, config, tf.tracks, tf.detections);
      const Association a = associate(fw.affinity.value(), config.accept_threshold);
      std::vector<int> chosen(tf.tracks.size(), -1);
      for (const auto& [i, j] : a.matches) chosen[i] = static_cast<int>(j);
      for (std::size_t i = 0; i < tf.tracks.size(); ++i) {
        int truth = -1;
        for (std::size_t j = 0; j < tf.detections.size(); ++j)
          if (tf.gt_affinity(i, j) == 1.0) truth = static_cast<int>(j);
        correct += chosen[i] == truth ? 1 : 0;
        ++total;
      }
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

ForecastReport forecast_quality(const RunConfig& config, const ParamStore& params,
                                const std::vector<Scene>& scenes, Sampling sampling,
                                const std::function<bool(std::size_t)>& frame_filter) {
  std::vector<std::vector<Trajectory2D>> samples;
  std::vector<Trajectory2D> futures;
  const CvaeConfig cvae = config.cvae();
  const DsfConfig dsf = config.dsf();
  const std::size_t k = config.samples;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (const auto& tf : training_frames(scenes[s], config.history, config.horizon)) {
      if (tf.future_rows.empty()) continue;
      if (frame_filter && !frame_filter(tf.frame)) continue;
      Tape tape;
      FrameForward fw = forward_frame(tape, params, config, tf.tracks, tf.detections);
      ForecastContext ctx = subset(fw.context, tf.future_rows);
      NumArray out;
      if (sampling == Sampling::kDsf) {
        out = sample_dsf(tape, params, dsf, cvae, ctx).value();
      } else {
        Rng rng = frame_rng(config.seed + s, tf.frame);
        out = sample_random(tape, params, cvae, ctx, k, rng).value();
      }
      for (std::size_t a = 0; a < tf.future_rows.size(); ++a) {
        std::vector<Trajectory2D> ks;
        for (std::size_t q = 0; q < k; ++q) ks.push_back(row_trajectory(out, a * k + q));
        samples.push_back(std::move(ks));
        futures.push_back(row_trajectory(tf.futures, a));
      }
    }
  }
  return forecast_metrics(samples, futures);
}

// ---------------------------------------------------------------------------
// Datasets

std::vector<Scene> generate_dataset(const RunConfig& config, std::uint64_t seed) {
  std::vector<Scene> scenes(static_cast<std::size_t>(config.num_scenes));
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), scenes.size()));
  auto work = [&](std::size_t first) {
    for (std::size_t s = first; s < scenes.size(); s += workers) {
      Scene scene = generate_scene(config.generator, seed + s);
      NoiseConfig noise = config.noise;
      noise.seed = config.noise.seed + seed + s;
      scenes[s] = corrupt_to_detections(std::move(scene), noise);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  return scenes;
}

std::vector<Scene> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("dataset directory has no .jsonl scenes: " + dir.string());
  std::vector<Scene> out;
  for (const auto& f : files) out.push_back(read_scene(f));
  return out;
}

}  // namespace ptp
