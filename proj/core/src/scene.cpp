#include "ptp/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "ptp/errors.hpp"

namespace ptp {

using nlohmann::json;

const ObjectState* Frame::find(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

double wrap_angle(double theta) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double t = std::fmod(theta, kTwoPi);
  if (t <= -std::numbers::pi) t += kTwoPi;
  if (t > std::numbers::pi) t -= kTwoPi;
  return t;
}

const char* maneuver_name(Maneuver m) {
  switch (m) {
    case Maneuver::kStraight: return "straight";
    case Maneuver::kLeftTurn: return "left";
    case Maneuver::kRightTurn: return "right";
    case Maneuver::kStop: return "stop";
  }
  return "straight";
}

namespace {

Maneuver maneuver_from_name(const std::string& s) {
  if (s == "straight") return Maneuver::kStraight;
  if (s == "left") return Maneuver::kLeftTurn;
  if (s == "right") return Maneuver::kRightTurn;
  if (s == "stop") return Maneuver::kStop;
  throw ConfigError("unknown maneuver '" + s + "'");
}

Maneuver draw_maneuver(const ManeuverMix& mix, std::mt19937_64& rng) {
  std::discrete_distribution<int> pick({mix.straight, mix.left, mix.right, mix.stop});
  return static_cast<Maneuver>(pick(rng));
}

struct AgentSim {
  AgentSpec spec;
  double l, w, h;
};

}  // namespace

int GeneratorConfig::frame_count() const {
  return static_cast<int>(std::llround(duration * frame_rate));
}

void validate(const GeneratorConfig& c) {
  if (!(c.frame_rate > 0.0)) throw ConfigError("frame_rate must be positive");
  if (!(c.duration > 0.0) || c.frame_count() <= 0) throw ConfigError("duration must be positive");
  if (c.agents.empty() && (c.max_agents <= 0 || c.min_agents <= 0)) {
    throw ConfigError("agent count range must be positive");
  }
  if (c.min_agents > c.max_agents) throw ConfigError("min_agents exceeds max_agents");
  if (c.history < 1 || c.horizon < 1) throw ConfigError("history and horizon must be >= 1");
  if (c.frame_count() < c.history + c.horizon) {
    throw ConfigError("scene has " + std::to_string(c.frame_count()) + " frames, needs >= H+T = " +
                      std::to_string(c.history + c.horizon));
  }
  if (c.min_speed < 0.0 || c.max_speed < c.min_speed) throw ConfigError("invalid speed range");
  const auto& m = c.mix;
  if (m.straight < 0 || m.left < 0 || m.right < 0 || m.stop < 0 ||
      m.straight + m.left + m.right + m.stop <= 0.0) {
    throw ConfigError("maneuver mix must be non-negative with positive total");
  }
  if (!(c.extent > 0.0)) throw ConfigError("extent must be positive");
  if (c.birth_fraction < 0 || c.birth_fraction > 1 || c.death_fraction < 0 || c.death_fraction > 1) {
    throw ConfigError("birth/death fractions must be in [0, 1]");
  }
}

namespace {

// Per-frame (x, z, heading) of one agent over [birth, end).
struct Path {
  int birth = 0;
  std::vector<std::array<double, 3>> poses;
};

Path simulate(const AgentSpec& spec, const GeneratorConfig& config, int frames, int decision) {
  const double dt = 1.0 / config.frame_rate;
  const double turn_frames = (std::numbers::pi / 2.0) / config.turn_rate / dt;
  const int end = spec.death_frame < 0 ? frames : std::min(spec.death_frame, frames);
  double x = spec.x, z = spec.z, heading = spec.heading, speed = spec.speed;
  const double brake = spec.speed / config.stop_time;
  Path path;
  path.birth = spec.birth_frame;
  for (int f = spec.birth_frame; f < end; ++f) {
    path.poses.push_back({x, z, wrap_angle(heading)});
    if (f >= decision) {
      const double since = f - decision;
      switch (spec.maneuver) {
        case Maneuver::kStraight: break;
        case Maneuver::kLeftTurn:
          if (since < turn_frames) heading += config.turn_rate * dt;
          break;
        case Maneuver::kRightTurn:
          if (since < turn_frames) heading -= config.turn_rate * dt;
          break;
        case Maneuver::kStop:
          speed = std::max(0.0, speed - brake * dt);
          break;
      }
    }
    x += speed * std::cos(heading) * dt;
    z += speed * std::sin(heading) * dt;
  }
  return path;
}

double closest_approach(const Path& a, const Path& b) {
  double best = std::numeric_limits<double>::infinity();
  const int lo = std::max(a.birth, b.birth);
  const int hi = std::min(a.birth + static_cast<int>(a.poses.size()), b.birth + static_cast<int>(b.poses.size()));
  for (int f = lo; f < hi; ++f) {
    const auto& p = a.poses[static_cast<std::size_t>(f - a.birth)];
    const auto& q = b.poses[static_cast<std::size_t>(f - b.birth)];
    best = std::min(best, std::hypot(p[0] - q[0], p[1] - q[1]));
  }
  return best;
}

}  // namespace

Scene generate_scene(const GeneratorConfig& config, std::uint64_t seed) {
  validate(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int frames = config.frame_count();
  const int decision = config.decision_frame >= 0 ? config.decision_frame : frames / 2;

  std::vector<AgentSim> agents;
  std::vector<Path> paths;
  if (!config.agents.empty()) {
    for (const auto& spec : config.agents) {
      agents.push_back({spec, uniform(3.5, 4.8), uniform(1.6, 2.0), uniform(1.4, 1.8)});
      paths.push_back(simulate(spec, config, frames, decision));
    }
  } else {
    // Agents keep min_spacing from each other in every frame; a draw that
    // cannot be placed after a bounded number of attempts is dropped.
    const int count = std::uniform_int_distribution<int>(config.min_agents, config.max_agents)(rng);
    for (int a = 0; a < count; ++a) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        AgentSpec s;
        s.x = uniform(-config.extent, config.extent);
        s.z = uniform(-config.extent, config.extent);
        s.heading = wrap_angle(uniform(-std::numbers::pi, std::numbers::pi));
        s.speed = uniform(config.min_speed, config.max_speed);
        s.maneuver = draw_maneuver(config.mix, rng);
        if (unit(rng) < config.birth_fraction) {
          s.birth_frame = std::uniform_int_distribution<int>(1, std::max(1, frames / 2))(rng);
        }
        if (unit(rng) < config.death_fraction) {
          s.death_frame =
              std::uniform_int_distribution<int>(frames / 2 + 1, std::max(frames / 2 + 1, frames - 1))(rng);
        }
        Path path = simulate(s, config, frames, decision);
        const bool clear = std::all_of(paths.begin(), paths.end(), [&](const Path& o) {
          return closest_approach(path, o) >= config.min_spacing;
        });
        if (!clear) continue;
        agents.push_back({s, uniform(3.5, 4.8), uniform(1.6, 2.0), uniform(1.4, 1.8)});
        paths.push_back(std::move(path));
        break;
      }
    }
  }

  Scene scene;
  scene.frame_rate = config.frame_rate;
  scene.seed = seed;
  scene.generator = config;
  scene.frames.resize(static_cast<std::size_t>(frames));
  for (std::size_t a = 0; a < agents.size(); ++a) {
    const auto& ag = agents[a];
    for (std::size_t k = 0; k < paths[a].poses.size(); ++k) {
      const auto& p = paths[a].poses[k];
      ObjectState s;
      s.id = static_cast<int>(a) + 1;
      s.box = Box{p[0], ag.h / 2.0, p[1], ag.l, ag.w, ag.h, p[2]};
      scene.frames[static_cast<std::size_t>(paths[a].birth) + k].objects.push_back(s);
    }
  }
  return scene;
}

Scene corrupt_to_detections(Scene scene, const NoiseConfig& noise) {
  auto in_unit = [](double r) { return r >= 0.0 && r < 1.0; };
  if (noise.center_sigma < 0.0 || noise.heading_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  if (!in_unit(noise.miss_rate) && noise.miss_rate != 1.0) throw ConfigError("miss_rate must be in [0, 1]");
  if (!in_unit(noise.false_positive_rate)) throw ConfigError("false_positive_rate must be in [0, 1)");

  std::mt19937_64 rng(noise.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double extent = scene.generator.extent;

  for (auto& frame : scene.frames) {
    frame.detections.clear();
    for (const auto& obj : frame.objects) {
      if (unit(rng) < noise.miss_rate) continue;
      const double dx = noise.center_sigma * normal(rng);
      const double dz = noise.center_sigma * normal(rng);
      const double dh = noise.heading_sigma * normal(rng);
      Detection d;
      d.box = obj.box;
      d.box.x += dx;
      d.box.z += dz;
      d.box.theta = wrap_angle(d.box.theta + dh);
      d.confidence = noise.center_sigma > 0.0
                         ? std::clamp(std::exp(-std::hypot(dx, dz) / noise.center_sigma), 0.0, 1.0)
                         : 1.0;
      d.source_id = obj.id;
      frame.detections.push_back(d);
    }
    for (std::size_t k = 0; k < frame.objects.size(); ++k) {
      if (!(unit(rng) < noise.false_positive_rate)) continue;
      Detection d;
      const double h = 1.4 + 0.4 * unit(rng);
      d.box = Box{-extent + 2.0 * extent * unit(rng), h / 2.0, -extent + 2.0 * extent * unit(rng),
                  3.5 + 1.3 * unit(rng), 1.6 + 0.4 * unit(rng), h,
                  wrap_angle(-std::numbers::pi + 2.0 * std::numbers::pi * unit(rng))};
      d.confidence = 0.4 * unit(rng);
      d.source_id = -1;
      frame.detections.push_back(d);
    }
    std::shuffle(frame.detections.begin(), frame.detections.end(), rng);
  }
  scene.noise = noise;
  return scene;
}

Scene perfect_detections(Scene scene) {
  return corrupt_to_detections(std::move(scene), NoiseConfig{});
}

// ---------------------------------------------------------------------------
// JSONL serialization

namespace {

json box_json(const Box& b) {
  return {{"x", b.x}, {"y", b.y}, {"z", b.z}, {"l", b.l}, {"w", b.w}, {"h", b.h}, {"theta", b.theta}};
}

Box box_from(const json& j) {
  return Box{j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(),
             j.at("l").get<double>(), j.at("w").get<double>(), j.at("h").get<double>(),
             j.at("theta").get<double>()};
}

json generator_json(const GeneratorConfig& c) {
  json agents = json::array();
  for (const auto& a : c.agents) {
    agents.push_back({{"x", a.x}, {"z", a.z}, {"heading", a.heading}, {"speed", a.speed},
                      {"maneuver", maneuver_name(a.maneuver)}, {"birth_frame", a.birth_frame},
                      {"death_frame", a.death_frame}});
  }
  return {{"min_agents", c.min_agents},
          {"max_agents", c.max_agents},
          {"duration", c.duration},
          {"frame_rate", c.frame_rate},
          {"mix", {{"straight", c.mix.straight}, {"left", c.mix.left}, {"right", c.mix.right}, {"stop", c.mix.stop}}},
          {"min_speed", c.min_speed},
          {"max_speed", c.max_speed},
          {"extent", c.extent},
          {"min_spacing", c.min_spacing},
          {"turn_rate", c.turn_rate},
          {"stop_time", c.stop_time},
          {"birth_fraction", c.birth_fraction},
          {"death_fraction", c.death_fraction},
          {"decision_frame", c.decision_frame},
          {"history", c.history},
          {"horizon", c.horizon},
          {"agents", agents}};
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

GeneratorConfig generator_from(const json& j) {
  GeneratorConfig c;
  read_opt(j, "min_agents", c.min_agents);
  read_opt(j, "max_agents", c.max_agents);
  read_opt(j, "duration", c.duration);
  read_opt(j, "frame_rate", c.frame_rate);
  if (j.contains("mix")) {
    const auto& m = j.at("mix");
    read_opt(m, "straight", c.mix.straight);
    read_opt(m, "left", c.mix.left);
    read_opt(m, "right", c.mix.right);
    read_opt(m, "stop", c.mix.stop);
  }
  read_opt(j, "min_speed", c.min_speed);
  read_opt(j, "max_speed", c.max_speed);
  read_opt(j, "extent", c.extent);
  read_opt(j, "min_spacing", c.min_spacing);
  read_opt(j, "turn_rate", c.turn_rate);
  read_opt(j, "stop_time", c.stop_time);
  read_opt(j, "birth_fraction", c.birth_fraction);
  read_opt(j, "death_fraction", c.death_fraction);
  read_opt(j, "decision_frame", c.decision_frame);
  read_opt(j, "history", c.history);
  read_opt(j, "horizon", c.horizon);
  if (j.contains("agents")) {
    for (const auto& a : j.at("agents")) {
      AgentSpec s;
      read_opt(a, "x", s.x);
      read_opt(a, "z", s.z);
      read_opt(a, "heading", s.heading);
      read_opt(a, "speed", s.speed);
      if (a.contains("maneuver")) s.maneuver = maneuver_from_name(a.at("maneuver").get<std::string>());
      read_opt(a, "birth_frame", s.birth_frame);
      read_opt(a, "death_frame", s.death_frame);
      c.agents.push_back(s);
    }
  }
  return c;
}

json noise_json(const NoiseConfig& n) {
  return {{"center_sigma", n.center_sigma}, {"heading_sigma", n.heading_sigma},
          {"miss_rate", n.miss_rate}, {"false_positive_rate", n.false_positive_rate},
          {"seed", n.seed}};
}

NoiseConfig noise_from(const json& j) {
  NoiseConfig n;
  read_opt(j, "center_sigma", n.center_sigma);
  read_opt(j, "heading_sigma", n.heading_sigma);
  read_opt(j, "miss_rate", n.miss_rate);
  read_opt(j, "false_positive_rate", n.false_positive_rate);
  read_opt(j, "seed", n.seed);
  return n;
}

}  // namespace

std::string generator_config_to_json(const GeneratorConfig& config) { return generator_json(config).dump(); }

GeneratorConfig generator_config_from_json(const std::string& text) {
  try {
    return generator_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
}

std::string noise_config_to_json(const NoiseConfig& config) { return noise_json(config).dump(); }

NoiseConfig noise_config_from_json(const std::string& text) {
  try {
    return noise_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("noise config: ") + e.what());
  }
}

std::string scene_to_string(const Scene& scene) {
  std::ostringstream out;
  json config = {{"generator", generator_json(scene.generator)}};
  if (scene.noise) config["noise"] = noise_json(*scene.noise);
  json meta = {{"version", kSceneFormatVersion},
               {"frame_rate", scene.frame_rate},
               {"seed", scene.seed},
               {"num_frames", scene.frames.size()},
               {"config", config}};
  out << meta.dump() << '\n';
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const auto& frame = scene.frames[f];
    json gt = json::array();
    for (const auto& o : frame.objects) {
      json j = box_json(o.box);
      j["id"] = o.id;
      gt.push_back(std::move(j));
    }
    json det = json::array();
    for (const auto& d : frame.detections) {
      json j = box_json(d.box);
      j["conf"] = d.confidence;
      j["src"] = d.source_id;
      det.push_back(std::move(j));
    }
    out << json{{"frame", f}, {"gt", gt}, {"det", det}}.dump() << '\n';
  }
  return out.str();
}

Scene scene_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Scene scene;
  bool have_meta = false;
  std::optional<std::size_t> expected_frames;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_meta) {
        const int version = j.at("version").get<int>();
        if (version != kSceneFormatVersion) {
          throw ParseError("unsupported scene version " + std::to_string(version), line_no);
        }
        scene.frame_rate = j.at("frame_rate").get<double>();
        scene.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("num_frames")) expected_frames = j.at("num_frames").get<std::size_t>();
        if (j.contains("config")) {
          const auto& c = j.at("config");
          if (c.contains("generator")) scene.generator = generator_from(c.at("generator"));
          if (c.contains("noise")) scene.noise = noise_from(c.at("noise"));
        }
        have_meta = true;
        continue;
      }
      const auto frame_index = j.at("frame").get<std::size_t>();
      if (frame_index != scene.frames.size()) {
        throw ParseError("expected frame " + std::to_string(scene.frames.size()) + ", got " +
                             std::to_string(frame_index),
                         line_no);
      }
      Frame frame;
      for (const auto& g : j.at("gt")) frame.objects.push_back({box_from(g), g.at("id").get<int>()});
      for (const auto& d : j.at("det")) {
        Detection det;
        det.box = box_from(d);
        det.confidence = d.at("conf").get<double>();
        if (d.contains("src")) det.source_id = d.at("src").get<int>();
        frame.detections.push_back(det);
      }
      scene.frames.push_back(std::move(frame));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!have_meta) throw ParseError("missing metadata record", line_no + 1);
  if (expected_frames && *expected_frames != scene.frames.size()) {
    throw ParseError("expected " + std::to_string(*expected_frames) + " frames, found " +
                         std::to_string(scene.frames.size()),
                     line_no + 1);
  }
  return scene;
}

void write_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << scene_to_string(scene);
}

Scene read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return scene_from_string(buf.str());
}

}  // namespace ptp
