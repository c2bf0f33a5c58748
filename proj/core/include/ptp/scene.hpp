#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ptp {

// Oriented 3D box. The ground plane is (x, z); y is the vertical axis and
// heading rotates the length axis to (cos theta, sin theta) in (x, z).
struct Box {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  double theta = 0.0;

  friend bool operator==(const Box&, const Box&) = default;
};

struct ObjectState {
  Box box;
  int id = 0;

  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct Detection {
  Box box;
  double confidence = 1.0;
  // Ground-truth identity the detection was sampled from, -1 for clutter.
  // Used only to build training targets, never as a network input.
  int source_id = -1;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct Frame {
  std::vector<ObjectState> objects;
  std::vector<Detection> detections;

  friend bool operator==(const Frame&, const Frame&) = default;
  const ObjectState* find(int id) const;
};

// Wraps into (-pi, pi].
double wrap_angle(double theta);

enum class Maneuver { kStraight, kLeftTurn, kRightTurn, kStop };

const char* maneuver_name(Maneuver m);

struct AgentSpec {
  double x = 0.0;
  double z = 0.0;
  double heading = 0.0;
  double speed = 5.0;
  Maneuver maneuver = Maneuver::kStraight;
  int birth_frame = 0;
  int death_frame = -1;  // -1: lives until the end

  friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

struct ManeuverMix {
  double straight = 0.4;
  double left = 0.2;
  double right = 0.2;
  double stop = 0.2;

  friend bool operator==(const ManeuverMix&, const ManeuverMix&) = default;
};

struct GeneratorConfig {
  int min_agents = 4;
  int max_agents = 8;
  double duration = 6.0;    // seconds
  double frame_rate = 10.0; // Hz
  ManeuverMix mix;
  double min_speed = 4.0;   // m/s
  double max_speed = 10.0;
  double extent = 30.0;     // agents spawn in [-extent, extent]^2
  double min_spacing = 6.0; // minimum center distance between agents in any frame
  double turn_rate = 0.5;   // rad/s during a turn
  double stop_time = 1.5;   // seconds to brake to rest
  double birth_fraction = 0.2;
  double death_fraction = 0.2;
  int decision_frame = -1;  // -1: middle of the scene
  int history = 10;         // H, used for validation
  int horizon = 30;         // T, used for validation
  // When non-empty, replaces random spawning.
  std::vector<AgentSpec> agents;

  int frame_count() const;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct NoiseConfig {
  double center_sigma = 0.0;   // m, applied to x and z
  double heading_sigma = 0.0;  // rad
  double miss_rate = 0.0;
  double false_positive_rate = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

struct Scene {
  double frame_rate = 10.0;
  std::uint64_t seed = 0;
  GeneratorConfig generator;
  std::optional<NoiseConfig> noise;
  std::vector<Frame> frames;

  friend bool operator==(const Scene&, const Scene&) = default;
};

// Throws ConfigError on infeasible configs.
void validate(const GeneratorConfig& config);
Scene generate_scene(const GeneratorConfig& config, std::uint64_t seed);

// Replaces every frame's detections with noisy copies of the ground truth
// plus uniformly placed clutter.
Scene corrupt_to_detections(Scene scene, const NoiseConfig& noise);

// Detections equal to the ground truth with confidence 1.
Scene perfect_detections(Scene scene);

// JSONL: metadata line, then one line per frame.
inline constexpr int kSceneFormatVersion = 1;
void write_scene(const Scene& scene, const std::filesystem::path& path);
Scene read_scene(const std::filesystem::path& path);
std::string scene_to_string(const Scene& scene);
Scene scene_from_string(const std::string& text);

// JSON objects as embedded in the scene metadata. Missing fields keep defaults.
std::string generator_config_to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const std::string& text);
std::string noise_config_to_json(const NoiseConfig& config);
NoiseConfig noise_config_from_json(const std::string& text);

}  // namespace ptp
