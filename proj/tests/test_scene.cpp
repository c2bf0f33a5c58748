#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>

#include "ptp/errors.hpp"
#include "ptp/scene.hpp"

namespace ptp {
namespace {

GeneratorConfig small_config() {
  GeneratorConfig c;
  c.duration = 4.0;
  c.history = 10;
  c.horizon = 10;
  return c;
}

TEST(Generator, SameSeedSameBytes) {
  const auto c = small_config();
  EXPECT_EQ(scene_to_string(generate_scene(c, 7)), scene_to_string(generate_scene(c, 7)));
  EXPECT_NE(scene_to_string(generate_scene(c, 7)), scene_to_string(generate_scene(c, 8)));
}

TEST(Generator, StraightOnlyKeepsHeadings) {
  auto c = small_config();
  c.mix = {1.0, 0.0, 0.0, 0.0};
  const Scene s = generate_scene(c, 3);
  std::map<int, double> heading;
  for (const auto& f : s.frames) {
    for (const auto& o : f.objects) {
      auto [it, fresh] = heading.emplace(o.id, o.box.theta);
      if (!fresh) EXPECT_DOUBLE_EQ(it->second, o.box.theta);
    }
  }
  EXPECT_FALSE(heading.empty());
}

TEST(Generator, ParallelAgentsStayApart) {
  auto c = small_config();
  const double threshold = 10.0;
  c.agents = {AgentSpec{0.0, 0.0, 0.3, 6.0, Maneuver::kStraight, 0, -1},
              AgentSpec{0.0, 2.5 * threshold, 0.3, 6.0, Maneuver::kStraight, 0, -1}};
  const Scene s = generate_scene(c, 1);
  double closest = 1e9;
  for (const auto& f : s.frames) {
    ASSERT_EQ(f.objects.size(), 2u);
    closest = std::min(closest, std::hypot(f.objects[0].box.x - f.objects[1].box.x,
                                           f.objects[0].box.z - f.objects[1].box.z));
  }
  EXPECT_GT(closest, threshold);
}

TEST(Generator, InvariantsHold) {
  auto c = small_config();
  c.birth_fraction = 0.5;
  c.death_fraction = 0.5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(c, seed);
    ASSERT_GE(s.frames.size(), static_cast<std::size_t>(c.history + c.horizon));
    std::map<int, std::pair<std::size_t, std::size_t>> span;  // first, last
    std::map<int, std::size_t> count;
    std::map<int, double> height;
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
      std::set<int> ids;
      for (const auto& o : s.frames[t].objects) {
        EXPECT_TRUE(ids.insert(o.id).second) << "duplicate id in frame";
        EXPECT_GT(o.box.l, 0.0);
        EXPECT_GT(o.box.w, 0.0);
        EXPECT_GT(o.box.h, 0.0);
        EXPECT_GT(o.box.theta, -std::numbers::pi);
        EXPECT_LE(o.box.theta, std::numbers::pi);
        auto [it, fresh] = span.emplace(o.id, std::make_pair(t, t));
        if (!fresh) it->second.second = t;
        ++count[o.id];
        auto [h, first] = height.emplace(o.id, o.box.y);
        if (!first) EXPECT_EQ(h->second, o.box.y);
      }
    }
    for (const auto& [id, sp] : span) EXPECT_EQ(sp.second - sp.first + 1, count[id]) << "track not contiguous";
  }
}

TEST(Generator, RandomAgentsKeepSpacingInEveryFrame) {
  auto c = small_config();
  c.min_agents = c.max_agents = 8;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(c, seed);
    for (const auto& f : s.frames)
      for (std::size_t i = 0; i < f.objects.size(); ++i)
        for (std::size_t j = i + 1; j < f.objects.size(); ++j)
          EXPECT_GE(std::hypot(f.objects[i].box.x - f.objects[j].box.x, f.objects[i].box.z - f.objects[j].box.z),
                    c.min_spacing);
  }
}

TEST(Generator, ManeuversProduceDistinctModes) {
  auto c = small_config();
  c.duration = 6.0;
  c.decision_frame = 10;
  std::vector<AgentSpec> specs;
  const Maneuver all[] = {Maneuver::kStraight, Maneuver::kLeftTurn, Maneuver::kRightTurn, Maneuver::kStop};
  for (int k = 0; k < 4; ++k) specs.push_back({40.0 * k, 0.0, 0.0, 8.0, all[k], 0, -1});
  c.agents = specs;
  const Scene s = generate_scene(c, 2);
  const auto& last = s.frames.back().objects;
  ASSERT_EQ(last.size(), 4u);
  EXPECT_DOUBLE_EQ(last[0].box.z, 0.0);
  EXPECT_GT(last[1].box.z, 1.0);
  EXPECT_LT(last[2].box.z, -1.0);
  EXPECT_LT(last[3].box.x - 40.0 * 3, last[0].box.x - 1.0);
}

TEST(Generator, InfeasibleConfigsRejected) {
  auto c = small_config();
  c.max_agents = 0;
  c.min_agents = 0;
  EXPECT_THROW(generate_scene(c, 1), ConfigError);
  c = small_config();
  c.duration = 0.0;
  EXPECT_THROW(generate_scene(c, 1), ConfigError);
  c = small_config();
  c.duration = 1.0;
  EXPECT_THROW(generate_scene(c, 1), ConfigError);
}

TEST(Corruption, ZeroNoiseReproducesGroundTruth) {
  const Scene s = perfect_detections(generate_scene(small_config(), 4));
  for (const auto& f : s.frames) {
    ASSERT_EQ(f.detections.size(), f.objects.size());
    for (const auto& d : f.detections) {
      EXPECT_EQ(d.confidence, 1.0);
      const ObjectState* o = f.find(d.source_id);
      ASSERT_NE(o, nullptr);
      EXPECT_EQ(o->box, d.box);
    }
  }
}

TEST(Corruption, FullMissRateLeavesOnlyClutter) {
  NoiseConfig n;
  n.miss_rate = 1.0;
  n.false_positive_rate = 0.5;
  const Scene s = corrupt_to_detections(generate_scene(small_config(), 5), n);
  std::size_t clutter = 0;
  for (const auto& f : s.frames)
    for (const auto& d : f.detections) {
      EXPECT_EQ(d.source_id, -1);
      EXPECT_GE(d.confidence, 0.0);
      EXPECT_LT(d.confidence, 0.4);
      ++clutter;
    }
  EXPECT_GT(clutter, 0u);
}

TEST(Corruption, MeanCenterErrorMatchesRayleighMean) {
  auto c = small_config();
  c.min_agents = c.max_agents = 8;
  NoiseConfig n;
  n.center_sigma = 0.2;
  double total = 0.0;
  std::size_t boxes = 0;
  for (std::uint64_t seed = 0; boxes < 1000; ++seed) {
    n.seed = seed;
    const Scene s = corrupt_to_detections(generate_scene(c, seed), n);
    for (const auto& f : s.frames)
      for (const auto& d : f.detections) {
        const ObjectState* o = f.find(d.source_id);
        total += std::hypot(d.box.x - o->box.x, d.box.z - o->box.z);
        ++boxes;
      }
  }
  const double expected = n.center_sigma * std::sqrt(std::numbers::pi / 2.0);
  EXPECT_NEAR(total / static_cast<double>(boxes), expected, 0.2 * expected);
}

TEST(Corruption, ConfidenceFallsWithError) {
  NoiseConfig n;
  n.center_sigma = 0.3;
  const Scene s = corrupt_to_detections(generate_scene(small_config(), 6), n);
  for (const auto& f : s.frames)
    for (const auto& d : f.detections) {
      const ObjectState* o = f.find(d.source_id);
      const double err = std::hypot(d.box.x - o->box.x, d.box.z - o->box.z);
      EXPECT_NEAR(d.confidence, std::exp(-err / n.center_sigma), 1e-12);
    }
}

TEST(SceneFile, RoundTripIsExact) {
  NoiseConfig n;
  n.center_sigma = 0.1;
  n.false_positive_rate = 0.2;
  n.miss_rate = 0.1;
  const Scene s = corrupt_to_detections(generate_scene(small_config(), 9), n);
  const auto path = std::filesystem::temp_directory_path() / "ptp_scene_roundtrip.jsonl";
  write_scene(s, path);
  EXPECT_EQ(read_scene(path), s);
  std::filesystem::remove(path);
}

TEST(SceneFile, TruncatedFileIsParseError) {
  const std::string text = scene_to_string(generate_scene(small_config(), 10));
  try {
    scene_from_string(text.substr(0, text.size() / 2));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.line(), 1u);
  }
  const std::size_t cut = text.find('\n', text.size() / 2);
  EXPECT_THROW(scene_from_string(text.substr(0, cut + 1)), ParseError);
}

TEST(SceneFile, GarbageLineReportsItsNumber) {
  std::string text = scene_to_string(generate_scene(small_config(), 11));
  const std::size_t second = text.find('\n') + 1;
  const std::size_t third = text.find('\n', second) + 1;
  text.insert(third, "{not json\n");
  try {
    scene_from_string(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(SceneFile, UnknownFieldsIgnored) {
  const Scene s = generate_scene(small_config(), 12);
  std::string text = scene_to_string(s);
  const std::size_t frame_line = text.find("{\"det\"");
  ASSERT_NE(frame_line, std::string::npos);
  text.insert(frame_line + 1, "\"weather\":\"rain\",");
  text.insert(1, "\"producer\":\"test\",");
  EXPECT_EQ(scene_from_string(text), s);
}

}  // namespace
}  // namespace ptp
