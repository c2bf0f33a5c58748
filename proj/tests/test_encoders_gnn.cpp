#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ptp/encoders.hpp"
#include "ptp/errors.hpp"
#include "ptp/gnn.hpp"
#include "ptp/layers.hpp"
#include "support.hpp"

namespace ptp {
namespace {

Box box_at(double x, double z, double theta = 0.0) { return Box{x, 0.8, z, 4.0, 1.8, 1.6, theta}; }

PastTrajectory straight_track(int id, double x0, double z0, std::size_t len) {
  PastTrajectory p;
  p.id = id;
  for (std::size_t k = 0; k < len; ++k) p.states.push_back(box_at(x0 + 0.5 * static_cast<double>(k), z0));
  return p;
}

ParamStore encoder_store(std::uint64_t seed = 1) {
  Rng rng(seed);
  ParamStore s;
  init_encoder_params(s, rng);
  return s;
}

TEST(Normalize, ReferenceWrapAndTranslation) {
  const auto f = normalize_inputs(box_at(3.0, -2.0), Point3{3.0, 0.8, -2.0});
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[1], 0.0);
  EXPECT_EQ(f[2], 0.0);
  const auto w = normalize_inputs(box_at(0, 0, std::numbers::pi + 0.1), {});
  EXPECT_NEAR(w[6], -std::numbers::pi + 0.1, 1e-12);
  const auto a = normalize_inputs(box_at(1.0, 2.0, 0.3), {0.5, 0.0, 0.5});
  const auto b = normalize_inputs(box_at(11.0, -3.0, 0.3), {10.5, 0.0, -4.5});
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(TrackEncoder, ShapeDeterminismAndMasking) {
  const ParamStore store = encoder_store();
  std::vector<PastTrajectory> tracks = {straight_track(1, 0, 0, 10), straight_track(2, 0, 0, 10),
                                        straight_track(3, 5, 5, 3)};
  Tape tape;
  const NumArray out = encode_tracks(tape, store, tracks, 10).value();
  ASSERT_EQ(out.rows(), 3u);
  ASSERT_EQ(out.cols(), kFeatureDim);
  EXPECT_TRUE(out.all_finite());
  for (std::size_t c = 0; c < kFeatureDim; ++c) EXPECT_EQ(out(0, c), out(1, c));

  // A short track encodes the same alone as in a batch with longer ones.
  Tape solo;
  const NumArray alone = encode_tracks(solo, store, std::span(&tracks[2], 1), 10).value();
  for (std::size_t c = 0; c < kFeatureDim; ++c) EXPECT_NEAR(alone(0, c), out(2, c), 1e-14);
}

TEST(TrackEncoder, LengthOneDiffersFromRepeatedState) {
  const ParamStore store = encoder_store(2);
  PastTrajectory single{1, {box_at(1, 1)}};
  PastTrajectory repeated{1, std::vector<Box>(10, box_at(1, 1))};
  Tape tape;
  const NumArray a = encode_tracks(tape, store, std::span(&single, 1), 10).value();
  const NumArray b = encode_tracks(tape, store, std::span(&repeated, 1), 10).value();
  EXPECT_NE(a, b);
}

TEST(TrackEncoder, EmptyTrajectoryIsContractError) {
  const ParamStore store = encoder_store();
  PastTrajectory empty{1, {}};
  Tape tape;
  EXPECT_THROW(encode_tracks(tape, store, std::span(&empty, 1), 10), ContractError);
}

TEST(DetEncoder, ShapeZeroWeightsAndConfidence) {
  ParamStore store = encoder_store();
  std::vector<Box> dets = {box_at(1, 2), box_at(1, 2), box_at(-3, 4, 1.0)};
  Tape tape;
  const NumArray out = encode_detections(tape, store, dets).value();
  ASSERT_EQ(out.rows(), 3u);
  ASSERT_EQ(out.cols(), kFeatureDim);
  for (std::size_t c = 0; c < kFeatureDim; ++c) EXPECT_EQ(out(0, c), out(1, c));

  for (const auto& name : store.names())
    if (name.rfind("enc.det.", 0) == 0) store.set(name, NumArray(store.value(name).rows(), store.value(name).cols()));
  Tape t2;
  const NumArray zero = encode_detections(t2, store, dets).value();
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(Encoders, DisjointParameterSets) {
  const ParamStore store = encoder_store();
  std::size_t track = 0, det = 0;
  for (const auto& name : store.names()) {
    track += name.rfind("enc.track.", 0) == 0;
    det += name.rfind("enc.det.", 0) == 0;
  }
  EXPECT_GT(track, 0u);
  EXPECT_GT(det, 0u);
  EXPECT_EQ(track + det, store.size());
}

TEST(Graph, DistanceRule) {
  const std::vector<Point3> far_t = {{0, 0, 0}};
  const std::vector<Point3> far_d = {{100, 0, 0}};
  EXPECT_EQ(build_graph(far_t, far_d, 10.0).edge_count(), 0u);
  const std::vector<Point3> same = {{1, 2, 3}};
  EXPECT_TRUE(build_graph(same, same, 10.0).connected(0, 0));
  const std::vector<Point3> t3 = {{0, 0, 0}, {1, 0, 0}, {0, 0, 1}};
  const std::vector<Point3> d2 = {{1, 0, 1}, {2, 0, 0}};
  const auto g = build_graph(t3, d2, 10.0);
  EXPECT_EQ(g.edge_count(), 10u);
  EXPECT_EQ(g.track_track.size(), 3u);
  EXPECT_EQ(g.det_det.size(), 1u);
  EXPECT_EQ(g.track_det.size(), 6u);
  EXPECT_THROW(build_graph(t3, d2, 0.0), ContractError);
  EXPECT_EQ(build_graph({}, {}, 10.0).edge_count(), 0u);
}

TEST(Graph, DistanceIsThreeDimensional) {
  const std::vector<Point3> t = {{0, 0, 0}};
  const std::vector<Point3> d = {{6, 6, 6}};  // planar 8.5, full 10.4
  EXPECT_EQ(build_graph(t, d, 10.0).edge_count(), 0u);
}

TEST(Graph, TranslationLeavesTopologyUnchanged) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-15, 15);
  std::vector<Point3> t(5), d(6);
  for (auto& p : t) p = {u(rng), 0.0, u(rng)};
  for (auto& p : d) p = {u(rng), 0.0, u(rng)};
  auto shifted = [](std::vector<Point3> v) {
    for (auto& p : v) {
      p.x += 123.25;
      p.z -= 77.5;
    }
    return v;
  };
  const auto a = build_graph(t, d, 10.0);
  const auto b = build_graph(shifted(t), shifted(d), 10.0);
  EXPECT_EQ(a.track_track, b.track_track);
  EXPECT_EQ(a.det_det, b.det_det);
  EXPECT_EQ(a.track_det, b.track_det);
}

// 2-d toy instance with hand-set maps: sigma1 = I, sigma2 = 2I, sigma3 = [[0,1],[1,0]], zero bias.
ParamStore toy_store(std::size_t layers) {
  ParamStore s;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "gnn.layer" + std::to_string(l) + ".sigma";
    s.add(p + "1.weight", NumArray::from_rows({{1, 0}, {0, 1}}));
    s.add(p + "2.weight", NumArray::from_rows({{2, 0}, {0, 2}}));
    s.add(p + "3.weight", NumArray::from_rows({{0, 1}, {1, 0}}));
    for (int k = 1; k <= 3; ++k) s.add(p + std::to_string(k) + ".bias", NumArray(1, 2));
  }
  return s;
}

TEST(Propagate, HandComputedTwoNodeGraph) {
  // One track and one detection joined by an edge.
  const std::vector<Point3> tp = {{0, 0, 0}};
  const std::vector<Point3> dp = {{1, 0, 0}};
  const auto g = build_graph(tp, dp, 10.0);
  const ParamStore s = toy_store(1);
  Tape tape;
  const NodeFeatures in{tape.constant(NumArray::row({1, -2})), tape.constant(NumArray::row({3, 0.5}))};
  const NodeFeatures out = propagate(tape, s, g, in, 1);
  // u' = u + 2v = [7, -1], v' = v + 2u = [5, -3.5]; last layer has no ReLU.
  EXPECT_EQ(out.tracks.value(), NumArray::row({7, -1}));
  EXPECT_EQ(out.dets.value(), NumArray::row({5, -3.5}));

  // A second layer applies ReLU to the first: [7, 0] and [5, 0].
  const ParamStore s2 = toy_store(2);
  Tape t2;
  const NodeFeatures in2{t2.constant(NumArray::row({1, -2})), t2.constant(NumArray::row({3, 0.5}))};
  const NodeFeatures out2 = propagate(t2, s2, g, in2, 2);
  EXPECT_EQ(out2.tracks.value(), NumArray::row({17, 0}));
  EXPECT_EQ(out2.dets.value(), NumArray::row({19, 0}));
}

TEST(Propagate, SameTypeNeighboursUseSigma3) {
  const std::vector<Point3> tp = {{0, 0, 0}, {1, 0, 0}};
  const auto g = build_graph(tp, {}, 10.0);
  const ParamStore s = toy_store(1);
  Tape tape;
  const NodeFeatures in{tape.constant(NumArray::from_rows({{1, 2}, {3, 4}})), tape.constant(NumArray(0, 2))};
  const NodeFeatures out = propagate(tape, s, g, in, 1);
  EXPECT_EQ(out.tracks.value(), NumArray::from_rows({{5, 5}, {5, 5}}));
}

TEST(Propagate, IsolatedNodeAndIdentity) {
  Rng rng(4);
  ParamStore s;
  init_gnn_params(s, 2, rng);
  const std::vector<Point3> tp = {{0, 0, 0}, {50, 0, 0}};
  const std::vector<Point3> dp = {{1, 0, 0}};
  const auto g = build_graph(tp, dp, 10.0);
  const NumArray u = testing::random_array(2, kFeatureDim, rng);
  const NumArray v = testing::random_array(1, kFeatureDim, rng);

  Tape t0;
  const NodeFeatures same = propagate(t0, s, g, {t0.constant(u), t0.constant(v)}, 0);
  EXPECT_EQ(same.tracks.value(), u);
  EXPECT_EQ(same.dets.value(), v);

  Tape t1;
  const NumArray base = propagate(t1, s, g, {t1.constant(u), t1.constant(v)}, 2).tracks.value();
  NumArray v2 = v;
  v2[0] += 1.0;
  Tape t2;
  const NumArray moved = propagate(t2, s, g, {t2.constant(u), t2.constant(v2)}, 2).tracks.value();
  bool row0_changed = false;
  for (std::size_t c = 0; c < kFeatureDim; ++c) {
    row0_changed |= base(0, c) != moved(0, c);
    EXPECT_EQ(base(1, c), moved(1, c));  // isolated track
  }
  EXPECT_TRUE(row0_changed);

  // Isolated node after one layer: sigma1 only.
  Tape t3;
  const NumArray one = propagate(t3, s, g, {t3.constant(u), t3.constant(v)}, 1).tracks.value();
  NumArray u1(1, kFeatureDim);
  for (std::size_t c = 0; c < kFeatureDim; ++c) u1(0, c) = u(1, c);
  Tape t4;
  const NumArray self = linear(t4, s, "gnn.layer0.sigma1", t4.constant(u1)).value();
  for (std::size_t c = 0; c < kFeatureDim; ++c) EXPECT_NEAR(one(1, c), self(0, c), 1e-12);
}

TEST(Propagate, PermutationEquivariance) {
  Rng rng(5);
  ParamStore s;
  init_gnn_params(s, 2, rng);
  const std::vector<Point3> tp = {{0, 0, 0}, {3, 0, 1}, {6, 0, -2}};
  const std::vector<Point3> dp = {{1, 0, 0}, {4, 0, 1}};
  const NumArray u = testing::random_array(3, kFeatureDim, rng);
  const NumArray v = testing::random_array(2, kFeatureDim, rng);
  const std::vector<std::size_t> perm = {2, 0, 1};
  std::vector<Point3> tp2;
  NumArray u2(3, kFeatureDim);
  for (std::size_t i = 0; i < 3; ++i) {
    tp2.push_back(tp[perm[i]]);
    for (std::size_t c = 0; c < kFeatureDim; ++c) u2(i, c) = u(perm[i], c);
  }
  Tape ta, tb;
  const NumArray a = propagate(ta, s, build_graph(tp, dp, 10.0), {ta.constant(u), ta.constant(v)}, 2).tracks.value();
  const NumArray b = propagate(tb, s, build_graph(tp2, dp, 10.0), {tb.constant(u2), tb.constant(v)}, 2).tracks.value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < kFeatureDim; ++c) EXPECT_NEAR(b(i, c), a(perm[i], c), 1e-12);
}

TEST(EdgeFeatures, DifferenceOnTrackDetEdgesOnly) {
  const std::vector<Point3> tp = {{0, 0, 0}, {1, 0, 0}};
  const std::vector<Point3> dp = {{0, 0, 1}, {90, 0, 0}};
  const auto g = build_graph(tp, dp, 10.0);
  Tape tape;
  const NodeFeatures f{tape.constant(NumArray::from_rows({{1, 2, 3}, {1, 1, 1}})),
                       tape.constant(NumArray::from_rows({{1, 1, 1}, {5, 5, 5}}))};
  const NumArray e = edge_features(f, g).value();
  ASSERT_EQ(e.rows(), 2u);
  EXPECT_EQ(e, NumArray::from_rows({{0, 1, 2}, {0, 0, 0}}));

  const auto none = build_graph(tp, {}, 10.0);
  Tape t2;
  const NodeFeatures f2{t2.constant(NumArray(2, 3)), t2.constant(NumArray(0, 3))};
  EXPECT_EQ(edge_features(f2, none).value().rows(), 0u);
}

}  // namespace
}  // namespace ptp
