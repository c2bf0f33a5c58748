#pragma once

#include <array>
#include <optional>
#include <vector>

#include "ptp/scene.hpp"

namespace ptp {

// Oriented 3D IoU: bird's-eye footprint intersection (convex clipping of the
// two rectangles in x-z) times vertical overlap along y, over the union volume.
double iou3d(const Box& a, const Box& b);

// Footprint corners in (x, z), counter-clockwise.
std::array<std::array<double, 2>, 4> footprint(const Box& box);

struct TrackedBox {
  int id = 0;
  Box box;
  double score = 1.0;
};

// Indexed by frame.
using FrameTracks = std::vector<std::vector<TrackedBox>>;

FrameTracks ground_truth_tracks(const Scene& scene);

inline constexpr double kDefaultIouThreshold = 0.25;

struct ClearReport {
  double mota = 0.0;
  double motp = 0.0;
  int ids = 0;
  int fp = 0;
  int fn = 0;
  int num_gt = 0;
  int matches = 0;
  double iou_sum = 0.0;
};

// Per frame: previous pairs are kept while their IoU passes the gate, the rest
// are matched by Hungarian on IoU. IDS counts GT objects whose matched
// predicted id differs from the one they were last matched to.
ClearReport clear_metrics(const FrameTracks& gt, const FrameTracks& pred,
                          double iou_threshold = kDefaultIouThreshold);

struct RecallPoint {
  double target_recall = 0.0;
  double achieved_recall = 0.0;
  double threshold = 0.0;
  double mota = 0.0;
  double smota = 0.0;
  double motp = 0.0;
};

struct IntegratedReport {
  double samota = 0.0;
  double amota = 0.0;
  double amotp = 0.0;
  std::vector<RecallPoint> curve;
};

inline constexpr int kDefaultRecallSteps = 40;

// Sweeps the prediction-score threshold so that each recall level
// r = k / recall_steps is realized as closely as possible, and averages the
// recall-adjusted MOTA/sMOTA/MOTP at the recall actually achieved.
IntegratedReport integrated_metrics(const FrameTracks& gt, const FrameTracks& pred,
                                    int recall_steps = kDefaultRecallSteps,
                                    double iou_threshold = kDefaultIouThreshold);

struct MotReport {
  double samota = 0.0;
  double amota = 0.0;
  double amotp = 0.0;
  double mota = 0.0;
  double motp = 0.0;
  int ids = 0;
  int fp = 0;
  int fn = 0;
  int num_gt = 0;
};

MotReport mot_report(const ClearReport& clear, const IntegratedReport& integrated);

struct Point2 {
  double x = 0.0;
  double z = 0.0;
};
using Trajectory2D = std::vector<Point2>;

struct ForecastReport {
  double ade = 0.0;
  double fde = 0.0;
  std::optional<double> asd;  // absent when K < 2
  std::optional<double> fsd;
  std::size_t agents = 0;
};

// samples[i] holds agent i's K trajectories; gt[i] its ground-truth future.
ForecastReport forecast_metrics(const std::vector<std::vector<Trajectory2D>>& samples,
                                const std::vector<Trajectory2D>& gt);

}  // namespace ptp
