#include "ptp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ptp/autodiff.hpp"
#include "ptp/errors.hpp"
#include "ptp/mot.hpp"

namespace ptp {

namespace {

using Vec2 = std::array<double, 2>;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

// Sutherland-Hodgman: clip `subject` by the convex CCW polygon `clip`.
// Points within a relative tolerance of a clip edge count as inside, so
// coincident edges survive rounding.
std::vector<Vec2> clip_polygon(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    const double len2 = (b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]);
    const double tol = 1e-12 * std::max(len2, 1.0);
    std::vector<Vec2> input = std::move(subject);
    subject.clear();
    for (std::size_t k = 0; k < input.size(); ++k) {
      const Vec2& cur = input[k];
      const Vec2& prev = input[(k + input.size() - 1) % input.size()];
      const double dc = cross(a, b, cur), dp = cross(a, b, prev);
      const bool cur_in = dc >= -tol;
      const bool prev_in = dp >= -tol;
      auto crossing = [&] {
        const double t = dp / (dp - dc);
        return Vec2{prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])};
      };
      if (cur_in) {
        if (!prev_in) subject.push_back(crossing());
        subject.push_back(cur);
      } else if (prev_in) {
        subject.push_back(crossing());
      }
    }
  }
  return subject;
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec2& p = poly[k];
    const Vec2& q = poly[(k + 1) % poly.size()];
    s += p[0] * q[1] - q[0] * p[1];
  }
  return std::max(0.0, 0.5 * s);
}

}  // namespace

std::array<std::array<double, 2>, 4> footprint(const Box& b) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double hl = b.l / 2.0, hw = b.w / 2.0;
  // length axis (c, s), width axis (-s, c)
  return {{{b.x + c * hl - s * hw, b.z + s * hl + c * hw},
           {b.x - c * hl - s * hw, b.z - s * hl + c * hw},
           {b.x - c * hl + s * hw, b.z - s * hl - c * hw},
           {b.x + c * hl + s * hw, b.z + s * hl - c * hw}}};
}

double iou3d(const Box& a, const Box& b) {
  const auto fa = footprint(a);
  const auto fb = footprint(b);
  const std::vector<Vec2> pa(fa.begin(), fa.end());
  const std::vector<Vec2> pb(fb.begin(), fb.end());
  const double area = polygon_area(clip_polygon(pa, pb));
  const double top = std::min(a.y + a.h / 2.0, b.y + b.h / 2.0);
  const double bottom = std::max(a.y - a.h / 2.0, b.y - b.h / 2.0);
  const double inter = area * std::max(0.0, top - bottom);
  if (inter <= 0.0) return 0.0;
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

FrameTracks ground_truth_tracks(const Scene& scene) {
  FrameTracks out(scene.frames.size());
  for (std::size_t f = 0; f < scene.frames.size(); ++f)
    for (const auto& o : scene.frames[f].objects) out[f].push_back({o.id, o.box, 1.0});
  return out;
}

namespace {

struct ClearRun {
  ClearReport report;
  std::vector<double> tp_scores;
};

ClearRun run_clear(const FrameTracks& gt, const FrameTracks& pred, double iou_threshold,
                   double min_score) {
  ClearRun run;
  auto& r = run.report;
  std::map<int, int> last_match;  // gt id -> pred id
  const std::size_t frames = std::max(gt.size(), pred.size());
  static const std::vector<TrackedBox> kEmpty;

  for (std::size_t f = 0; f < frames; ++f) {
    const auto& g = f < gt.size() ? gt[f] : kEmpty;
    std::vector<const TrackedBox*> p;
    if (f < pred.size())
      for (const auto& b : pred[f])
        if (b.score >= min_score) p.push_back(&b);
    r.num_gt += static_cast<int>(g.size());

    NumArray iou(g.size(), p.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < p.size(); ++j) iou(i, j) = iou3d(g[i].box, p[j]->box);

    std::vector<int> match(g.size(), -1);
    std::vector<bool> pred_used(p.size(), false);
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto it = last_match.find(g[i].id);
      if (it == last_match.end()) continue;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (!pred_used[j] && p[j]->id == it->second && iou(i, j) >= iou_threshold) {
          match[i] = static_cast<int>(j);
          pred_used[j] = true;
          break;
        }
      }
    }

    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (match[i] < 0) rows.push_back(i);
    for (std::size_t j = 0; j < p.size(); ++j)
      if (!pred_used[j]) cols.push_back(j);
    NumArray gated(rows.size(), cols.size());
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b) {
        const double v = iou(rows[a], cols[b]);
        gated(a, b) = v >= iou_threshold ? v : 0.0;
      }
    const auto assignment = hungarian_max(gated);
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const int b = assignment[a];
      if (b < 0 || gated(a, static_cast<std::size_t>(b)) <= 0.0) continue;
      match[rows[a]] = static_cast<int>(cols[static_cast<std::size_t>(b)]);
      pred_used[cols[static_cast<std::size_t>(b)]] = true;
    }

    for (std::size_t i = 0; i < g.size(); ++i) {
      if (match[i] < 0) {
        ++r.fn;
        continue;
      }
      const auto j = static_cast<std::size_t>(match[i]);
      ++r.matches;
      r.iou_sum += iou(i, j);
      run.tp_scores.push_back(p[j]->score);
      auto it = last_match.find(g[i].id);
      if (it != last_match.end() && it->second != p[j]->id) ++r.ids;
      last_match[g[i].id] = p[j]->id;
    }
    for (std::size_t j = 0; j < p.size(); ++j)
      if (!pred_used[j]) ++r.fp;
  }
  r.mota = r.num_gt > 0 ? 1.0 - static_cast<double>(r.fp + r.fn + r.ids) / r.num_gt : 0.0;
  r.motp = r.matches > 0 ? r.iou_sum / r.matches : 0.0;
  return run;
}

}  // namespace

ClearReport clear_metrics(const FrameTracks& gt, const FrameTracks& pred, double iou_threshold) {
  return run_clear(gt, pred, iou_threshold, -std::numeric_limits<double>::infinity()).report;
}

IntegratedReport integrated_metrics(const FrameTracks& gt, const FrameTracks& pred, int recall_steps,
                                    double iou_threshold) {
  if (recall_steps < 2) throw ContractError("integrated_metrics: recall_steps must be >= 2");
  IntegratedReport out;
  auto all = run_clear(gt, pred, iou_threshold, -std::numeric_limits<double>::infinity());
  const int num_gt = all.report.num_gt;
  auto scores = all.tp_scores;
  std::sort(scores.begin(), scores.end(), std::greater<>());

  for (int k = 1; k <= recall_steps; ++k) {
    RecallPoint pt;
    pt.target_recall = static_cast<double>(k) / recall_steps;
    if (num_gt == 0 || scores.empty()) {
      out.curve.push_back(pt);
      continue;
    }
    const auto needed = static_cast<std::size_t>(std::ceil(pt.target_recall * num_gt - 1e-9));
    pt.threshold = needed >= 1 && needed <= scores.size() ? scores[needed - 1] : scores.back();
    const auto run = run_clear(gt, pred, iou_threshold, pt.threshold).report;
    const double n = num_gt;
    const double r = static_cast<double>(run.matches) / n;
    pt.achieved_recall = r;
    if (run.matches > 0) {
      const double errors = run.fp + run.fn + run.ids - (1.0 - r) * n;
      pt.mota = std::max(0.0, 1.0 - errors / n);
      pt.smota = std::max(0.0, 1.0 - errors / (r * n));
      pt.motp = run.iou_sum / run.matches;
    }
    out.curve.push_back(pt);
  }
  for (const auto& pt : out.curve) {
    out.samota += pt.smota;
    out.amota += pt.mota;
    out.amotp += pt.motp;
  }
  out.samota /= recall_steps;
  out.amota /= recall_steps;
  out.amotp /= recall_steps;
  return out;
}

MotReport mot_report(const ClearReport& c, const IntegratedReport& i) {
  return {i.samota, i.amota, i.amotp, c.mota, c.motp, c.ids, c.fp, c.fn, c.num_gt};
}

namespace {

double dist(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.z - b.z); }

double mean_dist(const Trajectory2D& a, const Trajectory2D& b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("forecast_metrics: trajectory length mismatch");
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += dist(a[t], b[t]);
  return s / static_cast<double>(a.size());
}

}  // namespace

ForecastReport forecast_metrics(const std::vector<std::vector<Trajectory2D>>& samples,
                                const std::vector<Trajectory2D>& gt) {
  if (samples.size() != gt.size()) throw DimensionError("forecast_metrics: agent count mismatch");
  ForecastReport out;
  out.agents = gt.size();
  if (gt.empty()) return out;
  bool diverse = true;
  double asd = 0.0, fsd = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& set = samples[i];
    if (set.empty()) throw ContractError("forecast_metrics: agent without samples");
    double ade = std::numeric_limits<double>::infinity();
    double fde = std::numeric_limits<double>::infinity();
    for (const auto& s : set) {
      ade = std::min(ade, mean_dist(s, gt[i]));
      fde = std::min(fde, dist(s.back(), gt[i].back()));
    }
    out.ade += ade;
    out.fde += fde;
    if (set.size() < 2) {
      diverse = false;
      continue;
    }
    double a = 0.0, f = 0.0;
    for (std::size_t k = 0; k < set.size(); ++k) {
      double best_a = std::numeric_limits<double>::infinity();
      double best_f = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < set.size(); ++j) {
        if (j == k) continue;
        best_a = std::min(best_a, mean_dist(set[k], set[j]));
        best_f = std::min(best_f, dist(set[k].back(), set[j].back()));
      }
      a += best_a;
      f += best_f;
    }
    asd += a / static_cast<double>(set.size());
    fsd += f / static_cast<double>(set.size());
  }
  const double m = static_cast<double>(gt.size());
  out.ade /= m;
  out.fde /= m;
  if (diverse) {
    out.asd = asd / m;
    out.fsd = fsd / m;
  }
  return out;
}

}  // namespace ptp
