#include "tdmpc/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "tdmpc/csv.hpp"

namespace tdmpc {
namespace {

constexpr double kJointTolerance = 1e-6;
constexpr double kTieTolerance = 1e-12;

double positive_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  return a < 0.0 ? a + 2.0 * kPi : a;
}

double arc_sign(const ArcSegment& arc) {
  return arc.direction == TurnDirection::kLeft ? 1.0 : -1.0;
}

double segment_length(const Segment& seg) {
  if (const auto* line = std::get_if<LineSegment>(&seg)) {
    return (line->end - line->start).norm();
  }
  const auto& arc = std::get<ArcSegment>(seg);
  return arc.radius * arc.sweep();
}

// Local point at arclength s in [0, length] of a segment.
ReferencePoint local_point(const Segment& seg, double s) {
  ReferencePoint p;
  if (const auto* line = std::get_if<LineSegment>(&seg)) {
    const Eigen::Vector2d d = line->end - line->start;
    const double len = d.norm();
    p.position = line->start + d * (s / len);
    p.heading = std::atan2(d.y(), d.x());
    p.curvature = 0.0;
    return p;
  }
  const auto& arc = std::get<ArcSegment>(seg);
  const double sign = arc_sign(arc);
  const double phi = arc.start_angle + sign * s / arc.radius;
  p.position = arc.center + arc.radius * Eigen::Vector2d(std::cos(phi), std::sin(phi));
  p.heading = phi + sign * 0.5 * kPi;
  p.curvature = sign / arc.radius;
  return p;
}

// Closest local arclength on one segment. Ties (query at an arc center) go
// to the segment start.
double local_closest(const Segment& seg, const Eigen::Vector2d& q) {
  if (const auto* line = std::get_if<LineSegment>(&seg)) {
    const Eigen::Vector2d d = line->end - line->start;
    const double len = d.norm();
    const double t = (q - line->start).dot(d) / (len * len);
    return std::clamp(t, 0.0, 1.0) * len;
  }
  const auto& arc = std::get<ArcSegment>(seg);
  const Eigen::Vector2d r = q - arc.center;
  if (r.norm() <= kTieTolerance * std::max(1.0, arc.radius)) return 0.0;
  const double phi = std::atan2(r.y(), r.x());
  const double rel = positive_angle(arc_sign(arc) * (phi - arc.start_angle));
  const double sweep = arc.sweep();
  if (rel <= sweep) return rel * arc.radius;
  const double length = sweep * arc.radius;
  const double d_start = (local_point(seg, 0.0).position - q).norm();
  const double d_end = (local_point(seg, length).position - q).norm();
  return d_end < d_start - kTieTolerance ? length : 0.0;
}

}  // namespace

double ArcSegment::sweep() const {
  const double raw = direction == TurnDirection::kLeft ? end_angle - start_angle
                                                       : start_angle - end_angle;
  const double s = positive_angle(raw);
  return s <= 0.0 ? 2.0 * kPi : s;
}

TrajectorySpec::TrajectorySpec(std::vector<Segment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw DomainError("trajectory needs at least one segment");
  double station = 0.0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (const auto* arc = std::get_if<ArcSegment>(&segments_[i])) {
      if (!(arc->radius > 0.0) || !std::isfinite(arc->radius)) {
        throw DomainError("arc segment " + std::to_string(i) + " needs a positive radius");
      }
    }
    const double len = tdmpc::segment_length(segments_[i]);
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw DomainError("segment " + std::to_string(i) + " has zero length");
    }
    starts_.push_back(station);
    lengths_.push_back(len);
    station += len;
  }
  for (std::size_t i = 1; i < segments_.size(); ++i) {
    const ReferencePoint a = local_point(segments_[i - 1], lengths_[i - 1]);
    const ReferencePoint b = local_point(segments_[i], 0.0);
    if ((a.position - b.position).norm() > kJointTolerance ||
        std::abs(wrap_angle(a.heading - b.heading)) > kJointTolerance) {
      throw DomainError("segments " + std::to_string(i - 1) + " and " + std::to_string(i) +
                        " are not tangent-continuous");
    }
  }
}

TrajectorySpec TrajectorySpec::benchmark() {
  std::vector<Segment> segs;
  segs.emplace_back(LineSegment{{0.0, 0.0}, {30.0, 0.0}});
  segs.emplace_back(ArcSegment{{30.0, -10.0}, 10.0, 0.5 * kPi, 0.0, TurnDirection::kRight});
  segs.emplace_back(LineSegment{{40.0, -10.0}, {40.0, -30.0}});
  segs.emplace_back(ArcSegment{{50.0, -30.0}, 10.0, kPi, 1.5 * kPi, TurnDirection::kLeft});
  segs.emplace_back(LineSegment{{50.0, -40.0}, {80.0, -40.0}});
  return TrajectorySpec(std::move(segs));
}

bool TrajectorySpec::is_arc(int i) const {
  return std::holds_alternative<ArcSegment>(segments_.at(static_cast<std::size_t>(i)));
}

ReferencePoint TrajectorySpec::point_at(double station) const {
  station = std::clamp(station, 0.0, length());
  // Last segment whose start is <= station.
  const auto it = std::upper_bound(starts_.begin(), starts_.end(), station);
  const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - starts_.begin() - 1));
  const double local = std::min(station - starts_[idx], lengths_[idx]);
  ReferencePoint p = local_point(segments_[idx], local);
  p.station = station;
  p.segment = static_cast<int>(idx);
  return p;
}

ReferencePoint closest_point(const TrajectorySpec& spec, const Eigen::Vector2d& query) {
  ReferencePoint best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < spec.segment_count(); ++i) {
    const Segment& seg = spec.segments()[static_cast<std::size_t>(i)];
    const double s = local_closest(seg, query);
    ReferencePoint p = local_point(seg, s);
    const double d = (p.position - query).norm();
    if (d < best_dist - kTieTolerance) {
      best_dist = d;
      p.station = spec.segment_start(i) + s;
      p.segment = i;
      best = p;
    }
  }
  return best;
}

ReferencePoint lookahead_reference(const TrajectorySpec& spec, const Eigen::Vector2d& query,
                                   double lookahead) {
  if (!(lookahead >= 0.0)) throw DomainError("lookahead must be non-negative");
  const ReferencePoint c = closest_point(spec, query);
  if (lookahead == 0.0) return c;
  return spec.point_at(c.station + lookahead);
}

ReferenceWindow reference_window(const TrajectorySpec& spec, const Eigen::Vector3d& tractor_pose,
                                 const Eigen::Vector2d& trailer_position, int horizon,
                                 double sample_time, double speed,
                                 const ReferenceSettings& settings) {
  if (!(speed > 0.0)) throw DomainError("reference_window: speed must be positive");
  if (horizon < 1 || !(sample_time > 0.0)) {
    throw DomainError("reference_window: horizon >= 1 and sample_time > 0 required");
  }
  const double theta = tractor_pose.z();
  const Eigen::Vector2d front =
      tractor_pose.head<2>() +
      settings.tractor_wheelbase * Eigen::Vector2d(std::cos(theta), std::sin(theta));
  const double s_tractor = closest_point(spec, front).station + settings.tractor_lookahead;
  const double s_trailer =
      closest_point(spec, trailer_position).station + settings.trailer_lookahead;
  const double ds = speed * sample_time;

  ReferenceWindow w;
  w.tractor.reserve(static_cast<std::size_t>(horizon + 1));
  w.trailer.reserve(static_cast<std::size_t>(horizon + 1));
  for (int k = 0; k <= horizon; ++k) {
    w.tractor.push_back(spec.point_at(s_tractor + k * ds));
    w.trailer.push_back(spec.point_at(s_trailer + k * ds));
  }
  return w;
}

void write_polyline_csv(const TrajectorySpec& spec, std::ostream& os, double spacing) {
  if (!(spacing > 0.0)) throw DomainError("polyline spacing must be positive");
  CsvWriter csv(os, {"station", "x", "y", "heading_deg", "curvature"});
  const auto n = static_cast<long>(std::ceil(spec.length() / spacing));
  for (long k = 0; k <= n; ++k) {
    const ReferencePoint p = spec.point_at(std::min(spec.length(), k * spacing));
    csv.row(p.station, p.position.x(), p.position.y(), rad2deg(p.heading), p.curvature);
  }
}

}  // namespace tdmpc
