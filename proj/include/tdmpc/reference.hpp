#ifndef TDMPC_REFERENCE_HPP_
#define TDMPC_REFERENCE_HPP_

// Space-based reference path made of straight lines and circular arcs, and
// the lookahead reference generation used by the controllers.

#include <iosfwd>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "tdmpc/common.hpp"

namespace tdmpc {

struct LineSegment {
  Eigen::Vector2d start;
  Eigen::Vector2d end;
};

enum class TurnDirection { kLeft, kRight };

/// Circular arc given by the polar angles of its end points around the
/// center. Left arcs sweep counter-clockwise, right arcs clockwise.
struct ArcSegment {
  Eigen::Vector2d center;
  double radius = 0.0;
  double start_angle = 0.0;
  double end_angle = 0.0;
  TurnDirection direction = TurnDirection::kLeft;

  /// Swept angle in (0, 2*pi].
  double sweep() const;
};

using Segment = std::variant<LineSegment, ArcSegment>;

struct ReferencePoint {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double heading = 0.0;
  double station = 0.0;
  int segment = 0;
  double curvature = 0.0;
};

class TrajectorySpec {
 public:
  /// Throws DomainError unless the segments are non-degenerate and tangent
  /// continuous at every joint (1e-6 m / 1e-6 rad).
  explicit TrajectorySpec(std::vector<Segment> segments);

  /// Straight 30 m, right 90 deg arc (R 10 m), straight 20 m, left 90 deg arc
  /// (R 10 m), straight 30 m, starting at the origin heading east.
  static TrajectorySpec benchmark();

  const std::vector<Segment>& segments() const { return segments_; }
  double length() const { return starts_.back() + lengths_.back(); }
  double segment_start(int i) const { return starts_[static_cast<std::size_t>(i)]; }
  double segment_length(int i) const { return lengths_[static_cast<std::size_t>(i)]; }
  int segment_count() const { return static_cast<int>(segments_.size()); }
  bool is_arc(int i) const;

  /// Point at an arclength station, clamped to [0, length()].
  ReferencePoint point_at(double station) const;

 private:
  std::vector<Segment> segments_;
  std::vector<double> starts_;
  std::vector<double> lengths_;
};

/// Globally closest point; ties go to the smallest station.
ReferencePoint closest_point(const TrajectorySpec& spec, const Eigen::Vector2d& query);

/// Point `lookahead` metres of arclength past the closest point, saturating at
/// the end of the path.
ReferencePoint lookahead_reference(const TrajectorySpec& spec, const Eigen::Vector2d& query,
                                   double lookahead);

struct ReferenceSettings {
  double tractor_lookahead = 1.6;  // measured from the front axle
  double trailer_lookahead = 0.0;
  double tractor_wheelbase = 1.4;
};

/// Per-node targets for both bodies, nodes 0..horizon.
struct ReferenceWindow {
  std::vector<ReferencePoint> tractor;
  std::vector<ReferencePoint> trailer;
};

/// tractor_pose is (x_t, y_t, theta) of the rear axle; trailer_position is the
/// trailer axle. Stations advance by speed * sample_time per node.
ReferenceWindow reference_window(const TrajectorySpec& spec, const Eigen::Vector3d& tractor_pose,
                                 const Eigen::Vector2d& trailer_position, int horizon,
                                 double sample_time, double speed,
                                 const ReferenceSettings& settings = {});

/// Dense polyline "station,x,y,heading_deg,curvature" for plotting.
void write_polyline_csv(const TrajectorySpec& spec, std::ostream& os, double spacing = 0.05);

}  // namespace tdmpc

#endif  // TDMPC_REFERENCE_HPP_
