#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sqglab/field_core.hpp"

namespace sqg {

/// Minimum-image distance on the torus [0,L)^2.
double periodic_distance(Vec2 a, Vec2 b, double L);

/// Position of grid sample (i,j); samples are the cell centers of the midpoint rule.
inline Vec2 cell_center(const Grid& g, int i, int j) { return {i * g.dx(), j * g.dx()}; }

/// Flat indices of samples at periodic distance < R from c.
std::vector<std::size_t> ball_cells(const Grid& g, Vec2 c, double R);

class UnderResolved : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class OutsideHorizon : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// ball_cells that throws UnderResolved below `min_cells` samples.
std::vector<std::size_t> resolved_ball(const Grid& g, Vec2 c, double R, std::size_t min_cells = 4);

/// Snapshots of a trajectory restricted to [lo, hi].
struct TimeWindow {
    double lo = 0.0, hi = 0.0;
    /// Snapshot indices with t in [lo, hi] (relative tolerance 1e-9 of the
    /// window length); used for sup-in-time.
    std::vector<std::size_t> inside;
    /// Midpoint-rule weights: Voronoi cells of the snapshot times clipped to [lo, hi].
    std::vector<std::pair<std::size_t, double>> weights;
    double length() const { return hi - lo; }
};

/// Throws OutsideHorizon if [lo, hi] leaves the trajectory span, unless `clip`
/// is set, in which case the window is intersected with it.
TimeWindow time_window(const Trajectory& tr, double lo, double hi, bool clip = false);

/// Radii (r/4) 2^{k/4} below L/2, followed by L/2.
std::vector<double> tail_ladder(double r, double L);

/// Grid samples sorted by distance from a fixed center, for growing-ball sums.
class SortedOffsets {
public:
    SortedOffsets(const Grid& g, Vec2 center);
    const std::vector<std::size_t>& cells() const { return cells_; }
    const std::vector<double>& distances() const { return dist_; }
    /// Number of samples with distance < R.
    std::size_t count_below(double R) const;

private:
    std::vector<std::size_t> cells_;
    std::vector<double> dist_;
};

}  // namespace sqg
