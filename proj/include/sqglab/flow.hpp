#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sqglab/check.hpp"
#include "sqglab/field_core.hpp"

namespace sqg {

struct FlowOptions {
    double ball_radius = 0.25;
    /// Flow and level data live on s in [-horizon, 0].
    double horizon = 1.0;
    /// Largest RK4 step; steps also land on every snapshot time.
    double h_max = 0.01;
    /// Smallness threshold for the ball-averaged velocity (config knob, no
    /// numeric value is available for the universal constant).
    double eps1 = 0.05;
};

/// Phi(s) for s from 0 down to -horizon, unwrapped (not reduced mod L).
struct FlowPath {
    Vec2 x{0.0, 0.0};
    double t = 0.0;
    std::vector<double> times;
    std::vector<Vec2> positions;
    std::vector<Vec2> velocities;

    /// Index of the node at time s (within 1e-12 of the step); throws if absent.
    std::size_t node(double s) const;
    double max_displacement() const;
};

/// Ball average of u over B_R(p) for a snapshot, evaluated through the
/// trigonometric interpolant of the cell-mask convolution.
class BallAverager {
public:
    BallAverager(const Trajectory& tr, double radius);
    Vec2 at_snapshot(std::size_t i, Vec2 p) const;
    /// Linear in time between snapshots.
    Vec2 at_time(double time, Vec2 p) const;
    std::size_t mask_cells() const { return cells_; }

private:
    const Trajectory* tr_;
    std::vector<double> symbol_;
    std::size_t cells_;
    mutable std::vector<std::vector<Field>> cache_;
};

/// RK4 backward integration of dPhi/ds = avg_{B_R} u(z + Phi + x, s + t), Phi(0) = 0.
FlowPath integrate_flow(const Trajectory& tr, Vec2 x, double t, const FlowOptions& opt = {});

class ScaleFloorReached : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One level (theta_j, u_j) of the rescaled family. `data` holds theta_j at
/// level times s in [-horizon, 0] on the box L / mu^j, with the spatially
/// constant part of u_j as drift, so velocity(i) = R^perp theta_j + f_j.
struct FlowLevel {
    int j = 0;
    Trajectory data;
    /// Index of the base-trajectory snapshot each sample comes from.
    std::vector<std::size_t> source;
    FlowPath path;
    std::vector<Vec2> xj, xj_dot;
    std::vector<Vec2> R, R_dot;
    /// (avg_{Q_1} |u|^m)^{1/m} of the pre-flow velocity, m = the kinetic order.
    double smallness = 0.0;
};

FlowLevel recenter(const Trajectory& tr, Vec2 x, double t, const FlowOptions& opt = {}, double m = 2.0);
/// Rescales by mu and applies a fresh flow at (0,0). Throws ScaleFloorReached
/// when mu^j n < 8 or fewer than two samples remain in [-horizon, 0].
FlowLevel rescale_once(const FlowLevel& prev, double mu, const FlowOptions& opt = {}, double m = 2.0);

struct RescaledFamily {
    const Trajectory* base = nullptr;
    Vec2 x{0.0, 0.0};
    double t = 0.0;
    double mu = 0.25;
    FlowOptions options;
    std::vector<FlowLevel> levels;
    bool floor_reached = false;
    std::string floor_reason;
};

/// Levels 0..J, stopping early (floor_reached) at the scale floor.
RescaledFamily build_family(const Trajectory& tr, Vec2 x, double t, double mu, int J, const FlowOptions& opt = {},
                            double m = 2.0);

/// Mean of u_j over the grid cells of B_{radius}(0) at sample i.
Vec2 level_ball_mean(const FlowLevel& lv, std::size_t i, double radius = 0.25);

/// R_j at sample i summed from the per-level x_k (independent of the recursion).
Vec2 summed_R(const RescaledFamily& fam, int j, std::size_t i);

/// sup_s |R_j(s)| <= mu^{(2a-2/q) j} K_q(u; t, mu^j).
CheckReport flow_bound_check(const RescaledFamily& fam, double K_q_value, double mu, int j, double q);

/// JSON manifest: mu, J, centers and per-level R_j series.
std::string family_manifest(const RescaledFamily& fam);

}  // namespace sqg
