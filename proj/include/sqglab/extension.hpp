#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <tuple>
#include <utility>

#include "sqglab/field_core.hpp"

namespace sqg {

/// Geometric heights y_j = y_min rho^j, j = 0..count-1, ending at y_max.
std::vector<double> geometric_levels(double y_min, double y_max, int count);
/// Default heights for a grid: y_min = 1e-4 L, 64 levels up to L.
std::vector<double> default_levels(const Grid& g, int count = 64);
/// Throws unless levels are positive and strictly increasing.
void validate_levels(const std::vector<double>& y);

/// theta* sampled on the grid at a list of heights. The trace theta sits at y = 0.
class ExtensionSlab {
public:
    ExtensionSlab() = default;
    /// Arbitrary slab with a given trace (used for competitor extensions).
    ExtensionSlab(Field trace, double alpha, std::vector<double> y_levels, std::vector<Field> levels);

    const Grid& grid() const { return trace_.grid(); }
    double alpha() const { return alpha_; }
    double b() const { return 1.0 - 2.0 * alpha_; }
    const Field& trace() const { return trace_; }
    const std::vector<double>& y_levels() const { return y_; }
    const Field& level(std::size_t j) const { return levels_[j]; }
    std::size_t size() const { return y_.size(); }
    double max_abs() const;

private:
    Field trace_;
    double alpha_ = 0.45;
    std::vector<double> y_;
    std::vector<Field> levels_;
};

/// theta*^(k,y) = theta^(k) phi(|k| y).
ExtensionSlab extend(const Field& theta, double alpha, const std::vector<double>& y_levels);

struct ExtensionCalibration {
    double alpha = 0.0;
    double c_measured = 0.0;
    /// Per-mode values on |k| = 1 and |k| = 2 and their relative gap.
    double c_mode1 = 0.0, c_mode2 = 0.0, relative_gap = 0.0;
    int levels = 0;
};

class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// c = |k|^{2a} / int y^b |grad theta*|^2 for single modes, measured with the
/// slab quadrature on a dense calibration grid. Results are cached per alpha.
ExtensionCalibration calibrate_constant(double alpha);

/// Spatial region for energy integrals: whole torus or a ball (cell-center
/// membership), times heights [0, y_cut].
struct EnergyRegion {
    bool whole_torus = true;
    Vec2 center{0.0, 0.0};
    double radius = 0.0;
    /// Negative means the top of the slab.
    double y_cut = -1.0;
};

/// int y^b (|grad_x theta*|^2 + |d_y theta*|^2) over the region. grad_x is
/// spectral; d_y uses slopes in t = y^{2a}; the weight is integrated exactly
/// against piecewise-linear data in t; the trace is the node at y = 0.
double weighted_energy(const ExtensionSlab& slab, const EnergyRegion& region = {});

/// Per-cell column integrals int_0^{y_cut} y^b |grad(h(theta*))|^2 dy, where
/// h(v) = v, or h(v) = |v|^{q/2} if q > 0 (chain rule, zero subgradient at 0).
std::vector<double> column_energy(const ExtensionSlab& slab, double y_cut, double q = 0.0);
/// Same integrals computed level by level from theta without storing the slab.
std::vector<double> column_energy(const Field& theta, double alpha, const std::vector<double>& y_levels,
                                  double y_cut, double q = 0.0);

struct DtnResult {
    Field value;
    /// ||a - theta||_2 / ||theta||_2 for the fitted intercept a.
    double trace_residual = 0.0;
    bool flagged = false;
};

/// -c y^b d_y theta* at y = 0 from a fit a + b1 t + b2 t^{1/a} through the first
/// three levels (t = y^{2a}); equals -c 2a b1.
DtnResult dtn_trace(const ExtensionSlab& slab, const ExtensionCalibration& cal, double residual_tol = 1e-6);

void save_slab(const ExtensionSlab& slab, const std::string& dir);
ExtensionSlab load_slab(const std::string& dir);

/// Caches column energies of every snapshot of a trajectory. The trajectory
/// must outlive the provider. Thread-safe.
class SlabProvider {
public:
    explicit SlabProvider(const Trajectory& tr, std::vector<double> y_levels = {});

    const Trajectory& trajectory() const { return *tr_; }
    const std::vector<double>& y_levels() const { return y_; }
    double alpha() const { return tr_->alpha(); }
    /// Column energies for snapshot i, heights [0, y_cut], transform exponent q.
    std::shared_ptr<const std::vector<double>> columns(std::size_t i, double y_cut, double q = 0.0) const;

private:
    const Trajectory* tr_;
    std::vector<double> y_;
    mutable std::mutex mu_;
    mutable std::map<std::tuple<std::size_t, double, double>, std::shared_ptr<const std::vector<double>>> cache_;
};

}  // namespace sqg
