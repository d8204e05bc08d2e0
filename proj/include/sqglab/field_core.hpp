#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqg {

using cplx = std::complex<double>;
using Vec2 = std::array<double, 2>;

/// Uniform periodic grid on [0,L)^2. Sample (i,j) sits at (i*dx, j*dx) and is
/// stored at index i*n + j. Spectral arrays use the real-to-complex half layout
/// n x (n/2+1): row i carries the x1 mode, column j the x2 mode.
struct Grid {
    int n = 64;
    double L = 2.0 * std::numbers::pi;
    double dealias_fraction = 2.0 / 3.0;

    void validate() const;

    double dx() const { return L / n; }
    double k0() const { return 2.0 * std::numbers::pi / L; }
    int half() const { return n / 2 + 1; }
    std::size_t size() const { return static_cast<std::size_t>(n) * n; }
    std::size_t spec_size() const { return static_cast<std::size_t>(n) * half(); }

    /// Signed integer mode of full-axis index i.
    int mode(int i) const { return i <= n / 2 ? i : i - n; }
    double k1(int i) const { return k0() * mode(i); }
    double k2(int j) const { return k0() * j; }
    double kmag(int i, int j) const;
    bool nyquist(int i, int j) const { return i == n / 2 || j == n / 2; }
    /// Largest |mode| kept by the dealiasing filter.
    int cutoff() const;
    bool retained(int i, int j) const;
    /// Multiplicity of a half-spectrum column in full-spectrum sums.
    double column_weight(int j) const { return (j == 0 || j == n / 2) ? 1.0 : 2.0; }

    bool operator==(const Grid& o) const {
        return n == o.n && L == o.L && dealias_fraction == o.dealias_fraction;
    }
};

enum class Representation { Physical, Spectral };

/// Real scalar field on a Grid, held either as samples or as normalized Fourier
/// coefficients (f(x) = sum_k c_k e^{ik.x}).
class Field {
public:
    Field() = default;
    static Field zeros(const Grid& g);
    static Field constant(const Grid& g, double c);
    static Field from_values(const Grid& g, std::vector<double> v);
    static Field from_spectrum(const Grid& g, std::vector<cplx> c);
    static Field from_function(const Grid& g, const std::function<double(double, double)>& f);

    const Grid& grid() const { return grid_; }
    Representation representation() const { return rep_; }

    /// Throw unless the field is in the requested representation.
    const std::vector<double>& values() const;
    const std::vector<cplx>& spectrum() const;

    Field to_spectral() const;
    Field to_physical() const;

    double at(int i, int j) const { return values()[static_cast<std::size_t>(i) * grid_.n + j]; }
    double mean() const;
    double max_abs() const;
    /// Un-normalized L^2 norm, (integral of f^2)^{1/2}.
    double l2_norm() const;
    bool all_finite() const;

private:
    Grid grid_;
    Representation rep_ = Representation::Physical;
    std::vector<double> x_;
    std::vector<cplx> k_;
};

struct VelocityField {
    Grid grid;
    Field ux, uy;

    double max_speed() const;
    /// Spectral divergence L^2 norm.
    double divergence_norm() const;
    double l2_norm() const;
};

/// Apply |k|^{2 alpha}; the k=0 mode is mapped to zero.
Field fractional_laplacian(const Field& f, double alpha);
/// Apply an arbitrary radial symbol m(|k|) to f.
Field apply_symbol(const Field& f, const std::function<double(double)>& m);
/// u = R^perp theta, symbol i k^perp/|k| with k^perp = (-k2, k1). Zero mode and
/// Nyquist rows of this odd multiplier are set to zero.
VelocityField riesz_velocity(const Field& theta);
/// Spectral partial derivative along axis 0 (x1) or 1 (x2).
Field derivative(const Field& f, int axis);
/// f(. + shift) by Fourier phase shift.
Field translate(const Field& f, Vec2 shift);
/// Zero the modes removed by the dealiasing filter.
Field dealias(const Field& f);

/// Value of the trigonometric interpolant at an arbitrary point.
double evaluate(const Field& f, Vec2 x);
/// Supremum of |f| for the trigonometric interpolant: grid maximum refined by
/// Newton iterations around the leading local maxima.
double sup_abs(const Field& f);

enum class Scheme { StrangIfSspRk3 };
std::string scheme_name(Scheme s);

struct StepOptions {
    bool advect = true;
    double c_cfl = 0.5;
};

struct StepResult {
    Field theta;
    /// integral over the step of |(-Delta)^{alpha/2} theta|^2 along the exact
    /// dissipative sub-flows.
    double dissipation = 0.0;
};

class CflError : public std::runtime_error {
public:
    CflError(const std::string& what, double admissible) : std::runtime_error(what), admissible_dt(admissible) {}
    double admissible_dt;
};

class BlowUpError : public std::runtime_error {
public:
    BlowUpError(const std::string& what, double t, double sup, double bound)
        : std::runtime_error(what), time(t), sup_norm(sup), bound(bound) {}
    double time, sup_norm, bound;
};

/// Largest dt allowed by dt <= c_cfl dx / max|u| (infinity for u = 0).
double admissible_dt(const Field& theta, double c_cfl);

/// One step: exact integrating factor for (-Delta)^alpha on half steps around
/// an SSP-RK3 step of the dealiased advection.
StepResult step(const Field& theta, double dt, double alpha, Scheme scheme = Scheme::StrangIfSspRk3,
                const StepOptions& opt = {});

struct InitialCondition {
    enum class Kind { Constant, SingleMode, Random, Bump };
    Kind kind = Kind::Random;
    double amplitude = 0.5;
    double mean = 0.0;
    int m1 = 1, m2 = 0;
    double phase = 0.0;
    std::uint64_t seed = 42;
    int kmax = 4;
    Vec2 center{0.0, 0.0};
    double width = 0.5;
};

Field make_initial(const Grid& g, const InitialCondition& ic);

struct SimulationConfig {
    Grid grid;
    double alpha = 0.45;
    InitialCondition initial;
    double t0 = 0.0;
    double horizon = 1.0;
    double snapshot_dt = 0.02;
    double dt_max = 0.005;
    double c_cfl = 0.5;
    bool advect = true;
    double blowup_factor = 10.0;
    std::string config_hash;
};

struct TrajectoryMeta {
    std::string scheme = "strang-if-ssprk3";
    double dt_max = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

/// Time-indexed snapshots of theta. The velocity is R^perp theta plus a
/// spatially constant drift per snapshot (zero for plain SQG runs).
class Trajectory {
public:
    Trajectory() = default;
    Trajectory(Grid g, double alpha, std::vector<double> times, std::vector<Field> snaps,
               std::vector<Vec2> drift = {}, std::vector<double> dissipation = {},
               TrajectoryMeta meta = {});

    const Grid& grid() const { return grid_; }
    double alpha() const { return alpha_; }
    std::size_t size() const { return times_.size(); }
    const std::vector<double>& times() const { return times_; }
    double time(std::size_t i) const { return times_[i]; }
    const Field& snapshot(std::size_t i) const { return snaps_[i]; }
    const std::vector<Field>& snapshots() const { return snaps_; }
    Vec2 drift(std::size_t i) const { return drift_[i]; }
    const std::vector<Vec2>& drifts() const { return drift_; }
    VelocityField velocity(std::size_t i) const;
    /// Cumulative dissipation integral recorded by the solver (empty if unknown).
    const std::vector<double>& dissipation() const { return dissipation_; }
    bool has_dissipation_ledger() const { return !dissipation_.empty(); }
    const TrajectoryMeta& meta() const { return meta_; }
    double start() const { return times_.front(); }
    double end() const { return times_.back(); }
    /// Global max of |theta| over all snapshots (grid values).
    double sup_abs_grid() const;

private:
    Grid grid_;
    double alpha_ = 0.45;
    std::vector<double> times_;
    std::vector<Field> snaps_;
    std::vector<Vec2> drift_;
    std::vector<double> dissipation_;
    TrajectoryMeta meta_;
};

Trajectory simulate(const SimulationConfig& cfg);

/// theta_r(x,t) = r^{2a-1} theta(r x, r^{2a} t), realised exactly by keeping the
/// samples and changing the box to L/r.
Trajectory rescale(const Trajectory& tr, double r);

void save_trajectory(const Trajectory& tr, const std::string& dir);
Trajectory load_trajectory(const std::string& dir);

/// Little-endian float64 row-major array IO shared by trajectory and slab files.
void write_f64(const std::string& path, const std::vector<double>& v);
std::vector<double> read_f64(const std::string& path, std::size_t expected);

}  // namespace sqg
