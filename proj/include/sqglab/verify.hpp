#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sqglab/check.hpp"
#include "sqglab/extension.hpp"
#include "sqglab/field_core.hpp"
#include "sqglab/flow.hpp"
#include "sqglab/quantities.hpp"

namespace sqg {

/// Composite Boole rule on arbitrary increasing nodes: the degree-4 interpolant
/// through each group of five nodes is integrated exactly; trailing intervals
/// use the interpolant through the last five nodes. Fewer nodes lower the degree.
double time_integral(const std::vector<double>& t, const std::vector<double>& f);

/// int_lo^hi w(t) g(t) dt with g replaced by its cubic interpolant through the
/// four nodes around each interval and w integrated by Gauss points per interval.
double weighted_time_integral(const std::vector<double>& t, const std::vector<double>& g,
                              const std::function<double(double)>& w, double lo, double hi, int points = 12);

CheckReport check_global_energy(const Trajectory& tr, double s, double t, double rel_tol = 1e-8);

/// theta_lambda = (theta - lambda)_+ truncated on the grid, dealiased before
/// the spectral seminorm; dissipation by time_integral over snapshots.
CheckReport check_levelset_energy(const Trajectory& tr, double lambda, double s, double t, double rel_tol = 1e-8);

/// C_fit = max_t sup|theta(t)| t^{1/(2a)} / ||theta_0||_2 with t measured from
/// the first snapshot; passes when sup|theta| is nonincreasing.
CheckReport check_max_principle(const Trajectory& tr, double rel_tol = 1e-8);

/// phi(x, y, t) = X(|x - x0|) Y(y) T(t), built from the smooth step S:
/// X = S((|x-x0|/r - flat)/(1 - flat)), Y = 1 on [0, y_collar] then S((y - y_collar)/(y_top - y_collar)),
/// T = S((t0 - t)/tau) for t <= t0. With open_start the time factor is 1
/// on [t0 - tau, t0] and the initial term enters the right-hand side; with
/// full_space X is 1 on the whole torus.
struct TestFunction {
    Vec2 center{0.0, 0.0};
    double t0 = 0.0;
    double radius = 1.0;
    double tau = 1.0;
    double y_collar = 0.125;
    double y_top = 1.0;
    /// X is 1 for |x - x0| <= flat * radius.
    double flat = 0.0;
    bool full_space = false;
    bool open_start = false;

    /// Bump on B_r(x0) x (0, r) x (t0 - r^{2a}, t0] with y_collar = r/8.
    static TestFunction bump(Vec2 x0, double t0, double r, double alpha);
    /// X = 1, time factor 1 on [s, t]; y profile cut at y_collar, y_top.
    static TestFunction whole_domain(double s, double t, double y_collar, double y_top);

    double space(double rho) const;
    double space_d1(double rho) const;
    /// Radial Laplacian in the plane.
    double space_laplacian(double rho) const;
    double height(double y) const;
    double height_d1(double y) const;
    double height_d2(double y) const;
    double time(double t) const;
    double time_d1(double t) const;

    /// Upper bound for the C^2 norm from the step derivatives.
    double c2_bound() const;
    /// Throws UnderResolved when the spatial radius spans fewer than 8 cells,
    /// std::invalid_argument on inconsistent parameters or a C^2 bound above `c2_max`.
    void validate(const Grid& g, double c2_max = 1e4) const;
};

/// Heights and weights for y-integrals of the slab: dyadic Gauss panels in
/// t = y^{2a} on [0, y_collar], Gauss panels in y on [y_collar, y_top].
struct HeightRule {
    std::vector<double> y;
    /// Weights for int g y^b dy and int g y^{-b} dy.
    std::vector<double> w_b, w_mb;
    static HeightRule build(double alpha, double y_collar, double y_top, int dyadic_panels = 12,
                            int outer_panels = 8, int order = 8);
};

/// Normalization of the extension energy implied by the profile:
/// 1 / (-lim s^b phi'(s)), so that sum |k|^{2a}|c_k|^2 = c int y^b |grad theta*|^2.
double profile_constant(double alpha);

struct LocalEnergyOptions {
    double rel_tol = 1e-6;
    double c2_max = 1e4;
    int dyadic_panels = 12, outer_panels = 8, order = 8;
};

/// Both sides of the localized energy inequality of order q for eta = (theta - M)/L.
/// Terms: kinetic int phi |eta|^q at t0, dissipation 4(1-1/q) c int y^b |grad |eta*|^{q/2}|^2 phi,
/// time int |eta|^q d_t phi, transport int u |eta|^q . grad phi, extension
/// c int y^b |eta*|^q Delta_b phi, and the initial term for open_start.
/// The slab provider supplies the trajectory; heights follow HeightRule.
CheckReport check_local_energy(const SlabProvider& sp, const TestFunction& phi, double q, double L, double M,
                               const LocalEnergyOptions& opt = {});

/// Several exponents over one pass through the trajectory (shared transforms).
std::vector<CheckReport> check_local_energy_orders(const SlabProvider& sp, const TestFunction& phi,
                                                   const std::vector<double>& qs, double L, double M,
                                                   const LocalEnergyOptions& opt = {});

/// Local check with a whole-domain test function (q = 2, eta = theta) compared
/// with check_global_energy on [s, t]. "leakage" is the relative gap between
/// half the local left side and the global left side.
CheckReport local_global_comparison(const SlabProvider& sp, double s, double t, const LocalEnergyOptions& opt = {});

/// LHS (avg_B |f - [f]|^q)^{1/q}, middle r^{a-1} [f]_{W^{a,2}(B_r)} by direct
/// pair summation, RHS r^{a-1} (int_{B_{4r/3} x [0, 4r/3]} y^b |grad f*|^2)^{1/2}.
/// Ratios LHS/middle and middle/RHS are checked against `cap`.
CheckReport check_poincare(const Field& f, const ExtensionSlab& slab, Vec2 center, double r, double q,
                           double cap = 1e3);

/// D(r) / (A(3r/2)^a B_loc(3r/2) + T_p(3r/2)) and, when the ball mean of u
/// vanishes on [t - (2r)^{2a}, t], C(r) / (A(2r)^a B_loc(2r)(1 + A^{2a/p} B^{2/p} + T_p^{2/p})).
CheckReport probe_interpolation(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c, const Params& P,
                                double cap = 1e4, double mean_tol = 1e-8);

struct DecayKnobs {
    double K = 2.0;
    double eps = 1e-3;
    /// Smallness threshold on B_loc (or B_loc + T_{p/(1+a)} for the ladder).
    double delta = 1e-2;
    /// Tolerance for the zero ball-mean hypothesis.
    double mean_tol = 1e-8;
};

/// A(mu r)^a + T_p(mu r)^{2/p} <= (A(r)^a + T_p(r)^{2/p}) / K + eps on
/// recentered data; gated on zero ball mean over B_{r/2} and B_loc(r) < delta.
/// Reports the contraction factor.
CheckReport probe_energy_decay(const Trajectory& tr, const SlabProvider& sp, Vec2 x, double t, double r,
                               const Params& P, const DecayKnobs& k = {});

/// Level ladder at (0,0): gate B_loc(theta_j;1/2) + T_{p/(1+a)}(theta_j;1/2) <= delta for j < j0,
/// then A(theta_j0;mu)^a + T_p(theta_j0;mu)^{2/p} <= 2^{-j0}(A(theta_0;1/2)^a + T_p(theta_0;1/2)^{2/p}) + eps.
CheckReport probe_iterated_decay(const RescaledFamily& fam, const Params& P, int j0, const DecayKnobs& k = {});

/// E(mu r) <= c mu^gamma E(r), gated on E(r) <= r^{1-2a} eps0. Reports the
/// observed exponent log(E(mu r)/E(r)) / log mu.
CheckReport probe_excess_decay(const Trajectory& tr, const Cylinder& c, const Params& P, double c_const,
                               double gamma, double eps0);

/// T(rho r) <= T(r)/2 + C B(r): fits the smallest C >= 0; passes when finite.
CheckReport check_tail_transfer(const Trajectory& tr, const SlabProvider& sp, Vec2 x, double t, double r, double rho,
                                const Params& P, bool clip_to_horizon = false);

/// One JSON object per report (no trailing newline).
std::string report_json(const CheckReport& r);
/// JSON-lines block, reports in the given order.
std::string reports_jsonl(const std::vector<CheckReport>& reports);

}  // namespace sqg
