#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sqglab/extension.hpp"
#include "sqglab/field_core.hpp"
#include "sqglab/geometry.hpp"

namespace sqg {

/// Exponent pack. The preset ties p and sigma to (alpha, q):
/// p = (1+a)/a + 1/q, sigma = 2a - 1/q, gamma = sigma - 2a^2/(1+a).
struct Params {
    double alpha = 0.45;
    double q = 20.0;
    double p = 0.0;
    double sigma = 0.0;
    double gamma = 0.0;
    double mu = 0.25;
    /// Tail integrability p' for the plain tail functional.
    double p_tail = 0.0;

    static Params preset(double alpha, double q, double mu = 0.25);

    double b() const { return 1.0 - 2.0 * alpha; }
    /// p/(1+a), the order of the kinetic and dissipative parts.
    double m() const { return p / (1.0 + alpha); }
    /// gamma - (1/(p-1)) (1 - 2a + 2a/p).
    double holder_beta() const;
    bool holder_admissible() const { return holder_beta() > 1.0 - 2.0 * alpha; }
    /// alpha in (1/sqrt 6, 1/2) and q >= 20.
    bool dimension_admissible() const;
    /// Throws std::invalid_argument on violated invariants.
    void validate() const;
};

enum class Variant { Backward, Centered, Extended };
std::string variant_name(Variant v);

/// Q_r(x,t) = B_r(x) x (t - r^{2a}, t]; the centered variant uses
/// (t - r^{2a}, t + r^{2a}); the extended one adds heights [0, r).
struct Cylinder {
    Vec2 x{0.0, 0.0};
    double t = 0.0;
    double r = 1.0;
    Variant variant = Variant::Backward;
};

TimeWindow cylinder_window(const Trajectory& tr, const Cylinder& c, bool clip = false);

/// Average of f over B_R(c) (cell-center membership, at least 4 cells).
double spatial_average(const Field& f, Vec2 c, double R);
Vec2 ball_average(const VelocityField& u, Vec2 c, double R);
double spacetime_average(const Trajectory& tr, const Cylinder& c);

/// (int |u|^q dx)^{1/q} on the whole torus, no volume normalization.
double velocity_lq_norm(const VelocityField& u, double q);
/// 2 max(max_{|s-t| <= r^{2a}} ||u(s)||_{L^q}, r^{1-2a+2/q}).
double K_q(const Trajectory& tr, double t, double r, double q, bool clip_to_horizon = false);

/// r^{-[e(1-2a)+2]} max_s int_{B_r} |theta - (theta)_{Q_r}|^e over the backward window.
double kinetic_term(const Trajectory& tr, const Cylinder& c, double e);
double quantity_A(const Trajectory& tr, const Cylinder& c, const Params& P);
double quantity_B_local(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c, const Params& P);
double quantity_B_capital(const Trajectory& tr, const SlabProvider& sp, Vec2 x, double t, double r, const Params& P,
                          bool clip_to_horizon = false);
/// Plain tail functional with integrability p' and exponent sigma.
double tail_T(const Trajectory& tr, const Cylinder& c, double p_prime, double sigma);
double tail_T_capital(const Trajectory& tr, Vec2 x, double t, double r, const Params& P, bool clip_to_horizon = false);
double quantity_C(const Trajectory& tr, const Cylinder& c, const Params& P);
double quantity_D(const Trajectory& tr, const Cylinder& c, const Params& P);

struct Excess {
    double S = 0.0, V = 0.0, NL = 0.0, total = 0.0;
    /// |B_r| (discrete) times window length, used to relate S to C.
    double measure = 0.0;
};
Excess excess_E(const Trajectory& tr, const Cylinder& c, const Params& P);

double curly_E(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c);
double E_tot_q(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c, double q);

/// Integral of the column energies (heights [0, y_cut]) over ball x window.
double dissipation_integral(const SlabProvider& sp, const TimeWindow& w, Vec2 x, double R, double y_cut,
                            double q = 0.0);

struct QuantityReport {
    Cylinder cylinder;
    Params params;
    int grid_n = 0;
    double grid_L = 0.0;
    std::vector<std::pair<std::string, double>> values;
    double get(const std::string& name) const;
};

/// All quantities at one cylinder.
QuantityReport quantity_report(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c, const Params& P);

}  // namespace sqg
