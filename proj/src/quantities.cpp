#include "sqglab/quantities.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sqg {

// ---- parameters ----

Params Params::preset(double alpha, double q, double mu) {
    Params P;
    P.alpha = alpha;
    P.q = q;
    P.mu = mu;
    P.p = (1.0 + alpha) / alpha + 1.0 / q;
    P.sigma = 2.0 * alpha - 1.0 / q;
    P.gamma = P.sigma - 2.0 * alpha * alpha / (1.0 + alpha);
    P.p_tail = P.p;
    return P;
}

double Params::holder_beta() const { return gamma - (1.0 / (p - 1.0)) * (1.0 - 2.0 * alpha + 2.0 * alpha / p); }

bool Params::dimension_admissible() const { return alpha > 1.0 / std::sqrt(6.0) && alpha < 0.5 && q >= 20.0; }

void Params::validate() const {
    std::ostringstream os;
    if (!(alpha > 0.0 && alpha < 0.5)) os << "alpha must lie in (0, 1/2); ";
    if (!(p > (1.0 + alpha) / alpha)) os << "p must exceed (1+alpha)/alpha; ";
    if (!(sigma > 0.0 && sigma < 2.0 * alpha)) os << "sigma must lie in (0, 2 alpha); ";
    if (!(mu > 0.0 && mu <= 0.25)) os << "mu must lie in (0, 1/4]; ";
    if (!(q > 0.0)) os << "q must be positive; ";
    if (!(p_tail >= 2.0)) os << "p' must be >= 2; ";
    if (!os.str().empty()) throw std::invalid_argument("params: " + os.str());
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Backward: return "backward";
        case Variant::Centered: return "centered";
        case Variant::Extended: return "extended";
    }
    return "?";
}

// ---- averages ----

namespace {

double area(const Grid& g, std::size_t cells) { return static_cast<double>(cells) * g.dx() * g.dx(); }

double mean_over(const std::vector<double>& v, const std::vector<std::size_t>& cells) {
    double s = 0.0;
    for (auto k : cells) s += v[k];
    return s / static_cast<double>(cells.size());
}

double pw(double a, double e) {
    if (e == 2.0) return a * a;
    if (e == 1.5) return a * std::sqrt(a);
    return std::pow(a, e);
}

void check_radius(const Grid& g, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("cylinder radius must be positive");
    if (2.0 * r > 0.5 * g.L * (1.0 + 1e-12)) throw std::out_of_range("cylinder ball diameter exceeds L/2");
}

void check_provider(const Trajectory& tr, const SlabProvider& sp) {
    if (&sp.trajectory() != &tr) throw std::invalid_argument("slab provider belongs to another trajectory");
}

}  // namespace

TimeWindow cylinder_window(const Trajectory& tr, const Cylinder& c, bool clip) {
    const double d = std::pow(c.r, 2.0 * tr.alpha());
    if (c.variant == Variant::Centered) return time_window(tr, c.t - d, c.t + d, clip);
    return time_window(tr, c.t - d, c.t, clip);
}

double spatial_average(const Field& f, Vec2 c, double R) {
    auto cells = resolved_ball(f.grid(), c, R);
    return mean_over(f.to_physical().values(), cells);
}

Vec2 ball_average(const VelocityField& u, Vec2 c, double R) {
    auto cells = resolved_ball(u.grid, c, R);
    return {mean_over(u.ux.values(), cells), mean_over(u.uy.values(), cells)};
}

double spacetime_average(const Trajectory& tr, const Cylinder& c) {
    check_radius(tr.grid(), c.r);
    auto cells = resolved_ball(tr.grid(), c.x, c.r);
    auto w = cylinder_window(tr, c);
    double s = 0.0, wt = 0.0;
    for (auto [i, wi] : w.weights) {
        s += wi * mean_over(tr.snapshot(i).values(), cells);
        wt += wi;
    }
    return s / wt;
}

double velocity_lq_norm(const VelocityField& u, double q) {
    const auto& a = u.ux.values();
    const auto& b = u.uy.values();
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::pow(std::hypot(a[k], b[k]), q);
    return std::pow(s * u.grid.dx() * u.grid.dx(), 1.0 / q);
}

double K_q(const Trajectory& tr, double t, double r, double q, bool clip) {
    const double a = tr.alpha(), d = std::pow(r, 2.0 * a);
    auto w = time_window(tr, t - d, t + d, clip);
    double m = 0.0;
    for (auto i : w.inside) m = std::max(m, velocity_lq_norm(tr.velocity(i), q));
    return 2.0 * std::max(m, std::pow(r, 1.0 - 2.0 * a + 2.0 / q));
}

// ---- kinetic, dissipative ----

double kinetic_term(const Trajectory& tr, const Cylinder& c, double e) {
    Cylinder back = c;
    back.variant = Variant::Backward;
    const Grid& g = tr.grid();
    check_radius(g, c.r);
    const double mean = spacetime_average(tr, back);
    auto cells = resolved_ball(g, c.x, c.r);
    auto w = cylinder_window(tr, back);
    double best = 0.0;
    for (auto i : w.inside) {
        const auto& v = tr.snapshot(i).values();
        double s = 0.0;
        for (auto k : cells) s += pw(std::abs(v[k] - mean), e);
        best = std::max(best, s);
    }
    const double a = tr.alpha();
    return best * g.dx() * g.dx() / std::pow(c.r, e * (1.0 - 2.0 * a) + 2.0);
}

double quantity_A(const Trajectory& tr, const Cylinder& c, const Params& P) { return kinetic_term(tr, c, P.m()); }

double dissipation_integral(const SlabProvider& sp, const TimeWindow& w, Vec2 x, double R, double y_cut, double q) {
    const Grid& g = sp.trajectory().grid();
    auto cells = resolved_ball(g, x, R);
    double s = 0.0;
    for (auto [i, wi] : w.weights) {
        auto col = sp.columns(i, y_cut, q);
        double b = 0.0;
        for (auto k : cells) b += (*col)[k];
        s += wi * b;
    }
    return s * g.dx() * g.dx();
}

double quantity_B_local(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c, const Params& P) {
    check_provider(tr, sp);
    check_radius(tr.grid(), c.r);
    Cylinder back = c;
    back.variant = Variant::Backward;
    auto w = cylinder_window(tr, back);
    const double m = P.m(), a = tr.alpha();
    const double sup = tr.sup_abs_grid();
    const double I = dissipation_integral(sp, w, c.x, c.r, c.r);
    if (I == 0.0) return 0.0;
    return std::pow(sup, m - 2.0) * I / std::pow(c.r, m * (1.0 - 2.0 * a) + 2.0);
}

double quantity_B_capital(const Trajectory& tr, const SlabProvider& sp, Vec2 x, double t, double r, const Params& P,
                          bool clip) {
    check_provider(tr, sp);
    const Grid& g = tr.grid();
    const double a = tr.alpha(), m = P.m();
    const double rho = K_q(tr, t, r, P.q, clip) * std::pow(r, 2.0 * a - 2.0 / P.q);
    if (rho > 0.5 * g.L) {
        std::ostringstream os;
        os << "tail ball exceeds domain: K_q r^{2a-2/q} = " << rho << " > L/2 = " << 0.5 * g.L;
        throw std::out_of_range(os.str());
    }
    const double d = std::pow(r, 2.0 * a);
    auto w = time_window(tr, t - d, t + d, clip);
    const double sup = tr.sup_abs_grid();
    const double I = dissipation_integral(sp, w, x, rho, r);
    if (I == 0.0) return 0.0;
    return std::pow(sup, m - 2.0) * I / std::pow(r, m * (1.0 - 2.0 * a) + 2.0);
}

// ---- tails ----

namespace {

// sup_R (r/R)^{se} (mean_{B_R(z)} |theta - c|^{3/2})^{2e/3} over the ladder,
// using cells sorted by distance from z.
struct TailLadder {
    std::vector<double> R;
    std::vector<std::size_t> counts;
};

TailLadder make_ladder(const SortedOffsets& so, double r, double L) {
    TailLadder t;
    for (double R : tail_ladder(r, L)) {
        const std::size_t n = so.count_below(R);
        if (n < 4) continue;
        t.R.push_back(R);
        t.counts.push_back(n);
    }
    if (t.R.empty()) throw UnderResolved("under-resolved: no tail radius holds 4 cells");
    return t;
}

double tail_sup(const std::vector<double>& v, const Grid& g, const std::vector<std::size_t>& sorted, int si, int sj,
                double c, const TailLadder& lad, double r, double se, double e) {
    double best = 0.0, acc = 0.0;
    std::size_t k = 0;
    const int n = g.n;
    for (std::size_t rung = 0; rung < lad.R.size(); ++rung) {
        for (; k < lad.counts[rung]; ++k) {
            const std::size_t cell = sorted[k];
            const int i = static_cast<int>(cell / n), j = static_cast<int>(cell % n);
            const std::size_t q = static_cast<std::size_t>((i + si) % n) * n + (j + sj) % n;
            const double d = std::abs(v[q] - c);
            acc += d * std::sqrt(d);
        }
        const double mean = acc / static_cast<double>(lad.counts[rung]);
        const double val = std::pow(r / lad.R[rung], se) * std::pow(mean, 2.0 * e / 3.0);
        best = std::max(best, val);
    }
    return best;
}

// Sum over the window of weights times the per-time tail sup at center x,
// inner average over B_{r_in}(x).
double tail_time_integral(const Trajectory& tr, const TimeWindow& w, Vec2 x, double r, double r_in, double e,
                          double sigma) {
    const Grid& g = tr.grid();
    SortedOffsets so(g, x);
    TailLadder lad = make_ladder(so, r, g.L);
    auto inner = resolved_ball(g, x, r_in);
    double s = 0.0;
    for (auto [i, wi] : w.weights) {
        const auto& v = tr.snapshot(i).values();
        const double c = mean_over(v, inner);
        s += wi * tail_sup(v, g, so.cells(), 0, 0, c, lad, r, sigma * e, e);
    }
    return s;
}

}  // namespace

double tail_T(const Trajectory& tr, const Cylinder& c, double pp, double sigma) {
    check_radius(tr.grid(), c.r);
    Cylinder back = c;
    back.variant = Variant::Backward;
    auto w = cylinder_window(tr, back);
    const double a = tr.alpha();
    const double I = tail_time_integral(tr, w, c.x, c.r, c.r, pp, sigma);
    return I / std::pow(c.r, pp * (1.0 - 2.0 * a) + 2.0 * a);
}

double tail_T_capital(const Trajectory& tr, Vec2 x, double t, double r, const Params& P, bool clip) {
    const Grid& g = tr.grid();
    check_radius(g, r);
    const double a = tr.alpha(), e = P.m();
    const double rho = 0.75 * K_q(tr, t, r, P.q, clip) * std::pow(r, 2.0 * a - 2.0 / P.q);
    const double d = std::pow(r, 2.0 * a);
    auto w = time_window(tr, t - d, t + d, clip);
    // Centers: grid points within rho of x; offsets from the origin are shared.
    std::vector<std::pair<int, int>> centers;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            if (periodic_distance(cell_center(g, i, j), x, g.L) <= rho) centers.push_back({i, j});
    if (centers.empty()) {
        // Ball smaller than the lattice spacing: use the nearest grid point.
        const int i = static_cast<int>(std::lround(x[0] / g.dx())) % g.n;
        const int j = static_cast<int>(std::lround(x[1] / g.dx())) % g.n;
        centers.push_back({(i + g.n) % g.n, (j + g.n) % g.n});
    }
    SortedOffsets so(g, {0.0, 0.0});
    TailLadder lad = make_ladder(so, r, g.L);
    const std::size_t n_in = so.count_below(0.25 * r);
    if (n_in < 4) throw UnderResolved("under-resolved: B_{r/4} holds fewer than 4 cells");
    const auto& sorted = so.cells();
    double s = 0.0;
    for (auto [ti, wi] : w.weights) {
        const auto& v = tr.snapshot(ti).values();
        double best = 0.0;
        for (auto [ci, cj] : centers) {
            double c = 0.0;
            for (std::size_t k = 0; k < n_in; ++k) {
                const std::size_t cell = sorted[k];
                const int i = static_cast<int>(cell / g.n), j = static_cast<int>(cell % g.n);
                c += v[static_cast<std::size_t>((i + ci) % g.n) * g.n + (j + cj) % g.n];
            }
            c /= static_cast<double>(n_in);
            best = std::max(best, tail_sup(v, g, sorted, ci, cj, c, lad, r, P.sigma * e, e));
        }
        s += wi * best;
    }
    return s / std::pow(r, e * (1.0 - 2.0 * a) + 2.0 * a);
}

// ---- C, D, excess ----

namespace {

struct Moments {
    double theta = 0.0, u = 0.0, measure = 0.0;
};

Moments spacetime_moments(const Trajectory& tr, const Cylinder& c, double p, bool want_u) {
    const Grid& g = tr.grid();
    check_radius(g, c.r);
    Cylinder back = c;
    back.variant = Variant::Backward;
    const double mean = spacetime_average(tr, back);
    auto cells = resolved_ball(g, c.x, c.r);
    auto w = cylinder_window(tr, back);
    Moments M;
    double wt = 0.0;
    for (auto [i, wi] : w.weights) {
        const auto& v = tr.snapshot(i).values();
        double s = 0.0;
        for (auto k : cells) s += pw(std::abs(v[k] - mean), p);
        M.theta += wi * s;
        if (want_u) {
            VelocityField u = tr.velocity(i);
            const auto& a = u.ux.values();
            const auto& b = u.uy.values();
            const double ma = mean_over(a, cells), mb = mean_over(b, cells);
            double su = 0.0;
            for (auto k : cells) su += pw(std::hypot(a[k] - ma, b[k] - mb), p);
            M.u += wi * su;
        }
        wt += wi;
    }
    const double dA = g.dx() * g.dx();
    M.theta *= dA;
    M.u *= dA;
    M.measure = area(g, cells.size()) * wt;
    return M;
}

}  // namespace

double quantity_C(const Trajectory& tr, const Cylinder& c, const Params& P) {
    const double a = tr.alpha();
    return spacetime_moments(tr, c, P.p, false).theta / std::pow(c.r, P.p * (1.0 - 2.0 * a) + 2.0 + 2.0 * a);
}

double quantity_D(const Trajectory& tr, const Cylinder& c, const Params& P) {
    const double a = tr.alpha();
    return spacetime_moments(tr, c, P.p, true).u / std::pow(c.r, P.p * (1.0 - 2.0 * a) + 2.0 + 2.0 * a);
}

Excess excess_E(const Trajectory& tr, const Cylinder& c, const Params& P) {
    Moments M = spacetime_moments(tr, c, P.p, true);
    Excess E;
    E.measure = M.measure;
    E.S = std::pow(M.theta / M.measure, 1.0 / P.p);
    E.V = std::pow(M.u / M.measure, 1.0 / P.p);
    Cylinder back = c;
    back.variant = Variant::Backward;
    auto w = cylinder_window(tr, back);
    double wt = 0.0;
    for (auto [i, wi] : w.weights) wt += wi;
    const double I = tail_time_integral(tr, w, c.x, c.r, c.r, P.p, P.sigma);
    E.NL = std::pow(I / wt, 1.0 / P.p);
    E.total = E.S + E.V + E.NL;
    return E;
}

double curly_E(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c) {
    check_provider(tr, sp);
    check_radius(tr.grid(), c.r);
    Cylinder back = c;
    back.variant = Variant::Backward;
    auto w = cylinder_window(tr, back);
    const double a = tr.alpha();
    return dissipation_integral(sp, w, c.x, c.r, c.r) / std::pow(c.r, 2.0 * (1.0 - 2.0 * a) + 2.0);
}

double E_tot_q(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c, double q) {
    check_provider(tr, sp);
    Cylinder back = c;
    back.variant = Variant::Backward;
    auto w = cylinder_window(tr, back);
    const double a = tr.alpha();
    const double kin = kinetic_term(tr, back, q);
    const double diss = dissipation_integral(sp, w, c.x, c.r, c.r, q) / std::pow(c.r, q * (1.0 - 2.0 * a) + 2.0);
    return kin + diss;
}

double QuantityReport::get(const std::string& name) const {
    for (auto& [k, v] : values)
        if (k == name) return v;
    throw std::out_of_range("quantity report has no entry " + name);
}

QuantityReport quantity_report(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c, const Params& P) {
    QuantityReport R;
    R.cylinder = c;
    R.params = P;
    R.grid_n = tr.grid().n;
    R.grid_L = tr.grid().L;
    auto add = [&](const std::string& k, double v) { R.values.push_back({k, v}); };
    add("A", quantity_A(tr, c, P));
    add("B_local", quantity_B_local(tr, sp, c, P));
    add("C", quantity_C(tr, c, P));
    add("D", quantity_D(tr, c, P));
    add("T_p", tail_T(tr, c, P.p_tail, P.sigma));
    Excess E = excess_E(tr, c, P);
    add("E_S", E.S);
    add("E_V", E.V);
    add("E_NL", E.NL);
    add("E", E.total);
    add("curly_E", curly_E(tr, sp, c));
    add("E_tot_q", E_tot_q(tr, sp, c, P.m()));
    add("K_q", K_q(tr, c.t, c.r, P.q, true));
    add("B", quantity_B_capital(tr, sp, c.x, c.t, c.r, P, true));
    add("T", tail_T_capital(tr, c.x, c.t, c.r, P, true));
    return R;
}

}  // namespace sqg
