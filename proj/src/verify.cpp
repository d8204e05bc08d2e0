#include "sqglab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "fft.hpp"
#include "sqglab/geometry.hpp"
#include "sqglab/special.hpp"

namespace sqg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t node_at(const Trajectory& tr, double t, const char* what) {
    const double tol = 1e-9 * std::max(1.0, tr.end() - tr.start());
    for (std::size_t i = 0; i < tr.size(); ++i)
        if (std::abs(tr.time(i) - t) <= tol) return i;
    std::ostringstream os;
    os << what << ": t=" << t << " is not a snapshot time";
    throw std::invalid_argument(os.str());
}

// Integral over the torus of f^2 and of |(-Delta)^{a/2} f|^2, from the spectrum.
struct SpectralNorms {
    double l2sq = 0.0, seminorm = 0.0;
};

SpectralNorms spectral_norms(const Field& f, double alpha, bool dealiased) {
    const Grid& g = f.grid();
    const auto c = f.to_spectral().spectrum();
    const int h = g.half();
    SpectralNorms s;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < h; ++j) {
            if (dealiased && !g.retained(i, j)) continue;
            const double a2 = std::norm(c[static_cast<std::size_t>(i) * h + j]) * g.column_weight(j);
            s.l2sq += a2;
            const double k = g.kmag(i, j);
            if (k > 0.0) s.seminorm += std::pow(k, 2.0 * alpha) * a2;
        }
    const double area = g.L * g.L;
    s.l2sq *= area;
    s.seminorm *= area;
    return s;
}

double grid_integral_sq(const Field& f) {
    const auto v = f.to_physical().values();
    double s = 0.0;
    for (double x : v) s += x * x;
    const double dx = f.grid().dx();
    return s * dx * dx;
}

// Integral over [a, b] of the Lagrange interpolant through nodes t[0..m), by
// 3-point Gauss (exact up to degree 5).
double lagrange_piece(const double* t, const double* f, int m, double a, double b) {
    static const double gx[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
    static const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (int q = 0; q < 3; ++q) {
        const double x = c + h * gx[q];
        double p = 0.0;
        for (int i = 0; i < m; ++i) {
            double l = 1.0;
            for (int j = 0; j < m; ++j)
                if (j != i) l *= (x - t[j]) / (t[i] - t[j]);
            p += f[i] * l;
        }
        s += gw[q] * p;
    }
    return h * s;
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int order) {
    std::vector<double> x(order), w(order);
    for (int i = 0; i < order; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5)), dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= order; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = order * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

Cylinder with_radius(const Cylinder& c, double r) {
    Cylinder o = c;
    o.r = r;
    return o;
}

double safe_ratio(double num, double den) {
    if (num == 0.0 && den == 0.0) return 0.0;
    return num / den;
}

// Largest |[u(s)]_{B_R(x)}| over snapshots in [lo, hi], relative to max(1, max speed).
double worst_ball_mean(const Trajectory& tr, Vec2 x, double R, double lo, double hi) {
    const TimeWindow w = time_window(tr, lo, hi);
    double worst = 0.0;
    for (std::size_t i : w.inside) {
        const VelocityField u = tr.velocity(i);
        const Vec2 m = ball_average(u, x, R);
        worst = std::max(worst, std::hypot(m[0], m[1]) / std::max(1.0, u.max_speed()));
    }
    return worst;
}

}  // namespace

double time_integral(const std::vector<double>& t, const std::vector<double>& f) {
    if (t.size() != f.size()) throw std::invalid_argument("time_integral: size mismatch");
    const std::size_t n = t.size();
    if (n < 2) return 0.0;
    // Degree of the local interpolant: 4 (Boole) when five nodes exist.
    const std::size_t d = std::min<std::size_t>(4, n - 1);
    double s = 0.0;
    std::size_t i = 0;
    for (; i + d < n; i += d) s += lagrange_piece(&t[i], &f[i], static_cast<int>(d + 1), t[i], t[i + d]);
    if (i + 1 < n) {
        const std::size_t j = n - 1 - d;
        s += lagrange_piece(&t[j], &f[j], static_cast<int>(d + 1), t[i], t[n - 1]);
    }
    return s;
}

double weighted_time_integral(const std::vector<double>& t, const std::vector<double>& g,
                              const std::function<double(double)>& w, double lo, double hi, int points) {
    if (t.size() != g.size()) throw std::invalid_argument("weighted_time_integral: size mismatch");
    const std::size_t n = t.size();
    if (n < 2 || !(hi > lo)) return 0.0;
    const auto [gx, gw] = gauss_legendre(points);
    const std::size_t m = std::min<std::size_t>(4, n);
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double a = std::max(t[i], lo), b = std::min(t[i + 1], hi);
        if (!(b > a)) continue;
        // Stencil of m nodes around [t_i, t_{i+1}], shifted inside the range.
        std::size_t j = i >= (m - 1) / 2 ? i - (m - 1) / 2 : 0;
        j = std::min(j, n - m);
        const double c = 0.5 * (a + b), h = 0.5 * (b - a);
        for (int k = 0; k < points; ++k) {
            const double x = c + h * gx[k];
            double p = 0.0;
            for (std::size_t u = j; u < j + m; ++u) {
                double l = 1.0;
                for (std::size_t v = j; v < j + m; ++v)
                    if (v != u) l *= (x - t[v]) / (t[u] - t[v]);
                p += g[u] * l;
            }
            s += h * gw[k] * w(x) * p;
        }
    }
    return s;
}

// ---- global, level-set and maximum principle ----

CheckReport check_global_energy(const Trajectory& tr, double s, double t, double rel_tol) {
    if (!(s < t)) throw std::invalid_argument("check_global_energy: need s < t");
    const std::size_t is = node_at(tr, s, "check_global_energy"), it = node_at(tr, t, "check_global_energy");
    const double a = tr.alpha();
    std::vector<double> times, rate;
    for (std::size_t i = is; i <= it; ++i) {
        times.push_back(tr.time(i));
        rate.push_back(spectral_norms(tr.snapshot(i), a, false).seminorm);
    }
    const double quad = time_integral(times, rate);
    const double ledger = tr.has_dissipation_ledger() ? tr.dissipation()[it] - tr.dissipation()[is] : quad;
    const double Es = 0.5 * grid_integral_sq(tr.snapshot(is)), Et = 0.5 * grid_integral_sq(tr.snapshot(it));
    CheckReport r = inequality_report("global_energy", Et + ledger, Es, rel_tol * std::max(Es, 1e-300));
    r.values = {{"energy_s", Es}, {"energy_t", Et}, {"dissipation", ledger}, {"dissipation_quadrature", quad}};
    r.meta = {{"dissipation_source", tr.has_dissipation_ledger() ? "solver-ledger" : "boole"},
              {"s", std::to_string(s)}, {"t", std::to_string(t)}};
    return r;
}

CheckReport check_levelset_energy(const Trajectory& tr, double lambda, double s, double t, double rel_tol) {
    if (!(s < t)) throw std::invalid_argument("check_levelset_energy: need s < t");
    const std::size_t is = node_at(tr, s, "check_levelset_energy"), it = node_at(tr, t, "check_levelset_energy");
    const Grid& g = tr.grid();
    const double a = tr.alpha();
    std::vector<double> times, rate;
    double Es = 0.0, Et = 0.0;
    for (std::size_t i = is; i <= it; ++i) {
        auto v = tr.snapshot(i).to_physical().values();
        for (auto& x : v) x = std::max(x - lambda, 0.0);
        const Field f = Field::from_values(g, std::move(v));
        times.push_back(tr.time(i));
        rate.push_back(spectral_norms(f, a, true).seminorm);
        if (i == is) Es = 0.5 * grid_integral_sq(f);
        if (i == it) Et = 0.5 * grid_integral_sq(f);
    }
    const double D = time_integral(times, rate);
    CheckReport r = inequality_report("levelset_energy", Et + D, Es, rel_tol * std::max(Es, 1e-300));
    r.values = {{"lambda", lambda}, {"energy_s", Es}, {"energy_t", Et}, {"dissipation", D}};
    r.meta = {{"dissipation_source", "boole"}, {"truncation", "physical, dealiased seminorm"}};
    return r;
}

CheckReport check_max_principle(const Trajectory& tr, double rel_tol) {
    if (tr.size() < 2) throw std::invalid_argument("check_max_principle: need at least two snapshots");
    const double a = tr.alpha();
    const double l2 = tr.snapshot(0).l2_norm();
    std::vector<double> sup(tr.size());
    for (std::size_t i = 0; i < tr.size(); ++i) sup[i] = sup_abs(tr.snapshot(i));
    double rise = -kInf, C = 0.0;
    for (std::size_t i = 1; i < tr.size(); ++i) {
        rise = std::max(rise, sup[i] - sup[i - 1]);
        const double dt = tr.time(i) - tr.start();
        if (l2 > 0.0) C = std::max(C, sup[i] * std::pow(dt, 1.0 / (2.0 * a)) / l2);
    }
    CheckReport r = inequality_report("max_principle", rise, 0.0, rel_tol * std::max(sup[0], 1e-300));
    if (!std::isfinite(C)) {
        r.pass = false;
        r.status = CheckStatus::InequalityFailure;
    }
    if (sup[0] == 0.0) r.status = CheckStatus::Degenerate;
    r.values = {{"C_fit", C}, {"sup_initial", sup.front()}, {"sup_final", sup.back()}, {"l2_initial", l2}};
    return r;
}

// ---- test functions ----

TestFunction TestFunction::bump(Vec2 x0, double t0, double r, double alpha) {
    TestFunction f;
    f.center = x0;
    f.t0 = t0;
    f.radius = r;
    f.tau = std::pow(r, 2.0 * alpha);
    f.y_collar = r / 8.0;
    f.y_top = r;
    return f;
}

TestFunction TestFunction::whole_domain(double s, double t, double y_collar, double y_top) {
    TestFunction f;
    f.t0 = t;
    f.tau = t - s;
    f.radius = 0.0;
    f.y_collar = y_collar;
    f.y_top = y_top;
    f.full_space = true;
    f.open_start = true;
    return f;
}

double TestFunction::space(double rho) const {
    if (full_space) return 1.0;
    return special::smooth_step((rho / radius - flat) / (1.0 - flat));
}

double TestFunction::space_d1(double rho) const {
    if (full_space) return 0.0;
    const double w = radius * (1.0 - flat);
    return special::smooth_step_derivative((rho / radius - flat) / (1.0 - flat)) / w;
}

double TestFunction::space_laplacian(double rho) const {
    if (full_space) return 0.0;
    const double w = radius * (1.0 - flat), s = (rho / radius - flat) / (1.0 - flat);
    if (s <= 0.0 || s >= 1.0) return 0.0;
    const double d1 = special::smooth_step_derivative(s) / w;
    const double d2 = special::smooth_step_second_derivative(s) / (w * w);
    return d2 + d1 / rho;
}

double TestFunction::height(double y) const {
    if (y <= y_collar) return 1.0;
    return special::smooth_step((y - y_collar) / (y_top - y_collar));
}

double TestFunction::height_d1(double y) const {
    if (y <= y_collar) return 0.0;
    return special::smooth_step_derivative((y - y_collar) / (y_top - y_collar)) / (y_top - y_collar);
}

double TestFunction::height_d2(double y) const {
    if (y <= y_collar) return 0.0;
    const double w = y_top - y_collar;
    return special::smooth_step_second_derivative((y - y_collar) / w) / (w * w);
}

double TestFunction::time(double t) const {
    if (open_start) return (t >= t0 - tau && t <= t0) ? 1.0 : 0.0;
    if (t > t0) return 0.0;
    return special::smooth_step((t0 - t) / tau);
}

double TestFunction::time_d1(double t) const {
    if (open_start || t > t0) return 0.0;
    return -special::smooth_step_derivative((t0 - t) / tau) / tau;
}

double TestFunction::c2_bound() const {
    // Sup norms of S', S'' on (0,1), sampled densely once.
    static const std::pair<double, double> dmax = [] {
        double m1 = 0.0, m2 = 0.0;
        for (int i = 1; i < 4000; ++i) {
            const double s = i / 4000.0;
            m1 = std::max(m1, std::abs(special::smooth_step_derivative(s)));
            m2 = std::max(m2, std::abs(special::smooth_step_second_derivative(s)));
        }
        return std::make_pair(m1, m2);
    }();
    double bound = 1.0;
    auto add = [&](double scale) {
        bound = std::max(bound, dmax.first * scale);
        bound = std::max(bound, dmax.second * scale * scale);
    };
    if (!full_space) add(1.0 / (radius * (1.0 - flat)));
    add(1.0 / (y_top - y_collar));
    if (!open_start) add(1.0 / tau);
    if (!full_space) bound = std::max(bound, 3.0 * dmax.second / std::pow(radius * (1.0 - flat), 2.0));
    return bound;
}

void TestFunction::validate(const Grid& g, double c2_max) const {
    if (!(y_collar > 0.0) || !(y_top > y_collar)) throw std::invalid_argument("test function: need 0 < y_collar < y_top");
    if (!(tau > 0.0)) throw std::invalid_argument("test function: tau must be positive");
    if (!full_space) {
        if (!(radius > 0.0)) throw std::invalid_argument("test function: radius must be positive");
        if (!(flat >= 0.0 && flat < 1.0)) throw std::invalid_argument("test function: flat must lie in [0,1)");
        if (radius > 0.5 * g.L) throw std::out_of_range("test function: support exceeds half the box");
        if (radius < 8.0 * g.dx()) {
            std::ostringstream os;
            os << "under-resolved test function: radius " << radius << " spans fewer than 8 cells (dx=" << g.dx()
               << ")";
            throw UnderResolved(os.str());
        }
    }
    if (c2_bound() > c2_max) throw std::invalid_argument("test function: C^2 bound above the configured maximum");
}

// ---- height quadrature ----

HeightRule HeightRule::build(double alpha, double y_collar, double y_top, int dyadic_panels, int outer_panels,
                             int order) {
    if (!(y_collar > 0.0) || !(y_top > y_collar)) throw std::invalid_argument("height rule: need 0 < y_collar < y_top");
    const auto [gx, gw] = gauss_legendre(order);
    const double b = 1.0 - 2.0 * alpha;
    HeightRule h;
    auto push_t = [&](double ta, double tb) {
        for (int k = 0; k < order; ++k) {
            const double t = 0.5 * (ta + tb) + 0.5 * (tb - ta) * gx[k];
            const double w = 0.5 * (tb - ta) * gw[k];
            const double y = std::pow(t, 1.0 / (2.0 * alpha));
            // dy = y^b dt / (2a)
            h.y.push_back(y);
            h.w_b.push_back(w * std::pow(y, 2.0 * b) / (2.0 * alpha));
            h.w_mb.push_back(w / (2.0 * alpha));
        }
    };
    const double tc = std::pow(y_collar, 2.0 * alpha);
    push_t(0.0, std::ldexp(tc, -dyadic_panels));
    for (int k = dyadic_panels - 1; k >= 0; --k) push_t(std::ldexp(tc, -k - 1), std::ldexp(tc, -k));
    const double dy = (y_top - y_collar) / outer_panels;
    for (int p = 0; p < outer_panels; ++p) {
        const double ya = y_collar + p * dy;
        for (int k = 0; k < order; ++k) {
            const double y = ya + 0.5 * dy * (1.0 + gx[k]);
            const double w = 0.5 * dy * gw[k];
            h.y.push_back(y);
            h.w_b.push_back(w * std::pow(y, b));
            h.w_mb.push_back(w * std::pow(y, -b));
        }
    }
    return h;
}

double profile_constant(double alpha) { return -1.0 / special::ext_flux_limit(alpha); }

// ---- local energy ----

namespace {

// Per-height spectral multipliers phi(|k| y) and |k|^{2a} s^b phi'(s), s = |k| y,
// memoized on the integer |m|^2 of an n-grid half spectrum.
struct ProfileTable {
    std::vector<int> index;
    std::vector<std::vector<double>> value, flux;

    ProfileTable(const Grid& g, double alpha, const std::vector<double>& ys) {
        const int h = g.half();
        std::unordered_map<long, int> slot;
        std::vector<double> kmag;
        index.resize(g.spec_size());
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < h; ++j) {
                const long m = static_cast<long>(g.mode(i)) * g.mode(i) + static_cast<long>(j) * j;
                auto [it, fresh] = slot.emplace(m, static_cast<int>(kmag.size()));
                if (fresh) kmag.push_back(g.k0() * std::sqrt(static_cast<double>(m)));
                index[static_cast<std::size_t>(i) * h + j] = it->second;
            }
        const double b = 1.0 - 2.0 * alpha;
        value.assign(ys.size(), std::vector<double>(kmag.size()));
        flux.assign(ys.size(), std::vector<double>(kmag.size()));
        for (std::size_t l = 0; l < ys.size(); ++l)
            for (std::size_t m = 0; m < kmag.size(); ++m) {
                const double k = kmag[m];
                if (k == 0.0) {
                    value[l][m] = 1.0;
                    flux[l][m] = 0.0;
                    continue;
                }
                const double s = k * ys[l];
                value[l][m] = special::ext_profile(alpha, s);
                flux[l][m] = std::pow(k, 2.0 * alpha) * std::pow(s, b) * special::ext_profile_derivative(alpha, s);
            }
    }
};

int fft_size_at_least(int m) {
    for (int s = std::max(m, 2);; ++s) {
        int r = s;
        for (int f : {2, 3, 5})
            while (r % f == 0) r /= f;
        if (r == 1 && s % 2 == 0) return s;
    }
}

// Largest |mode| per axis carrying a nonzero coefficient.
int spectral_band(const Field& f) {
    const Grid& g = f.grid();
    const Field s = f.to_spectral();
    const auto& c = s.spectrum();
    const int h = g.half();
    int band = 0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < h; ++j)
            if (c[static_cast<std::size_t>(i) * h + j] != cplx(0.0, 0.0))
                band = std::max({band, std::abs(g.mode(i)), j});
    return band;
}

// Half spectrum of an n-grid field placed on an M-grid (M >= n), zero padded.
void pad_into(const Grid& g, const cplx* c, int M, cplx* out) {
    const int h = g.half(), hm = M / 2 + 1;
    std::fill(out, out + static_cast<std::size_t>(M) * hm, cplx(0.0, 0.0));
    for (int i = 0; i < g.n; ++i) {
        const int m = g.mode(i);
        if (m == g.n / 2) continue;
        const int ii = m >= 0 ? m : m + M;
        for (int j = 0; j < h - (g.n % 2 == 0 ? 1 : 0); ++j)
            out[static_cast<std::size_t>(ii) * hm + j] = c[static_cast<std::size_t>(i) * h + j];
    }
}

// X, grad X and Laplacian X of the test function projected onto modes with
// |m| <= band per axis, sampled on the M-grid. The projection leaves every
// integral against a field of lower band unchanged.
struct SpatialWeights {
    int M = 0;
    std::vector<double> X, gx, gy, lap;
};

SpatialWeights spatial_weights(const TestFunction& phi, double L, int M, int band) {
    SpatialWeights w;
    w.M = M;
    const std::size_t N = static_cast<std::size_t>(M) * M;
    if (phi.full_space) {
        w.X.assign(N, 1.0);
        w.gx.assign(N, 0.0);
        w.gy.assign(N, 0.0);
        w.lap.assign(N, 0.0);
        return w;
    }
    int Mf = 1024;
    while (Mf < 4 * M) Mf *= 2;
    const double hf = L / Mf;
    std::vector<double> xs(static_cast<std::size_t>(Mf) * Mf);
    for (int i = 0; i < Mf; ++i) {
        const double d1 = std::remainder(i * hf - phi.center[0], L);
        for (int j = 0; j < Mf; ++j) {
            const double d2 = std::remainder(j * hf - phi.center[1], L);
            const double rho = std::hypot(d1, d2);
            xs[static_cast<std::size_t>(i) * Mf + j] = rho < phi.radius ? phi.space(rho) : 0.0;
        }
    }
    const int hf2 = Mf / 2 + 1, hm = M / 2 + 1;
    std::vector<cplx> cf(static_cast<std::size_t>(Mf) * hf2);
    fft::forward(Mf, xs.data(), cf.data());
    band = std::min(band, M / 2 - 1);
    const double k0 = 2.0 * std::numbers::pi / L;
    std::vector<cplx> c0(static_cast<std::size_t>(M) * hm), c1(c0.size()), c2(c0.size()), c3(c0.size());
    for (int m1 = -band; m1 <= band; ++m1) {
        const int fi = m1 >= 0 ? m1 : m1 + Mf, mi = m1 >= 0 ? m1 : m1 + M;
        for (int m2 = 0; m2 <= band; ++m2) {
            const cplx v = cf[static_cast<std::size_t>(fi) * hf2 + m2];
            const std::size_t k = static_cast<std::size_t>(mi) * hm + m2;
            const double k1 = k0 * m1, k2 = k0 * m2;
            c0[k] = v;
            c1[k] = v * cplx(0.0, k1);
            c2[k] = v * cplx(0.0, k2);
            c3[k] = -(k1 * k1 + k2 * k2) * v;
        }
    }
    w.X.resize(N);
    w.gx.resize(N);
    w.gy.resize(N);
    w.lap.resize(N);
    fft::inverse(M, c0.data(), w.X.data());
    fft::inverse(M, c1.data(), w.gx.data());
    fft::inverse(M, c2.data(), w.gy.data());
    fft::inverse(M, c3.data(), w.lap.data());
    return w;
}

}  // namespace

std::vector<CheckReport> check_local_energy_orders(const SlabProvider& sp, const TestFunction& phi,
                                                   const std::vector<double>& qs, double L, double M,
                                                   const LocalEnergyOptions& opt) {
    const Trajectory& tr = sp.trajectory();
    const Grid& g = tr.grid();
    const double a = tr.alpha(), b = 1.0 - 2.0 * a;
    if (qs.empty()) throw std::invalid_argument("check_local_energy: no exponent given");
    for (double q : qs)
        if (!(q >= 2.0)) throw std::invalid_argument("check_local_energy: q must be at least 2");
    if (!(L > 0.0)) throw std::invalid_argument("check_local_energy: L must be positive");
    phi.validate(g, opt.c2_max);

    const std::size_t itop = node_at(tr, phi.t0, "check_local_energy");
    const double lo = phi.t0 - phi.tau;
    const double ttol = 1e-9 * std::max(1.0, tr.end() - tr.start());
    if (lo < tr.start() - ttol) throw OutsideHorizon("check_local_energy: test function starts before the trajectory");
    std::size_t ilo = 0;
    if (phi.open_start) {
        ilo = node_at(tr, lo, "check_local_energy");
    } else {
        while (ilo + 1 < tr.size() && tr.time(ilo + 1) <= lo + ttol) ++ilo;
    }
    if (itop < ilo + 3) throw UnderResolved("check_local_energy: fewer than four snapshots in the time support");
    // One extra node on each side where available, for the interpolation stencils.
    const std::size_t first = ilo > 0 ? ilo - 1 : 0;

    // Products of two band-K fields are integrated exactly on M1, the
    // transport triple product on M0, against the band-projected weights.
    int K = 0;
    for (std::size_t is = first; is <= itop; ++is) K = std::max(K, spectral_band(tr.snapshot(is)));
    K = std::max(K, 1);
    const int M1 = std::max(g.n, fft_size_at_least(4 * K + 2));
    const int M0 = std::max(g.n, fft_size_at_least(6 * K + 2));
    const SpatialWeights w1 = spatial_weights(phi, g.L, M1, M1 - 2 * K - 1);
    const SpatialWeights w0 = spatial_weights(phi, g.L, M0, M0 - 3 * K - 1);
    const std::size_t N1 = static_cast<std::size_t>(M1) * M1, N0 = static_cast<std::size_t>(M0) * M0;
    const double dA1 = (g.L / M1) * (g.L / M1), dA0 = (g.L / M0) * (g.L / M0);
    // Cells where the projected weights are not negligible.
    std::vector<std::size_t> act1, act0;
    {
        double m1 = 0.0, m0 = 0.0;
        for (std::size_t k = 0; k < N1; ++k) m1 = std::max({m1, std::abs(w1.X[k]), std::abs(w1.lap[k])});
        for (std::size_t k = 0; k < N0; ++k) m0 = std::max({m0, std::abs(w0.gx[k]), std::abs(w0.gy[k])});
        for (std::size_t k = 0; k < N1; ++k)
            if (std::abs(w1.X[k]) > 1e-15 * m1 || std::abs(w1.lap[k]) > 1e-15 * m1) act1.push_back(k);
        for (std::size_t k = 0; k < N0; ++k)
            if (std::abs(w0.gx[k]) > 1e-15 * m0 || std::abs(w0.gy[k]) > 1e-15 * m0) act0.push_back(k);
    }

    const HeightRule hr = HeightRule::build(a, phi.y_collar, phi.y_top, opt.dyadic_panels, opt.outer_panels, opt.order);
    const std::size_t nl = hr.y.size();
    const ProfileTable table(g, a, hr.y);
    std::vector<double> wb(nl), wmb(nl), wcurv(nl);
    for (std::size_t l = 0; l < nl; ++l) {
        const double y = hr.y[l];
        wb[l] = hr.w_b[l] * phi.height(y);
        wmb[l] = hr.w_mb[l] * phi.height(y);
        wcurv[l] = hr.w_b[l] * (phi.height_d2(y) + b / y * phi.height_d1(y));
    }

    const std::size_t nq = qs.size();
    const int h = g.half(), h1 = M1 / 2 + 1, h0 = M0 / 2 + 1;
    std::vector<cplx> cj(g.spec_size()), cx(g.spec_size()), cy(g.spec_size()), cf(g.spec_size());
    std::vector<cplx> pad1(static_cast<std::size_t>(M1) * h1), pad0(static_cast<std::size_t>(M0) * h0);
    std::vector<double> v(N1), vx(N1), vy(N1), F(N1), e0(N0), ux(N0), uy(N0);

    auto to_fine = [&](const std::vector<cplx>& c, int Mx, std::vector<cplx>& pad, std::vector<double>& out) {
        pad_into(g, c.data(), Mx, pad.data());
        fft::inverse(Mx, pad.data(), out.data());
    };
    // |e|^q and |e|^{q-2}.
    auto powers = [](double e, double q, double& eq, double& em2) {
        if (q == 2.0) {
            eq = e * e;
            em2 = 1.0;
            return;
        }
        const double ae = std::abs(e);
        em2 = std::pow(ae, q - 2.0);
        eq = em2 * ae * ae;
    };

    struct Terms {
        double kin = 0.0, transport = 0.0, diss = 0.0, ext = 0.0;
    };
    auto snapshot_terms = [&](std::size_t is) {
        std::vector<Terms> out(nq);
        const Field spec = tr.snapshot(is).to_spectral();
        const auto& c = spec.spectrum();
        const VelocityField u = riesz_velocity(tr.snapshot(is));
        const Vec2 drift = tr.drift(is);
        to_fine(c, M0, pad0, e0);
        to_fine(u.ux.to_spectral().spectrum(), M0, pad0, ux);
        to_fine(u.uy.to_spectral().spectrum(), M0, pad0, uy);
        to_fine(c, M1, pad1, v);
        for (std::size_t iq = 0; iq < nq; ++iq) {
            double tra = 0.0, kin = 0.0, eq, em2;
            for (std::size_t k : act0) {
                powers((e0[k] - M) / L, qs[iq], eq, em2);
                tra += eq * ((ux[k] + drift[0]) * w0.gx[k] + (uy[k] + drift[1]) * w0.gy[k]);
            }
            for (std::size_t k : act1) {
                powers((v[k] - M) / L, qs[iq], eq, em2);
                kin += w1.X[k] * eq;
            }
            out[iq].transport = tra * dA0;
            out[iq].kin = kin * dA1;
        }
        for (std::size_t l = 0; l < nl; ++l) {
            const auto& val = table.value[l];
            const auto& flx = table.flux[l];
            for (int i = 0; i < g.n; ++i)
                for (int j = 0; j < h; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * h + j;
                    const int m = table.index[k];
                    cj[k] = c[k] * val[m];
                    cf[k] = c[k] * flx[m];
                    cx[k] = cj[k] * cplx(0.0, g.k1(i));
                    cy[k] = cj[k] * cplx(0.0, g.k2(j));
                }
            to_fine(cj, M1, pad1, v);
            to_fine(cx, M1, pad1, vx);
            to_fine(cy, M1, pad1, vy);
            to_fine(cf, M1, pad1, F);
            const double wdb = wb[l], wdm = wmb[l], wc = wcurv[l];
            for (std::size_t iq = 0; iq < nq; ++iq) {
                const double q = qs[iq], pref = 0.25 * q * q / (L * L);
                double diss = 0.0, ext = 0.0, eq, em2;
                for (std::size_t k : act1) {
                    powers((v[k] - M) / L, q, eq, em2);
                    diss += w1.X[k] * em2 * ((vx[k] * vx[k] + vy[k] * vy[k]) * wdb + F[k] * F[k] * wdm);
                    ext += eq * (w1.lap[k] * wdb + w1.X[k] * wc);
                }
                out[iq].diss += pref * diss * dA1;
                out[iq].ext += ext * dA1;
            }
        }
        return out;
    };

    std::vector<double> times;
    std::vector<std::vector<Terms>> per;  // per snapshot, per exponent
    for (std::size_t is = first; is <= itop; ++is) {
        times.push_back(tr.time(is));
        per.push_back(snapshot_terms(is));
    }
    const std::size_t off = ilo - first;

    // Calibrated normalization of the extension energy (agrees with profile_constant to ~1e-6).
    const double c_alpha = calibrate_constant(a).c_measured;
    auto T = [&](double t) { return phi.time(t); };
    auto dT = [&](double t) { return phi.time_d1(t); };
    std::vector<CheckReport> reports;
    for (std::size_t iq = 0; iq < nq; ++iq) {
        const double q = qs[iq];
        std::vector<double> kin, diss, tra, ext;
        for (auto& p : per) {
            kin.push_back(p[iq].kin);
            diss.push_back(p[iq].diss);
            tra.push_back(p[iq].transport);
            ext.push_back(p[iq].ext);
        }
        const double T1 = phi.time(phi.t0) * kin.back();
        const double T2 = 4.0 * (1.0 - 1.0 / q) * c_alpha * weighted_time_integral(times, diss, T, lo, phi.t0);
        const double T3 = weighted_time_integral(times, kin, dT, lo, phi.t0);
        const double T4 = weighted_time_integral(times, tra, T, lo, phi.t0);
        const double T5 = c_alpha * weighted_time_integral(times, ext, T, lo, phi.t0);
        const double T0 = phi.open_start ? kin[off] : 0.0;
        const double lhs = T1 + T2, rhs = T3 + T4 + T5 + T0;
        const double scale =
            std::abs(T1) + std::abs(T2) + std::abs(T3) + std::abs(T4) + std::abs(T5) + std::abs(T0);
        CheckReport r = inequality_report("local_energy", lhs, rhs, opt.rel_tol * scale);
        r.values = {{"kinetic", T1},
                    {"dissipation", T2},
                    {"time_derivative", T3},
                    {"transport", T4},
                    {"extension", T5},
                    {"initial", T0},
                    {"scale", scale},
                    {"relative_margin", scale > 0.0 ? r.margin / scale : 0.0},
                    {"c_alpha", c_alpha},
                    {"q", q},
                    {"L", L},
                    {"M", M}};
        std::ostringstream geo;
        geo << "x0=(" << phi.center[0] << "," << phi.center[1] << ") r=" << phi.radius << " t0=" << phi.t0
            << " tau=" << phi.tau << " y=[" << phi.y_collar << "," << phi.y_top << "]";
        r.meta = {{"test_function", geo.str()},
                  {"heights", std::to_string(nl)},
                  {"snapshots", std::to_string(itop - first + 1)},
                  {"quadrature_grids", std::to_string(M1) + "," + std::to_string(M0)},
                  {"time_rule", "cubic product integration"}};
        reports.push_back(std::move(r));
    }
    return reports;
}

CheckReport check_local_energy(const SlabProvider& sp, const TestFunction& phi, double q, double L, double M,
                               const LocalEnergyOptions& opt) {
    return check_local_energy_orders(sp, phi, {q}, L, M, opt).front();
}

CheckReport local_global_comparison(const SlabProvider& sp, double s, double t, const LocalEnergyOptions& opt) {
    const Trajectory& tr = sp.trajectory();
    const double Lbox = tr.grid().L;
    const TestFunction phi = TestFunction::whole_domain(s, t, 2.0 * Lbox, 3.0 * Lbox);
    const CheckReport loc = check_local_energy(sp, phi, 2.0, 1.0, 0.0, opt);
    const CheckReport glob = check_global_energy(tr, s, t);
    const double leak = std::abs(0.5 * loc.lhs - glob.lhs) / std::max(glob.lhs, 1e-300);
    CheckReport r = inequality_report("local_global_comparison", leak, 0.02, 0.0);
    if (glob.lhs == 0.0 && loc.lhs == 0.0) r.status = CheckStatus::Degenerate;
    r.values = {{"leakage", leak},
                {"local_lhs_half", 0.5 * loc.lhs},
                {"global_lhs", glob.lhs},
                {"local_margin", loc.margin},
                {"local_scale", loc.value("scale")},
                {"boundary_term_half", 0.5 * loc.value("extension")},
                {"global_margin", glob.margin}};
    return r;
}

// ---- Poincare ----

CheckReport check_poincare(const Field& f, const ExtensionSlab& slab, Vec2 center, double r, double q, double cap) {
    const Grid& g = f.grid();
    const double a = slab.alpha();
    if (!(q >= 2.0 && q <= 2.0 / (1.0 - a) + 1e-12))
        throw std::invalid_argument("check_poincare: q must lie in [2, 2/(1-alpha)]");
    const auto cells = resolved_ball(g, center, r, 8);
    const auto v = f.to_physical().values();
    double mean = 0.0;
    for (auto k : cells) mean += v[k];
    mean /= static_cast<double>(cells.size());
    double mq = 0.0;
    for (auto k : cells) mq += std::pow(std::abs(v[k] - mean), q);
    const double lhs = std::pow(mq / static_cast<double>(cells.size()), 1.0 / q);

    const double dx = g.dx(), expo = 1.0 + a;  // |x-y|^{2+2a} = (|x-y|^2)^{1+a}
    double gag = 0.0;
    for (std::size_t p = 0; p < cells.size(); ++p) {
        const int ip = static_cast<int>(cells[p] / g.n), jp = static_cast<int>(cells[p] % g.n);
        for (std::size_t o = p + 1; o < cells.size(); ++o) {
            const int io = static_cast<int>(cells[o] / g.n), jo = static_cast<int>(cells[o] % g.n);
            const double d1 = std::remainder((ip - io) * dx, g.L), d2 = std::remainder((jp - jo) * dx, g.L);
            const double diff = v[cells[p]] - v[cells[o]];
            gag += 2.0 * diff * diff / std::pow(d1 * d1 + d2 * d2, expo);
        }
    }
    gag *= dx * dx * dx * dx;
    const double sc = std::pow(r, a - 1.0);
    const double middle = sc * std::sqrt(gag);
    EnergyRegion reg;
    reg.whole_torus = false;
    reg.center = center;
    reg.radius = 4.0 * r / 3.0;
    reg.y_cut = 4.0 * r / 3.0;
    const double rhs = sc * std::sqrt(weighted_energy(slab, reg));
    const double r1 = safe_ratio(lhs, middle), r2 = safe_ratio(middle, rhs);
    CheckReport rep;
    rep.name = "poincare";
    rep.lhs = std::max(r1, r2);
    rep.rhs = cap;
    rep.margin = cap - rep.lhs;
    rep.pass = std::isfinite(rep.lhs) && rep.margin >= 0.0;
    rep.status = rep.pass ? CheckStatus::Pass : CheckStatus::InequalityFailure;
    if (lhs == 0.0 && middle == 0.0 && rhs == 0.0) rep.status = CheckStatus::Degenerate;
    rep.values = {{"lq_oscillation", lhs}, {"gagliardo_scaled", middle}, {"extension_scaled", rhs},
                  {"ratio_lq_gagliardo", r1}, {"ratio_gagliardo_extension", r2}};
    rep.meta = {{"extension_region", "cylinder B_{4r/3} x [0, 4r/3]"}, {"cells", std::to_string(cells.size())}};
    return rep;
}

// ---- conditional probes ----

CheckReport probe_interpolation(const Trajectory& tr, const SlabProvider& sp, const Cylinder& c, const Params& P,
                                double cap, double mean_tol) {
    const double a = P.alpha, p = P.p;
    const Cylinder c15 = with_radius(c, 1.5 * c.r), c2 = with_radius(c, 2.0 * c.r);
    const double D = quantity_D(tr, c, P);
    const double A15 = quantity_A(tr, c15, P), B15 = quantity_B_local(tr, sp, c15, P), T15 = tail_T(tr, c15, p, P.sigma);
    const double den1 = std::pow(A15, a) * B15 + T15;
    const double r1 = safe_ratio(D, den1);

    const double worst = worst_ball_mean(tr, c.x, c.r, c.t - std::pow(2.0 * c.r, 2.0 * a), c.t);
    const bool second = worst <= mean_tol;
    double r2 = 0.0, Cv = 0.0, den2 = 0.0;
    if (second) {
        Cv = quantity_C(tr, c, P);
        const double A2 = quantity_A(tr, c2, P), B2 = quantity_B_local(tr, sp, c2, P), T2 = tail_T(tr, c2, p, P.sigma);
        den2 = std::pow(A2, a) * B2 *
               (1.0 + std::pow(A2, 2.0 * a / p) * std::pow(B2, 2.0 / p) + std::pow(T2, 2.0 / p));
        r2 = safe_ratio(Cv, den2);
    }
    CheckReport rep;
    rep.name = "interpolation";
    rep.lhs = std::max(r1, r2);
    rep.rhs = cap;
    rep.margin = cap - rep.lhs;
    rep.pass = std::isfinite(rep.lhs) && rep.margin >= 0.0;
    rep.status = rep.pass ? CheckStatus::Pass : CheckStatus::InequalityFailure;
    if (D == 0.0 && den1 == 0.0 && (!second || (Cv == 0.0 && den2 == 0.0))) rep.status = CheckStatus::Degenerate;
    rep.values = {{"ratio_D", r1}, {"ratio_C", r2}, {"D", D}, {"C", Cv}, {"den_D", den1}, {"den_C", den2},
                  {"second_tested", second ? 1.0 : 0.0}, {"ball_mean", worst}};
    if (!second) rep.note = "ball mean of u not zero on the window: C bound not tested";
    return rep;
}

namespace {

double decay_quantity(const Trajectory& tr, const Cylinder& c, const Params& P) {
    return std::pow(quantity_A(tr, c, P), P.alpha) + std::pow(tail_T(tr, c, P.p, P.sigma), 2.0 / P.p);
}

}  // namespace

CheckReport probe_energy_decay(const Trajectory& tr, const SlabProvider& sp, Vec2 x, double t, double r,
                               const Params& P, const DecayKnobs& k) {
    const Cylinder cr{x, t, r, Variant::Backward};
    const Cylinder cm{x, t, P.mu * r, Variant::Backward};
    const double big = decay_quantity(tr, cr, P), small = decay_quantity(tr, cm, P);
    const double Bl = quantity_B_local(tr, sp, cr, P);
    const double worst = worst_ball_mean(tr, x, 0.5 * r, t - std::pow(r, 2.0 * P.alpha), t);
    CheckReport rep = inequality_report("energy_decay", small, big / k.K + k.eps, 0.0);
    const double contraction = safe_ratio(small, big);
    rep.values = {{"A_alpha_T_mu_r", small}, {"A_alpha_T_r", big},     {"contraction", contraction},
                  {"B_local", Bl},          {"delta", k.delta},        {"ball_mean", worst},
                  {"K", k.K},               {"eps", k.eps}};
    std::string why;
    if (!(worst <= k.mean_tol)) why = "ball mean of u over B_{r/2} is not zero";
    if (!(Bl < k.delta)) why += std::string(why.empty() ? "" : "; ") + "B_local(r) is not below delta";
    if (!why.empty()) mark_hypothesis_failure(rep, why);
    return rep;
}

CheckReport probe_iterated_decay(const RescaledFamily& fam, const Params& P, int j0, const DecayKnobs& k) {
    CheckReport rep;
    rep.name = "iterated_decay";
    rep.values = {{"j0", static_cast<double>(j0)}, {"levels", static_cast<double>(fam.levels.size())}};
    if (j0 < 1) throw std::invalid_argument("probe_iterated_decay: j0 must be at least 1");
    if (static_cast<int>(fam.levels.size()) < j0 + 1) {
        mark_hypothesis_failure(rep, "scale floor reached before level j0" +
                                         (fam.floor_reason.empty() ? std::string() : ": " + fam.floor_reason));
        rep.pass = false;
        return rep;
    }
    std::vector<double> seq;
    double start = 0.0;
    std::string why;
    try {
        for (int j = 0; j <= j0; ++j) {
            const Trajectory& lv = fam.levels[j].data;
            const SlabProvider sp(lv);
            const Cylinder half{{0.0, 0.0}, 0.0, 0.5, Variant::Backward};
            const Cylinder cm{{0.0, 0.0}, 0.0, P.mu, Variant::Backward};
            if (j == 0) start = decay_quantity(lv, half, P);
            seq.push_back(decay_quantity(lv, cm, P));
            if (j < j0) {
                const double gate = quantity_B_local(lv, sp, half, P) + tail_T(lv, half, P.m(), P.sigma);
                rep.values.emplace_back("gate_" + std::to_string(j), gate);
                if (!(gate <= k.delta) && why.empty()) why = "smallness gate fails at level " + std::to_string(j);
            }
        }
    } catch (const UnderResolved& e) {
        mark_hypothesis_failure(rep, std::string("resource gate: ") + e.what());
        rep.pass = false;
        return rep;
    }
    const double lhs = seq.back(), rhs = std::ldexp(start, -j0) + k.eps;
    CheckReport ineq = inequality_report("iterated_decay", lhs, rhs, 0.0);
    ineq.values = rep.values;
    ineq.values.emplace_back("start", start);
    for (int j = 0; j <= j0; ++j) ineq.values.emplace_back("a_" + std::to_string(j), seq[j]);
    const double contraction = start > 0.0 ? std::pow(lhs / start, 1.0 / j0) : 0.0;
    ineq.values.emplace_back("contraction", contraction);
    bool mono = true;
    for (std::size_t j = 1; j < seq.size(); ++j) mono = mono && seq[j] <= seq[j - 1];
    ineq.values.emplace_back("nonincreasing", mono ? 1.0 : 0.0);
    if (!why.empty()) mark_hypothesis_failure(ineq, why);
    return ineq;
}

CheckReport probe_excess_decay(const Trajectory& tr, const Cylinder& c, const Params& P, double c_const,
                               double gamma, double eps0) {
    const double Er = excess_E(tr, c, P).total;
    const double Em = excess_E(tr, with_radius(c, P.mu * c.r), P).total;
    CheckReport rep = inequality_report("excess_decay", Em, c_const * std::pow(P.mu, gamma) * Er, 0.0);
    const double expo = (Er > 0.0 && Em > 0.0) ? std::log(Em / Er) / std::log(P.mu) : (Em == 0.0 ? kInf : -kInf);
    const double thresh = std::pow(c.r, 1.0 - 2.0 * P.alpha) * eps0;
    rep.values = {{"E_r", Er}, {"E_mu_r", Em}, {"observed_exponent", expo}, {"gamma", gamma}, {"threshold", thresh}};
    if (!(Er <= thresh)) mark_hypothesis_failure(rep, "excess above r^{1-2a} eps0");
    return rep;
}

CheckReport check_tail_transfer(const Trajectory& tr, const SlabProvider& sp, Vec2 x, double t, double r, double rho,
                                const Params& P, bool clip) {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("check_tail_transfer: rho must lie in (0,1)");
    const double Tr = tail_T_capital(tr, x, t, r, P, clip);
    const double Tq = tail_T_capital(tr, x, t, rho * r, P, clip);
    const double Br = quantity_B_capital(tr, sp, x, t, r, P, clip);
    const double excess = Tq - 0.5 * Tr;
    double C = 0.0;
    if (excess > 0.0) C = Br > 0.0 ? excess / Br : kInf;
    CheckReport rep;
    rep.name = "tail_transfer";
    rep.lhs = Tq;
    rep.rhs = std::isfinite(C) ? 0.5 * Tr + C * Br : kInf;
    rep.margin = rep.rhs - rep.lhs;
    rep.pass = std::isfinite(C);
    rep.status = rep.pass ? CheckStatus::Pass : CheckStatus::InequalityFailure;
    if (Tr == 0.0 && Tq == 0.0 && Br == 0.0) rep.status = CheckStatus::Degenerate;
    rep.values = {{"C_fit", C}, {"T_r", Tr}, {"T_rho_r", Tq}, {"B_r", Br}, {"rho", rho}};
    return rep;
}

// ---- JSON ----

std::string report_json(const CheckReport& r) {
    nlohmann::ordered_json j;
    auto num = [](double v) -> nlohmann::ordered_json {
        if (std::isfinite(v)) return v;
        return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
    };
    j["name"] = r.name;
    j["status"] = status_name(r.status);
    j["pass"] = r.pass;
    j["lhs"] = num(r.lhs);
    j["rhs"] = num(r.rhs);
    j["margin"] = num(r.margin);
    j["tolerance"] = num(r.tolerance);
    nlohmann::ordered_json vals = nlohmann::ordered_json::object();
    for (auto& [k, v] : r.values) vals[k] = num(v);
    j["values"] = vals;
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (auto& [k, v] : r.meta) meta[k] = v;
    j["meta"] = meta;
    if (!r.note.empty()) j["note"] = r.note;
    return j.dump();
}

std::string reports_jsonl(const std::vector<CheckReport>& reports) {
    std::string out;
    for (auto& r : reports) out += report_json(r) + "\n";
    return out;
}

}  // namespace sqg
