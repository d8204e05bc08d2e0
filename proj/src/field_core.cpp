#include "sqglab/field_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "fft.hpp"

namespace sqg {

void Grid::validate() const {
    if (n < 16 || (n & (n - 1)) != 0)
        throw std::invalid_argument("grid: n must be a power of two >= 16, got " + std::to_string(n));
    if (!(L > 0.0) || !std::isfinite(L)) throw std::invalid_argument("grid: L must be positive and finite");
    if (!(dealias_fraction > 0.0 && dealias_fraction <= 1.0))
        throw std::invalid_argument("grid: dealias_fraction must lie in (0,1]");
}

double Grid::kmag(int i, int j) const {
    const double a = k1(i), b = k2(j);
    return std::sqrt(a * a + b * b);
}

int Grid::cutoff() const {
    return static_cast<int>(std::floor(dealias_fraction * (n / 2) + 1e-9));
}

bool Grid::retained(int i, int j) const {
    const int c = cutoff();
    return std::abs(mode(i)) <= c && j <= c;
}

// ---- Field ----

Field Field::zeros(const Grid& g) { return constant(g, 0.0); }

Field Field::constant(const Grid& g, double c) {
    g.validate();
    return from_values(g, std::vector<double>(g.size(), c));
}

Field Field::from_values(const Grid& g, std::vector<double> v) {
    g.validate();
    if (v.size() != g.size()) throw std::invalid_argument("field: value array has wrong size");
    Field f;
    f.grid_ = g;
    f.rep_ = Representation::Physical;
    f.x_ = std::move(v);
    return f;
}

Field Field::from_spectrum(const Grid& g, std::vector<cplx> c) {
    g.validate();
    if (c.size() != g.spec_size()) throw std::invalid_argument("field: spectrum has wrong size");
    Field f;
    f.grid_ = g;
    f.rep_ = Representation::Spectral;
    f.k_ = std::move(c);
    return f;
}

Field Field::from_function(const Grid& g, const std::function<double(double, double)>& fn) {
    g.validate();
    std::vector<double> v(g.size());
    const double h = g.dx();
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) v[static_cast<std::size_t>(i) * g.n + j] = fn(i * h, j * h);
    return from_values(g, std::move(v));
}

const std::vector<double>& Field::values() const {
    if (rep_ != Representation::Physical) throw std::logic_error("field: values() on a spectral field");
    return x_;
}

const std::vector<cplx>& Field::spectrum() const {
    if (rep_ != Representation::Spectral) throw std::logic_error("field: spectrum() on a physical field");
    return k_;
}

Field Field::to_spectral() const {
    if (rep_ == Representation::Spectral) return *this;
    return from_spectrum(grid_, fft::forward(grid_, x_));
}

Field Field::to_physical() const {
    if (rep_ == Representation::Physical) return *this;
    return from_values(grid_, fft::inverse(grid_, k_));
}

double Field::mean() const {
    if (rep_ == Representation::Spectral) return k_[0].real();
    double s = 0.0;
    for (double v : x_) s += v;
    return s / static_cast<double>(x_.size());
}

double Field::max_abs() const {
    if (rep_ != Representation::Physical) return to_physical().max_abs();
    const auto& v = x_;
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
}

double Field::l2_norm() const {
    if (rep_ == Representation::Physical) {
        double s = 0.0;
        for (double v : x_) s += v * v;
        return std::sqrt(s) * grid_.dx();
    }
    const int h = grid_.half();
    double s = 0.0;
    for (int i = 0; i < grid_.n; ++i)
        for (int j = 0; j < h; ++j) s += grid_.column_weight(j) * std::norm(k_[static_cast<std::size_t>(i) * h + j]);
    return std::sqrt(s) * grid_.L;
}

bool Field::all_finite() const {
    if (rep_ == Representation::Physical)
        return std::all_of(x_.begin(), x_.end(), [](double v) { return std::isfinite(v); });
    return std::all_of(k_.begin(), k_.end(),
                       [](cplx c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); });
}

double VelocityField::max_speed() const {
    const Field pa = ux.to_physical(), pb = uy.to_physical();
    const auto& a = pa.values();
    const auto& b = pb.values();
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::hypot(a[k], b[k]));
    return m;
}

double VelocityField::divergence_norm() const {
    Field d1 = derivative(ux, 0), d2 = derivative(uy, 1);
    auto s1 = d1.spectrum();
    const auto& s2 = d2.spectrum();
    for (std::size_t k = 0; k < s1.size(); ++k) s1[k] += s2[k];
    return Field::from_spectrum(grid, std::move(s1)).l2_norm();
}

double VelocityField::l2_norm() const { return std::hypot(ux.l2_norm(), uy.l2_norm()); }

// ---- spectral operators ----

namespace {

template <class F>
Field map_spectrum(const Field& f, F&& fn) {
    const Grid& g = f.grid();
    auto c = f.to_spectral().spectrum();
    const int h = g.half();
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < h; ++j) {
            auto& v = c[static_cast<std::size_t>(i) * h + j];
            v = fn(i, j, v);
        }
    return Field::from_spectrum(g, std::move(c));
}

void require_finite(const Field& f, const char* who) {
    if (!f.all_finite()) throw std::domain_error(std::string(who) + ": non-finite input");
}

}  // namespace

Field apply_symbol(const Field& f, const std::function<double(double)>& m) {
    const Grid& g = f.grid();
    return map_spectrum(f, [&](int i, int j, cplx v) { return v * m(g.kmag(i, j)); });
}

Field fractional_laplacian(const Field& f, double alpha) {
    require_finite(f, "fractional_laplacian");
    const Grid& g = f.grid();
    return map_spectrum(f, [&](int i, int j, cplx v) {
        const double k = g.kmag(i, j);
        return k == 0.0 ? cplx(0.0) : v * std::pow(k, 2.0 * alpha);
    });
}

Field derivative(const Field& f, int axis) {
    const Grid& g = f.grid();
    return map_spectrum(f, [&](int i, int j, cplx v) {
        if (g.nyquist(i, j)) return cplx(0.0);
        const double k = axis == 0 ? g.k1(i) : g.k2(j);
        return v * cplx(0.0, k);
    });
}

VelocityField riesz_velocity(const Field& theta) {
    require_finite(theta, "riesz_velocity");
    const Grid& g = theta.grid();
    Field a = map_spectrum(theta, [&](int i, int j, cplx v) {
        const double k = g.kmag(i, j);
        if (k == 0.0 || g.nyquist(i, j)) return cplx(0.0);
        return v * cplx(0.0, -g.k2(j) / k);
    });
    Field b = map_spectrum(theta, [&](int i, int j, cplx v) {
        const double k = g.kmag(i, j);
        if (k == 0.0 || g.nyquist(i, j)) return cplx(0.0);
        return v * cplx(0.0, g.k1(i) / k);
    });
    return {g, a.to_physical(), b.to_physical()};
}

Field translate(const Field& f, Vec2 s) {
    const Grid& g = f.grid();
    return map_spectrum(f, [&](int i, int j, cplx v) {
        const double ph = g.k1(i) * s[0] + g.k2(j) * s[1];
        // Nyquist coefficients have no conjugate partner; keep them real.
        if (g.nyquist(i, j)) return v * std::cos(ph);
        return v * std::polar(1.0, ph);
    });
}

Field dealias(const Field& f) {
    const Grid& g = f.grid();
    return map_spectrum(f, [&](int i, int j, cplx v) { return g.retained(i, j) ? v : cplx(0.0); });
}

// ---- interpolant ----

namespace {

struct Jet {
    double v = 0, gx = 0, gy = 0, hxx = 0, hxy = 0, hyy = 0;
};

Jet interp_jet(const Grid& g, const std::vector<cplx>& c, Vec2 x, bool derivs) {
    const int h = g.half();
    std::vector<cplx> e1(g.n), e2(h);
    for (int i = 0; i < g.n; ++i) e1[i] = std::polar(1.0, g.k1(i) * x[0]);
    for (int j = 0; j < h; ++j) e2[j] = std::polar(1.0, g.k2(j) * x[1]);
    Jet r;
    cplx sv = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = 0; i < g.n; ++i) {
        const double a = g.k1(i);
        cplx rv = 0, ry = 0, ryy = 0;
        for (int j = 0; j < h; ++j) {
            const cplx t = g.column_weight(j) * c[static_cast<std::size_t>(i) * h + j] * e2[j];
            rv += t;
            if (derivs) {
                const double b = g.k2(j);
                ry += t * b;
                ryy += t * (b * b);
            }
        }
        sv += rv * e1[i];
        if (derivs) {
            sx += rv * e1[i] * a;
            sy += ry * e1[i];
            sxx += rv * e1[i] * (a * a);
            sxy += ry * e1[i] * a;
            syy += ryy * e1[i];
        }
    }
    r.v = sv.real();
    // d/dx e^{i k x} = i k e^{ikx}: Re(i z) = -Im(z), Re(-z) for second order.
    r.gx = -sx.imag();
    r.gy = -sy.imag();
    r.hxx = -sxx.real();
    r.hxy = -sxy.real();
    r.hyy = -syy.real();
    return r;
}

}  // namespace

double evaluate(const Field& f, Vec2 x) {
    return interp_jet(f.grid(), f.to_spectral().spectrum(), x, false).v;
}

double sup_abs(const Field& f) {
    const Grid& g = f.grid();
    const Field phys = f.to_physical();
    const auto& v = phys.values();
    const auto c = f.to_spectral().spectrum();
    const int n = g.n;
    auto at = [&](int i, int j) { return std::abs(v[static_cast<std::size_t>((i + n) % n) * n + (j + n) % n]); };

    double best = 0.0;
    std::vector<std::pair<double, std::pair<int, int>>> cand;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double a = at(i, j);
            best = std::max(best, a);
            bool peak = true;
            for (int di = -1; di <= 1 && peak; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    if ((di || dj) && at(i + di, j + dj) > a) {
                        peak = false;
                        break;
                    }
            if (peak) cand.push_back({a, {i, j}});
        }
    if (best == 0.0) return 0.0;
    std::sort(cand.begin(), cand.end(), [](auto& p, auto& q) { return p.first > q.first; });
    if (cand.size() > 6) cand.resize(6);

    const double h = g.dx();
    for (auto& [val, ij] : cand) {
        Vec2 x{ij.first * h, ij.second * h};
        const double s = v[static_cast<std::size_t>(ij.first) * n + ij.second] >= 0 ? 1.0 : -1.0;
        Jet J = interp_jet(g, c, x, true);
        double cur = s * J.v;
        for (int it = 0; it < 30; ++it) {
            const double gx = s * J.gx, gy = s * J.gy;
            const double a = s * J.hxx, b = s * J.hxy, d = s * J.hyy;
            double dx, dy;
            const double det = a * d - b * b;
            if (a < 0 && det > 0) {
                dx = -(d * gx - b * gy) / det;
                dy = -(-b * gx + a * gy) / det;
            } else {
                const double gn = std::hypot(gx, gy);
                if (gn == 0) break;
                dx = 0.25 * h * gx / gn;
                dy = 0.25 * h * gy / gn;
            }
            const double len = std::hypot(dx, dy);
            if (len > h) {
                dx *= h / len;
                dy *= h / len;
            }
            bool moved = false;
            for (int ls = 0; ls < 12; ++ls) {
                Vec2 y{x[0] + dx, x[1] + dy};
                Jet K = interp_jet(g, c, y, true);
                if (s * K.v >= cur) {
                    x = y;
                    J = K;
                    cur = s * K.v;
                    moved = true;
                    break;
                }
                dx *= 0.5;
                dy *= 0.5;
            }
            if (!moved || std::hypot(dx, dy) < 1e-13 * g.L) break;
        }
        best = std::max(best, std::abs(cur));
    }
    return best;
}

// ---- time stepping ----

std::string scheme_name(Scheme) { return "strang-if-ssprk3"; }

double admissible_dt(const Field& theta, double c_cfl) {
    const double u = riesz_velocity(theta).max_speed();
    if (u == 0.0) return std::numeric_limits<double>::infinity();
    return c_cfl * theta.grid().dx() / u;
}

namespace {

// Exact sub-flow of d_t c = -|k|^{2a} c over tau; returns the dissipation integral.
double dissipate(const Grid& g, std::vector<cplx>& c, double alpha, double tau) {
    const int h = g.half();
    double lost = 0.0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < h; ++j) {
            const double k = g.kmag(i, j);
            if (k == 0.0) continue;
            auto& v = c[static_cast<std::size_t>(i) * h + j];
            const double lam = std::pow(k, 2.0 * alpha);
            const double e = std::exp(-lam * tau);
            lost += g.column_weight(j) * std::norm(v) * (-std::expm1(-2.0 * lam * tau));
            v *= e;
        }
    return 0.5 * g.L * g.L * lost;
}

// -P[(u . grad) theta] in the half spectrum.
void advection_rhs(const Grid& g, const std::vector<cplx>& c, std::vector<cplx>& out) {
    const int n = g.n, h = g.half();
    const std::size_t ns = g.spec_size();
    std::vector<cplx> su(ns), sv(ns), sx(ns), sy(ns);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < h; ++j) {
            const std::size_t q = static_cast<std::size_t>(i) * h + j;
            const double k = g.kmag(i, j);
            if (k == 0.0 || g.nyquist(i, j)) continue;
            const double a = g.k1(i), b = g.k2(j);
            su[q] = c[q] * cplx(0.0, -b / k);
            sv[q] = c[q] * cplx(0.0, a / k);
            sx[q] = c[q] * cplx(0.0, a);
            sy[q] = c[q] * cplx(0.0, b);
        }
    std::vector<double> u(g.size()), v(g.size()), tx(g.size()), ty(g.size());
    fft::inverse(n, su.data(), u.data());
    fft::inverse(n, sv.data(), v.data());
    fft::inverse(n, sx.data(), tx.data());
    fft::inverse(n, sy.data(), ty.data());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = u[k] * tx[k] + v[k] * ty[k];
    out.resize(ns);
    fft::forward(n, u.data(), out.data());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < h; ++j) {
            auto& w = out[static_cast<std::size_t>(i) * h + j];
            w = g.retained(i, j) ? -w : cplx(0.0);
        }
}

}  // namespace

StepResult step(const Field& theta, double dt, double alpha, Scheme, const StepOptions& opt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step: dt must be positive");
    require_finite(theta, "step");
    const Grid& g = theta.grid();
    if (opt.advect) {
        const double adm = admissible_dt(theta, opt.c_cfl);
        if (dt > adm * (1.0 + 1e-12)) {
            std::ostringstream os;
            os.precision(6);
            os << "CFL violated: dt=" << dt << " exceeds admissible dt=" << adm << " (c_cfl=" << opt.c_cfl << ")";
            throw CflError(os.str(), adm);
        }
    }
    auto c = theta.to_spectral().spectrum();
    StepResult r;
    r.dissipation += dissipate(g, c, alpha, 0.5 * dt);
    if (opt.advect) {
        const std::size_t ns = c.size();
        std::vector<cplx> k(ns), c1(ns), c2(ns);
        advection_rhs(g, c, k);
        for (std::size_t q = 0; q < ns; ++q) c1[q] = c[q] + dt * k[q];
        advection_rhs(g, c1, k);
        for (std::size_t q = 0; q < ns; ++q) c2[q] = 0.75 * c[q] + 0.25 * (c1[q] + dt * k[q]);
        advection_rhs(g, c2, k);
        for (std::size_t q = 0; q < ns; ++q) c[q] = c[q] / 3.0 + (2.0 / 3.0) * (c2[q] + dt * k[q]);
    }
    r.dissipation += dissipate(g, c, alpha, 0.5 * dt);
    r.theta = Field::from_spectrum(g, std::move(c));
    return r;
}

// ---- initial data ----

Field make_initial(const Grid& g, const InitialCondition& ic) {
    g.validate();
    using K = InitialCondition::Kind;
    const int n = g.n, h = g.half();
    switch (ic.kind) {
        case K::Constant:
            return Field::constant(g, ic.mean);
        case K::SingleMode: {
            if (std::abs(ic.m1) > g.cutoff() || std::abs(ic.m2) > g.cutoff())
                throw std::invalid_argument("initial: single mode lies outside the dealiased band");
            const double k0 = g.k0();
            Field f = Field::from_function(g, [&](double x, double y) {
                return ic.mean + ic.amplitude * std::cos(k0 * (ic.m1 * x + ic.m2 * y) + ic.phase);
            });
            return f;
        }
        case K::Random: {
            if (ic.kmax < 1 || ic.kmax > g.cutoff())
                throw std::invalid_argument("initial: kmax must lie in [1, dealias cutoff]");
            std::mt19937_64 rng(ic.seed);
            std::normal_distribution<double> N(0.0, 1.0);
            std::vector<cplx> c(g.spec_size());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < h; ++j) {
                    const int m1 = g.mode(i);
                    const double r = std::hypot(m1, j);
                    if (r < 0.5 || r > ic.kmax + 1e-9) continue;
                    const double re = N(rng), im = N(rng);
                    if (j == 0 && m1 < 0) continue;
                    c[static_cast<std::size_t>(i) * h + j] = cplx(re, im) / r;
                }
            for (int i = 1; i < n / 2; ++i) c[static_cast<std::size_t>(n - i) * h] = std::conj(c[static_cast<std::size_t>(i) * h]);
            auto v = fft::inverse(g, c);
            double m = 0.0;
            for (double a : v) m = std::max(m, std::abs(a));
            for (double& a : v) a = ic.mean + ic.amplitude * a / m;
            return Field::from_values(g, std::move(v));
        }
        case K::Bump: {
            if (!(ic.width > 0.0)) throw std::invalid_argument("initial: bump width must be positive");
            Field f = Field::from_function(g, [&](double x, double y) {
                double s = 0.0;
                for (int a = -1; a <= 1; ++a)
                    for (int b = -1; b <= 1; ++b) {
                        const double d1 = x - ic.center[0] - a * g.L, d2 = y - ic.center[1] - b * g.L;
                        s += std::exp(-(d1 * d1 + d2 * d2) / (2.0 * ic.width * ic.width));
                    }
                return ic.mean + ic.amplitude * s;
            });
            return dealias(f).to_physical();
        }
    }
    throw std::invalid_argument("initial: unknown kind");
}

// ---- trajectory ----

Trajectory::Trajectory(Grid g, double alpha, std::vector<double> times, std::vector<Field> snaps,
                       std::vector<Vec2> drift, std::vector<double> dissipation, TrajectoryMeta meta)
    : grid_(g), alpha_(alpha), times_(std::move(times)), drift_(std::move(drift)),
      dissipation_(std::move(dissipation)), meta_(std::move(meta)) {
    grid_.validate();
    if (!(alpha_ > 0.0 && alpha_ < 1.0)) throw std::invalid_argument("trajectory: alpha must lie in (0,1)");
    if (times_.empty()) throw std::invalid_argument("trajectory: no snapshots");
    if (snaps.size() != times_.size()) throw std::invalid_argument("trajectory: times/snapshots size mismatch");
    for (std::size_t i = 1; i < times_.size(); ++i)
        if (!(times_[i] > times_[i - 1])) throw std::invalid_argument("trajectory: times must increase strictly");
    snaps_.reserve(snaps.size());
    for (auto& s : snaps) {
        if (!(s.grid() == grid_)) throw std::invalid_argument("trajectory: snapshot grid mismatch");
        Field p = s.to_physical();
        if (!p.all_finite()) throw std::invalid_argument("trajectory: non-finite snapshot");
        snaps_.push_back(std::move(p));
    }
    if (drift_.empty()) drift_.assign(times_.size(), Vec2{0.0, 0.0});
    if (drift_.size() != times_.size()) throw std::invalid_argument("trajectory: drift size mismatch");
    if (!dissipation_.empty() && dissipation_.size() != times_.size())
        throw std::invalid_argument("trajectory: dissipation ledger size mismatch");
}

VelocityField Trajectory::velocity(std::size_t i) const {
    VelocityField u = riesz_velocity(snaps_.at(i));
    const Vec2 d = drift_[i];
    if (d[0] != 0.0 || d[1] != 0.0) {
        auto a = u.ux.values(), b = u.uy.values();
        for (auto& v : a) v += d[0];
        for (auto& v : b) v += d[1];
        u.ux = Field::from_values(grid_, std::move(a));
        u.uy = Field::from_values(grid_, std::move(b));
    }
    return u;
}

double Trajectory::sup_abs_grid() const {
    double m = 0.0;
    for (auto& s : snaps_) m = std::max(m, s.max_abs());
    return m;
}

Trajectory simulate(const SimulationConfig& cfg) {
    const Grid& g = cfg.grid;
    g.validate();
    if (!(cfg.horizon > 0.0) || !(cfg.snapshot_dt > 0.0) || !(cfg.dt_max > 0.0))
        throw std::invalid_argument("simulate: horizon, snapshot_dt and dt_max must be positive");
    const long K = std::lround(cfg.horizon / cfg.snapshot_dt);
    if (K < 1 || std::abs(K * cfg.snapshot_dt - cfg.horizon) > 1e-9 * cfg.horizon)
        throw std::invalid_argument("simulate: horizon must be a multiple of snapshot_dt");

    Field theta = make_initial(g, cfg.initial);
    theta = dealias(theta);
    const double sup0 = theta.max_abs();
    const double bound = cfg.blowup_factor * std::max(sup0, std::numeric_limits<double>::min());

    std::vector<double> times{cfg.t0};
    std::vector<Field> snaps{theta.to_physical()};
    std::vector<double> ledger{0.0};
    StepOptions opt{cfg.advect, cfg.c_cfl};
    double t = cfg.t0, diss = 0.0;
    for (long k = 1; k <= K; ++k) {
        const double tk = cfg.t0 + k * cfg.snapshot_dt;
        while (t < tk) {
            const double rem = tk - t;
            double allowed = cfg.dt_max;
            if (cfg.advect) allowed = std::min(allowed, admissible_dt(theta, cfg.c_cfl));
            const double m = std::max(1.0, std::ceil(rem / allowed * (1.0 - 1e-12)));
            const double dt = rem / m;
            StepResult r = step(theta, dt, cfg.alpha, Scheme::StrangIfSspRk3, opt);
            theta = std::move(r.theta);
            diss += r.dissipation;
            t = m == 1.0 ? tk : t + dt;
            const double sup = theta.max_abs();
            if (!std::isfinite(sup) || sup > bound) {
                std::ostringstream os;
                os << "blow-up at t=" << t << ": max|theta|=" << sup << " exceeds " << bound;
                throw BlowUpError(os.str(), t, sup, bound);
            }
        }
        times.push_back(tk);
        snaps.push_back(theta.to_physical());
        ledger.push_back(diss);
    }
    TrajectoryMeta meta;
    meta.dt_max = cfg.dt_max;
    meta.seed = cfg.initial.seed;
    meta.config_hash = cfg.config_hash;
    return Trajectory(g, cfg.alpha, std::move(times), std::move(snaps), {}, std::move(ledger), meta);
}

Trajectory rescale(const Trajectory& tr, double r) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("rescale: r must be positive");
    const double a = tr.alpha();
    Grid g = tr.grid();
    g.L /= r;
    const double vs = std::pow(r, 2.0 * a - 1.0), ts = std::pow(r, -2.0 * a), es = std::pow(r, 4.0 * a - 4.0);
    std::vector<double> times;
    std::vector<Field> snaps;
    std::vector<Vec2> drift;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        times.push_back(tr.time(i) * ts);
        auto v = tr.snapshot(i).values();
        for (auto& x : v) x *= vs;
        snaps.push_back(Field::from_values(g, std::move(v)));
        drift.push_back({tr.drift(i)[0] * vs, tr.drift(i)[1] * vs});
    }
    std::vector<double> led = tr.dissipation();
    for (auto& d : led) d *= es;
    TrajectoryMeta meta = tr.meta();
    meta.dt_max *= ts;
    return Trajectory(g, a, std::move(times), std::move(snaps), std::move(drift), std::move(led), meta);
}

}  // namespace sqg
