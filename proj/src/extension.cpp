#include "sqglab/extension.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "fft.hpp"
#include "sqglab/geometry.hpp"
#include "sqglab/special.hpp"

namespace sqg {

std::vector<double> geometric_levels(double y_min, double y_max, int count) {
    if (!(y_min > 0.0) || !(y_max > y_min) || count < 2)
        throw std::invalid_argument("geometric_levels: need 0 < y_min < y_max and count >= 2");
    std::vector<double> y(count);
    const double lr = std::log(y_max / y_min) / (count - 1);
    for (int j = 0; j < count; ++j) y[j] = y_min * std::exp(lr * j);
    y.back() = y_max;
    return y;
}

std::vector<double> default_levels(const Grid& g, int count) { return geometric_levels(1e-4 * g.L, g.L, count); }

void validate_levels(const std::vector<double>& y) {
    if (y.empty()) throw std::invalid_argument("y_levels: empty");
    if (!(y[0] > 0.0)) throw std::invalid_argument("y_levels: heights must be positive (y = 0 is the trace)");
    for (std::size_t j = 1; j < y.size(); ++j)
        if (!(y[j] > y[j - 1])) throw std::invalid_argument("y_levels: heights must increase strictly");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("y_levels: non-finite height");
}

// ---- slab ----

ExtensionSlab::ExtensionSlab(Field trace, double alpha, std::vector<double> y_levels, std::vector<Field> levels)
    : trace_(trace.to_physical()), alpha_(alpha), y_(std::move(y_levels)) {
    validate_levels(y_);
    if (!(alpha_ > 0.0 && alpha_ < 1.0)) throw std::invalid_argument("slab: alpha must lie in (0,1)");
    if (levels.size() != y_.size()) throw std::invalid_argument("slab: one field per height required");
    for (auto& f : levels) {
        if (!(f.grid() == trace_.grid())) throw std::invalid_argument("slab: level grid mismatch");
        Field p = f.to_physical();
        if (!p.all_finite()) throw std::invalid_argument("slab: non-finite values");
        levels_.push_back(std::move(p));
    }
}

double ExtensionSlab::max_abs() const {
    double m = 0.0;
    for (auto& f : levels_) m = std::max(m, f.max_abs());
    return m;
}

namespace {

// phi(|k| y) on the half spectrum, memoized on the integer |m|^2.
std::vector<double> profile_row(const Grid& g, double alpha, double y) {
    std::vector<double> out(g.spec_size());
    std::unordered_map<long, double> memo;
    const int h = g.half();
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < h; ++j) {
            const long m = static_cast<long>(g.mode(i)) * g.mode(i) + static_cast<long>(j) * j;
            auto it = memo.find(m);
            double v;
            if (it == memo.end()) {
                v = special::ext_profile(alpha, g.k0() * std::sqrt(static_cast<double>(m)) * y);
                memo.emplace(m, v);
            } else {
                v = it->second;
            }
            out[static_cast<std::size_t>(i) * h + j] = v;
        }
    return out;
}

using Table = std::vector<std::vector<double>>;

// Transformed values h(v) and |grad h|^2 on the grid for one height.
struct LevelData {
    std::vector<double> h, g;
};

LevelData level_from_spectrum(const Grid& g, const std::vector<cplx>& c, double q) {
    const int n = g.n, hh = g.half();
    std::vector<cplx> cx(c.size()), cy(c.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < hh; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * hh + j;
            if (g.nyquist(i, j)) continue;
            cx[k] = c[k] * cplx(0.0, g.k1(i));
            cy[k] = c[k] * cplx(0.0, g.k2(j));
        }
    LevelData d;
    d.h.resize(g.size());
    d.g.resize(g.size());
    std::vector<double> gx(g.size()), gy(g.size());
    fft::inverse(n, c.data(), d.h.data());
    fft::inverse(n, cx.data(), gx.data());
    fft::inverse(n, cy.data(), gy.data());
    for (std::size_t k = 0; k < d.h.size(); ++k) {
        double s = gx[k] * gx[k] + gy[k] * gy[k];
        if (q > 0.0) {
            const double v = d.h[k], a = std::abs(v);
            // d/dv |v|^{q/2} = (q/2) |v|^{q/2-1} sign(v); zero at v = 0.
            const double dh = a == 0.0 ? 0.0 : 0.5 * q * std::pow(a, 0.5 * q - 1.0);
            s *= dh * dh;
            d.h[k] = std::pow(a, 0.5 * q);
        }
        d.g[k] = s;
    }
    return d;
}

// Energy of one t-interval with h and g linear in t.
struct IntervalRule {
    double alpha, p;
    explicit IntervalRule(double a) : alpha(a), p(1.0 / a - 1.0) {}
    // Weights of g_a, g_b for int g(t) (1/2a) t^{1/a-2} dt on [ta, tb].
    std::pair<double, double> weights(double ta, double tb) const {
        const double c = 0.5 / alpha;
        const double W0 = c * (std::pow(tb, p) - std::pow(ta, p)) / p;
        const double W1 = c * (std::pow(tb, p + 1.0) - std::pow(ta, p + 1.0)) / (p + 1.0);
        const double wb = (W1 - ta * W0) / (tb - ta);
        return {W0 - wb, wb};
    }
    double slope_factor(double ta, double tb) const { return 2.0 * alpha / (tb - ta); }
};

template <class Get>
std::vector<double> integrate_columns(const Grid& g, double alpha, const std::vector<double>& y, double y_cut,
                                      LevelData prev, Get&& get) {
    validate_levels(y);
    if (y_cut < 0.0) y_cut = y.back();
    if (y_cut > y.back() * (1.0 + 1e-12))
        throw std::out_of_range("energy region reaches above the slab (y_cut > top level)");
    const IntervalRule rule(alpha);
    std::vector<double> col(g.size(), 0.0);
    double tp = 0.0;
    const double tc = std::pow(std::min(y_cut, y.back()), 2.0 * alpha);
    for (std::size_t j = 0; j < y.size() && tp < tc; ++j) {
        LevelData cur = get(j);
        const double tj = std::pow(y[j], 2.0 * alpha);
        double tb = tj;
        if (tj > tc) {
            const double w = (tc - tp) / (tj - tp);
            for (std::size_t k = 0; k < col.size(); ++k) {
                cur.h[k] = prev.h[k] + w * (cur.h[k] - prev.h[k]);
                cur.g[k] = prev.g[k] + w * (cur.g[k] - prev.g[k]);
            }
            tb = tc;
        }
        const auto [wa, wb] = rule.weights(tp, tb);
        const double sf = rule.slope_factor(tp, tb);
        for (std::size_t k = 0; k < col.size(); ++k) {
            const double dh = cur.h[k] - prev.h[k];
            col[k] += sf * dh * dh + wa * prev.g[k] + wb * cur.g[k];
        }
        tp = tb;
        prev = std::move(cur);
    }
    return col;
}

std::vector<double> columns_from_table(const Field& theta, double alpha, const std::vector<double>& y,
                                       const Table& table, double y_cut, double q) {
    const Grid& g = theta.grid();
    const auto c = theta.to_spectral().spectrum();
    LevelData trace = level_from_spectrum(g, c, q);
    return integrate_columns(g, alpha, y, y_cut, std::move(trace), [&](std::size_t j) {
        std::vector<cplx> cj(c.size());
        const auto& row = table[j];
        for (std::size_t k = 0; k < c.size(); ++k) cj[k] = c[k] * row[k];
        return level_from_spectrum(g, cj, q);
    });
}

double interval_energy_1d(const IntervalRule& rule, double ta, double tb, double fa, double fb, double ga, double gb) {
    const auto [wa, wb] = rule.weights(ta, tb);
    const double df = fb - fa;
    return rule.slope_factor(ta, tb) * df * df + wa * ga + wb * gb;
}

}  // namespace

ExtensionSlab extend(const Field& theta, double alpha, const std::vector<double>& y_levels) {
    validate_levels(y_levels);
    if (!theta.all_finite()) throw std::domain_error("extend: non-finite input");
    const Grid& g = theta.grid();
    const auto c = theta.to_spectral().spectrum();
    std::vector<Field> levels;
    for (double y : y_levels) {
        auto row = profile_row(g, alpha, y);
        std::vector<cplx> cj(c.size());
        for (std::size_t k = 0; k < c.size(); ++k) cj[k] = c[k] * row[k];
        levels.push_back(Field::from_spectrum(g, std::move(cj)).to_physical());
    }
    return ExtensionSlab(theta, alpha, y_levels, std::move(levels));
}

std::vector<double> column_energy(const ExtensionSlab& slab, double y_cut, double q) {
    const Grid& g = slab.grid();
    LevelData trace = level_from_spectrum(g, slab.trace().to_spectral().spectrum(), q);
    return integrate_columns(g, slab.alpha(), slab.y_levels(), y_cut, std::move(trace), [&](std::size_t j) {
        return level_from_spectrum(g, slab.level(j).to_spectral().spectrum(), q);
    });
}

std::vector<double> column_energy(const Field& theta, double alpha, const std::vector<double>& y_levels,
                                  double y_cut, double q) {
    validate_levels(y_levels);
    const Grid& g = theta.grid();
    std::size_t needed = y_levels.size();
    if (y_cut >= 0.0)
        for (std::size_t j = 0; j < y_levels.size(); ++j)
            if (y_levels[j] >= y_cut) {
                needed = j + 1;
                break;
            }
    Table t;
    for (std::size_t j = 0; j < needed; ++j) t.push_back(profile_row(g, alpha, y_levels[j]));
    return columns_from_table(theta, alpha, y_levels, t, y_cut, q);
}

double weighted_energy(const ExtensionSlab& slab, const EnergyRegion& region) {
    const Grid& g = slab.grid();
    auto col = column_energy(slab, region.y_cut);
    const double dA = g.dx() * g.dx();
    double s = 0.0;
    if (region.whole_torus) {
        for (double v : col) s += v;
        return s * dA;
    }
    if (!(region.radius > 0.0)) throw std::invalid_argument("weighted_energy: ball radius must be positive");
    if (2.0 * region.radius > g.L) throw std::out_of_range("weighted_energy: ball exceeds the torus");
    for (std::size_t k : ball_cells(g, region.center, region.radius)) s += col[k];
    return s * dA;
}

// ---- calibration ----

ExtensionCalibration calibrate_constant(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("calibrate_constant: alpha must lie in (0,1)");
    static std::mutex mu;
    static std::map<double, ExtensionCalibration> cache;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(alpha);
        if (it != cache.end()) return it->second;
    }
    const int N = 32768;
    const auto y = geometric_levels(1e-10, 40.0, N);
    const IntervalRule rule(alpha);
    auto mode_constant = [&](double k) {
        double tp = 0.0, fp = 1.0, gp = k * k, e = 0.0;
        for (double yj : y) {
            const double f = special::ext_profile(alpha, k * yj), t = std::pow(yj, 2.0 * alpha);
            const double gk = k * k * f * f;
            e += interval_energy_1d(rule, tp, t, fp, f, gp, gk);
            tp = t;
            fp = f;
            gp = gk;
        }
        return std::pow(k, 2.0 * alpha) / e;
    };
    ExtensionCalibration cal;
    cal.alpha = alpha;
    cal.levels = N;
    cal.c_mode1 = mode_constant(1.0);
    cal.c_mode2 = mode_constant(2.0);
    cal.c_measured = 0.5 * (cal.c_mode1 + cal.c_mode2);
    cal.relative_gap = std::abs(cal.c_mode1 - cal.c_mode2) / cal.c_measured;
    if (!(cal.relative_gap <= 1e-6) || !(cal.c_measured > 0.0)) {
        std::ostringstream os;
        os << "calibration failure at alpha=" << alpha << ": modes disagree by " << cal.relative_gap;
        throw CalibrationError(os.str());
    }
    std::lock_guard<std::mutex> lock(mu);
    cache.emplace(alpha, cal);
    return cal;
}

// ---- Dirichlet-to-Neumann ----

DtnResult dtn_trace(const ExtensionSlab& slab, const ExtensionCalibration& cal, double residual_tol) {
    if (slab.size() < 3) throw std::invalid_argument("dtn_trace: need at least three levels");
    const double a = slab.alpha();
    if (std::abs(cal.alpha - a) > 1e-14) throw std::invalid_argument("dtn_trace: calibration alpha mismatch");
    // Rows of the inverse of [1, t_l, t_l^{1/a}].
    double M[3][3], inv[3][3];
    for (int l = 0; l < 3; ++l) {
        const double t = std::pow(slab.y_levels()[l], 2.0 * a);
        M[l][0] = 1.0;
        M[l][1] = t;
        M[l][2] = std::pow(t, 1.0 / a);
    }
    const double det = M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) -
                       M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
                       M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const int r1 = (c + 1) % 3, r2 = (c + 2) % 3, c1 = (r + 1) % 3, c2 = (r + 2) % 3;
            inv[r][c] = (M[r1][c1] * M[r2][c2] - M[r1][c2] * M[r2][c1]) / det;
        }
    const Grid& g = slab.grid();
    std::vector<double> out(g.size()), resid(g.size());
    const auto& v0 = slab.level(0).values();
    const auto& v1 = slab.level(1).values();
    const auto& v2 = slab.level(2).values();
    const auto& th = slab.trace().values();
    const double scale = -cal.c_measured * 2.0 * a;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double intercept = inv[0][0] * v0[k] + inv[0][1] * v1[k] + inv[0][2] * v2[k];
        const double b1 = inv[1][0] * v0[k] + inv[1][1] * v1[k] + inv[1][2] * v2[k];
        out[k] = scale * b1;
        resid[k] = intercept - th[k];
    }
    DtnResult r;
    r.value = Field::from_values(g, std::move(out));
    const double rn = Field::from_values(g, std::move(resid)).l2_norm();
    const double tn = slab.trace().l2_norm();
    r.trace_residual = tn > 0.0 ? rn / tn : rn;
    r.flagged = !(r.trace_residual <= residual_tol);
    return r;
}

// ---- persistence ----

void save_slab(const ExtensionSlab& slab, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const Grid& g = slab.grid();
    nlohmann::json m;
    m["format"] = "sqglab-slab";
    m["version"] = 1;
    m["layout"] = "float64 little-endian, row-major, index i*n+j at x=(i*dx, j*dx)";
    m["grid"] = {{"n", g.n}, {"L", g.L}, {"dealias_fraction", g.dealias_fraction}};
    m["alpha"] = slab.alpha();
    m["y_levels"] = slab.y_levels();
    write_f64((fs::path(dir) / "trace.bin").string(), slab.trace().values());
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t j = 0; j < slab.size(); ++j) {
        std::ostringstream os;
        os << "level_" << std::setw(5) << std::setfill('0') << j << ".bin";
        write_f64((fs::path(dir) / os.str()).string(), slab.level(j).values());
        files.push_back(os.str());
    }
    m["levels"] = files;
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << m.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write slab manifest in " + dir);
}

ExtensionSlab load_slab(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("no manifest.json in " + dir);
    auto m = nlohmann::json::parse(is);
    if (m.value("format", "") != "sqglab-slab") throw std::runtime_error("not a slab manifest: " + dir);
    Grid g;
    g.n = m["grid"]["n"].get<int>();
    g.L = m["grid"]["L"].get<double>();
    g.dealias_fraction = m["grid"]["dealias_fraction"].get<double>();
    g.validate();
    Field trace = Field::from_values(g, read_f64((fs::path(dir) / "trace.bin").string(), g.size()));
    std::vector<Field> levels;
    for (auto& f : m["levels"])
        levels.push_back(Field::from_values(g, read_f64((fs::path(dir) / f.get<std::string>()).string(), g.size())));
    return ExtensionSlab(trace, m["alpha"].get<double>(), m["y_levels"].get<std::vector<double>>(), std::move(levels));
}

// ---- provider ----

SlabProvider::SlabProvider(const Trajectory& tr, std::vector<double> y_levels)
    : tr_(&tr), y_(y_levels.empty() ? default_levels(tr.grid()) : std::move(y_levels)) {
    validate_levels(y_);
}

std::shared_ptr<const std::vector<double>> SlabProvider::columns(std::size_t i, double y_cut, double q) const {
    if (i >= tr_->size()) throw std::out_of_range("slab provider: snapshot index out of range");
    const auto key = std::make_tuple(i, y_cut, q);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    auto col = std::make_shared<const std::vector<double>>(column_energy(tr_->snapshot(i), tr_->alpha(), y_, y_cut, q));
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(key, col).first->second;
}

}  // namespace sqg
