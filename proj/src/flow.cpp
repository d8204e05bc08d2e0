#include "sqglab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "sqglab/geometry.hpp"

namespace sqg {

namespace {

double node_tol(double scale) { return 1e-12 * std::max(1.0, std::abs(scale)); }

Vec2 add(Vec2 a, Vec2 b, double s = 1.0) { return {a[0] + s * b[0], a[1] + s * b[1]}; }

}  // namespace

std::size_t FlowPath::node(double s) const {
    const double tol = node_tol(times.empty() ? 1.0 : times.back());
    for (std::size_t k = 0; k < times.size(); ++k)
        if (std::abs(times[k] - s) <= tol) return k;
    std::ostringstream os;
    os << "flow path has no node at s = " << s;
    throw std::out_of_range(os.str());
}

double FlowPath::max_displacement() const {
    double m = 0.0;
    for (auto& p : positions) m = std::max(m, std::hypot(p[0], p[1]));
    return m;
}

// ---- ball averages of the velocity ----

BallAverager::BallAverager(const Trajectory& tr, double radius) : tr_(&tr), cache_(tr.size()) {
    const Grid& g = tr.grid();
    if (!(radius > 0.0)) throw std::invalid_argument("flow: ball radius must be positive");
    auto cells = ball_cells(g, {0.0, 0.0}, radius);
    if (cells.empty()) throw std::invalid_argument("flow: averaging ball holds no grid cell");
    cells_ = cells.size();
    // Mean of u(p + z) over mask offsets z: multiplier avg_z e^{i k.z}, real by symmetry.
    const int h = g.half();
    symbol_.assign(g.spec_size(), 0.0);
    for (auto c : cells) {
        int i = static_cast<int>(c / g.n), j = static_cast<int>(c % g.n);
        const double z1 = std::remainder(i * g.dx(), g.L), z2 = std::remainder(j * g.dx(), g.L);
        for (int a = 0; a < g.n; ++a)
            for (int b = 0; b < h; ++b)
                symbol_[static_cast<std::size_t>(a) * h + b] += std::cos(g.k1(a) * z1 + g.k2(b) * z2);
    }
    for (auto& s : symbol_) s /= static_cast<double>(cells_);
}

Vec2 BallAverager::at_snapshot(std::size_t i, Vec2 p) const {
    auto& c = cache_.at(i);
    if (c.empty()) {
        VelocityField u = riesz_velocity(tr_->snapshot(i));
        for (const Field* f : {&u.ux, &u.uy}) {
            auto s = f->to_spectral().spectrum();
            for (std::size_t k = 0; k < s.size(); ++k) s[k] *= symbol_[k];
            c.push_back(Field::from_spectrum(tr_->grid(), std::move(s)));
        }
    }
    const Vec2 d = tr_->drift(i);
    return {evaluate(c[0], p) + d[0], evaluate(c[1], p) + d[1]};
}

Vec2 BallAverager::at_time(double time, Vec2 p) const {
    const auto& T = tr_->times();
    const double tol = node_tol(T.back() - T.front());
    if (time < T.front() - tol || time > T.back() + tol) throw std::out_of_range("flow: time outside trajectory");
    auto it = std::lower_bound(T.begin(), T.end(), time - tol);
    std::size_t i = static_cast<std::size_t>(it - T.begin());
    if (i < T.size() && std::abs(T[i] - time) <= tol) return at_snapshot(i, p);
    const std::size_t lo = i - 1;
    const double lam = (time - T[lo]) / (T[i] - T[lo]);
    const Vec2 a = at_snapshot(lo, p), b = at_snapshot(i, p);
    return {(1 - lam) * a[0] + lam * b[0], (1 - lam) * a[1] + lam * b[1]};
}

// ---- flow ----

FlowPath integrate_flow(const Trajectory& tr, Vec2 x, double t, const FlowOptions& opt) {
    if (!(opt.horizon > 0.0) || !(opt.h_max > 0.0)) throw std::invalid_argument("flow: horizon and h_max must be positive");
    const double H = opt.horizon;
    const double tol = node_tol(H);
    if (t > tr.end() + tol || t - H < tr.start() - tol) {
        std::ostringstream os;
        os << "flow: window [" << t - H << ", " << t << "] leaves trajectory [" << tr.start() << ", " << tr.end() << "]";
        throw std::out_of_range(os.str());
    }
    BallAverager avg(tr, opt.ball_radius);
    auto F = [&](double s, Vec2 phi) {
        const double time = std::clamp(s + t, tr.start(), tr.end());
        Vec2 v = avg.at_time(time, add(phi, x));
        if (!std::isfinite(v[0]) || !std::isfinite(v[1])) throw std::runtime_error("flow: non-finite velocity");
        return v;
    };
    // Breakpoints: 0, the snapshot times inside (-H, 0), -H.
    std::vector<double> br{0.0};
    for (std::size_t i = tr.size(); i-- > 0;) {
        const double s = tr.time(i) - t;
        if (s < -tol && s > -H + tol) br.push_back(s);
    }
    br.push_back(-H);

    FlowPath P;
    P.x = x;
    P.t = t;
    Vec2 phi{0.0, 0.0};
    P.times.push_back(0.0);
    P.positions.push_back(phi);
    P.velocities.push_back(F(0.0, phi));
    for (std::size_t b = 1; b < br.size(); ++b) {
        const double s0 = br[b - 1], s1 = br[b];
        const int m = std::max(1, static_cast<int>(std::ceil((s0 - s1) / opt.h_max - 1e-9)));
        const double h = (s1 - s0) / m;  // negative
        for (int k = 0; k < m; ++k) {
            const double s = s0 + k * h;
            const Vec2 k1 = F(s, phi);
            const Vec2 k2 = F(s + 0.5 * h, add(phi, k1, 0.5 * h));
            const Vec2 k3 = F(s + 0.5 * h, add(phi, k2, 0.5 * h));
            const Vec2 k4 = F(s + h, add(phi, k3, h));
            phi = {phi[0] + h * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0,
                   phi[1] + h * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0};
            const double sn = k + 1 == m ? s1 : s0 + (k + 1) * h;
            P.times.push_back(sn);
            P.positions.push_back(phi);
            P.velocities.push_back(F(sn, phi));
        }
    }
    return P;
}

// ---- levels ----

namespace {

double q1_smallness(const Trajectory& tr, Vec2 center, double t, double m) {
    auto w = time_window(tr, t - 1.0, t, true);
    auto cells = ball_cells(tr.grid(), center, 1.0);
    if (cells.empty()) return 0.0;
    double s = 0.0, wt = 0.0;
    for (auto [i, wi] : w.weights) {
        VelocityField u = tr.velocity(i);
        double b = 0.0;
        for (auto k : cells) b += std::pow(std::hypot(u.ux.values()[k], u.uy.values()[k]), m);
        s += wi * b / static_cast<double>(cells.size());
        wt += wi;
    }
    return std::pow(s / wt, 1.0 / m);
}

// theta shifted by the flow, drift reduced by the flow velocity.
void fill_level(FlowLevel& lv, const Trajectory& src, const std::vector<std::size_t>& idx, double t, Vec2 x) {
    std::vector<double> times;
    std::vector<Field> snaps;
    std::vector<Vec2> drift;
    for (auto i : idx) {
        const double s = src.time(i) - t;
        const std::size_t k = lv.path.node(s);
        const Vec2 p = lv.path.positions[k], v = lv.path.velocities[k];
        times.push_back(s);
        snaps.push_back(translate(src.snapshot(i), add(p, x)));
        drift.push_back({src.drift(i)[0] - v[0], src.drift(i)[1] - v[1]});
        lv.xj.push_back(p);
        lv.xj_dot.push_back(v);
    }
    lv.data = Trajectory(src.grid(), src.alpha(), std::move(times), std::move(snaps), std::move(drift), {}, src.meta());
}

}  // namespace

FlowLevel recenter(const Trajectory& tr, Vec2 x, double t, const FlowOptions& opt, double m) {
    const double H = opt.horizon, tol = node_tol(H);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < tr.size(); ++i)
        if (tr.time(i) >= t - H - tol && tr.time(i) <= t + tol) idx.push_back(i);
    if (idx.size() < 2) throw std::invalid_argument("recenter: fewer than two snapshots in [t - horizon, t]");
    FlowLevel lv;
    lv.j = 0;
    lv.smallness = q1_smallness(tr, x, t, m);
    lv.path = integrate_flow(tr, x, t, opt);
    fill_level(lv, tr, idx, t, x);
    lv.source = idx;
    lv.R = lv.xj;
    lv.R_dot = lv.xj_dot;
    return lv;
}

FlowLevel rescale_once(const FlowLevel& prev, double mu, const FlowOptions& opt, double m) {
    if (!(mu > 0.0 && mu <= 0.25)) throw std::invalid_argument("rescale_once: mu must lie in (0, 1/4]");
    const Grid& g = prev.data.grid();
    const int j = prev.j + 1;
    const double a = prev.data.alpha();
    if (std::pow(mu, j) * g.n < 8.0) {
        std::ostringstream os;
        os << "scale floor reached: mu^j n = " << std::pow(mu, j) * g.n << " < 8 grid cells at level " << j;
        throw ScaleFloorReached(os.str());
    }
    Trajectory resc = rescale(prev.data, mu);
    const double H = opt.horizon, tol = node_tol(H);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < resc.size(); ++i)
        if (resc.time(i) >= -H - tol) keep.push_back(i);
    if (keep.size() < 2) {
        std::ostringstream os;
        os << "scale floor reached: " << keep.size() << " snapshot(s) left in [-" << H << ", 0] at level " << j;
        throw ScaleFloorReached(os.str());
    }
    // One earlier sample (if any) so the flow can interpolate down to -H.
    std::vector<std::size_t> ext = keep;
    const bool pad = keep.front() > 0 && resc.time(keep.front()) > -H + tol;
    if (pad) ext.insert(ext.begin(), keep.front() - 1);
    if (resc.time(ext.front()) > -H + tol) {
        std::ostringstream os;
        os << "scale floor reached: level " << j << " data does not reach s = -" << H;
        throw ScaleFloorReached(os.str());
    }
    std::vector<double> times;
    std::vector<Field> snaps;
    std::vector<Vec2> drift;
    for (auto i : ext) {
        times.push_back(resc.time(i));
        snaps.push_back(resc.snapshot(i));
        drift.push_back(resc.drift(i));
    }
    Trajectory sub(resc.grid(), a, std::move(times), std::move(snaps), std::move(drift), {}, resc.meta());

    FlowLevel lv;
    lv.j = j;
    lv.smallness = q1_smallness(sub, {0.0, 0.0}, 0.0, m);
    lv.path = integrate_flow(sub, {0.0, 0.0}, 0.0, opt);
    std::vector<std::size_t> own(keep.size());
    for (std::size_t i = 0; i < own.size(); ++i) own[i] = i + (pad ? 1 : 0);
    fill_level(lv, sub, own, 0.0, {0.0, 0.0});
    const double mj = std::pow(mu, j), m2a = std::pow(mu, 2.0 * a);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const std::size_t k = keep[i];
        lv.source.push_back(prev.source[k]);
        lv.R.push_back(add(prev.R[k], lv.xj[i], mj));
        lv.R_dot.push_back({mj * lv.xj_dot[i][0] + m2a * prev.R_dot[k][0], mj * lv.xj_dot[i][1] + m2a * prev.R_dot[k][1]});
    }
    return lv;
}

RescaledFamily build_family(const Trajectory& tr, Vec2 x, double t, double mu, int J, const FlowOptions& opt,
                            double m) {
    if (J < 0) throw std::invalid_argument("build_family: J must be >= 0");
    RescaledFamily F;
    F.base = &tr;
    F.x = x;
    F.t = t;
    F.mu = mu;
    F.options = opt;
    F.levels.push_back(recenter(tr, x, t, opt, m));
    for (int j = 1; j <= J; ++j) {
        try {
            F.levels.push_back(rescale_once(F.levels.back(), mu, opt, m));
        } catch (const ScaleFloorReached& e) {
            F.floor_reached = true;
            F.floor_reason = e.what();
            break;
        }
    }
    return F;
}

Vec2 level_ball_mean(const FlowLevel& lv, std::size_t i, double radius) {
    auto cells = ball_cells(lv.data.grid(), {0.0, 0.0}, radius);
    if (cells.empty()) throw std::invalid_argument("level_ball_mean: ball holds no grid cell");
    VelocityField u = lv.data.velocity(i);
    double a = 0.0, b = 0.0;
    for (auto k : cells) {
        a += u.ux.values()[k];
        b += u.uy.values()[k];
    }
    return {a / cells.size(), b / cells.size()};
}

Vec2 summed_R(const RescaledFamily& fam, int j, std::size_t i) {
    const FlowLevel& top = fam.levels.at(static_cast<std::size_t>(j));
    const std::size_t src = top.source.at(i);
    Vec2 R{0.0, 0.0};
    for (int k = 0; k <= j; ++k) {
        const FlowLevel& lv = fam.levels[static_cast<std::size_t>(k)];
        auto it = std::find(lv.source.begin(), lv.source.end(), src);
        if (it == lv.source.end()) throw std::logic_error("summed_R: sample missing from a coarser level");
        R = add(R, lv.xj[static_cast<std::size_t>(it - lv.source.begin())], std::pow(fam.mu, k));
    }
    return R;
}

CheckReport flow_bound_check(const RescaledFamily& fam, double K, double mu, int j, double q) {
    if (!(K > 0.0)) throw std::invalid_argument("flow_bound_check: K_q must be positive");
    const FlowLevel& lv = fam.levels.at(static_cast<std::size_t>(j));
    const double a = lv.data.alpha();
    double sup = 0.0;
    for (auto& r : lv.R) sup = std::max(sup, std::hypot(r[0], r[1]));
    // ||R_j'||_{L^q} over the sampled window by the midpoint rule.
    auto w = time_window(lv.data, lv.data.start(), lv.data.end());
    double s = 0.0;
    for (auto [i, wi] : w.weights) s += wi * std::pow(std::hypot(lv.R_dot[i][0], lv.R_dot[i][1]), q);
    const double bound = std::pow(mu, (2.0 * a - 2.0 / q) * j) * K;
    CheckReport r = inequality_report("flow_bound_j" + std::to_string(j), sup, bound, 0.0);
    r.values = {{"sup_R", sup}, {"Rdot_Lq", std::pow(s, 1.0 / q)}, {"K_q", K}, {"bound", bound}};
    return r;
}

std::string family_manifest(const RescaledFamily& fam) {
    using nlohmann::json;
    json levels = json::array();
    for (auto& lv : fam.levels) {
        json R = json::array(), Rd = json::array(), xj = json::array();
        for (std::size_t i = 0; i < lv.R.size(); ++i) {
            R.push_back({lv.R[i][0], lv.R[i][1]});
            Rd.push_back({lv.R_dot[i][0], lv.R_dot[i][1]});
            xj.push_back({lv.xj[i][0], lv.xj[i][1]});
        }
        levels.push_back({{"j", lv.j},
                          {"times", lv.data.times()},
                          {"source", lv.source},
                          {"x_j", xj},
                          {"R", R},
                          {"R_dot", Rd},
                          {"smallness", lv.smallness},
                          {"box", lv.data.grid().L}});
    }
    json m = {{"format", "sqglab-family"},
              {"mu", fam.mu},
              {"J", static_cast<int>(fam.levels.size()) - 1},
              {"center", {fam.x[0], fam.x[1]}},
              {"t", fam.t},
              {"ball_radius", fam.options.ball_radius},
              {"horizon", fam.options.horizon},
              {"floor_reached", fam.floor_reached},
              {"floor_reason", fam.floor_reason},
              {"levels", levels}};
    return m.dump(1);
}

}  // namespace sqg
