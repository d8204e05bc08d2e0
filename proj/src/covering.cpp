#include "sqglab/covering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <tuple>

#include "fft.hpp"
#include "sqglab/geometry.hpp"

namespace sqg {

double dimension_bound(double alpha, double q) {
    if (!(alpha > 1.0 / std::sqrt(6.0) && alpha < 0.5) || !(q >= 20.0)) {
        std::ostringstream os;
        os << "dimension_bound: (alpha, q) = (" << alpha << ", " << q
           << ") is outside the admissible range alpha in (1/sqrt(6), 1/2), q >= 20";
        throw std::domain_error(os.str());
    }
    return (1.0 / alpha + (1.0 + alpha) / q * (1.0 - 2.0 * alpha)) / (2.0 * alpha - 2.0 / q);
}

double dimension_limit(double alpha) { return 1.0 / (2.0 * alpha * alpha); }

namespace {

constexpr double kNoCover = std::numeric_limits<double>::infinity();

std::vector<double> snapshot_weights(const Trajectory& tr) {
    std::vector<double> w(tr.size(), 0.0);
    if (tr.size() == 1) return w;
    for (auto [i, wi] : time_window(tr, tr.start(), tr.end()).weights) w[i] = wi;
    return w;
}

// Spectrum of the indicator of cell centers at periodic distance < R from the origin.
std::vector<cplx> disk_spectrum(const Grid& g, double R) {
    std::vector<double> m(g.size(), 0.0);
    for (auto k : ball_cells(g, {0.0, 0.0}, R)) m[k] = 1.0;
    return fft::forward(g, m);
}

}  // namespace

double ball_integral(const Trajectory& tr, const SlabProvider& sp, Vec2 x, double s, double r, double rho,
                     double anisotropy) {
    const Grid& g = tr.grid();
    const auto w = snapshot_weights(tr);
    double sum = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const double dt = anisotropy * std::abs(tr.time(i) - s);
        if (!(dt < rho) || w[i] == 0.0) continue;
        const double R = std::sqrt(rho * rho - dt * dt);
        const auto col = sp.columns(i, r);
        double b = 0.0;
        for (auto k : ball_cells(g, x, R)) b += (*col)[k];
        sum += w[i] * b;
    }
    return sum * g.dx() * g.dx();
}

Detection detect_candidates(const Trajectory& tr, const SlabProvider& sp, const DetectionOptions& opt) {
    if (&sp.trajectory() != &tr) throw std::invalid_argument("detect_candidates: slab provider built on another trajectory");
    if (opt.scales.empty()) throw std::invalid_argument("detect_candidates: empty scale ladder");
    if (!(opt.delta0 > 0.0)) throw std::invalid_argument("detect_candidates: delta0 must be positive");
    if (!(opt.anisotropy > 0.0)) throw std::invalid_argument("detect_candidates: anisotropy must be positive");
    const Grid& g = tr.grid();
    const double a = tr.alpha();
    Detection d;
    d.beta = dimension_bound(a, opt.q);
    d.scales = opt.scales;
    std::sort(d.scales.begin(), d.scales.end());
    for (double r : d.scales) {
        if (!(r > 0.0)) throw std::invalid_argument("detect_candidates: scales must be positive");
        d.radii.push_back(std::pow(r, 2.0 * a - 2.0 / opt.q));
    }
    if (2.0 * d.radii.back() > 0.5 * g.L)
        throw std::invalid_argument("detect_candidates: ball diameter exceeds L/2 at the largest scale");
    const std::size_t smallest = ball_cells(g, {0.0, 0.0}, d.radii.front()).size();
    if (smallest < 4) {
        std::ostringstream os;
        os << "under-resolved: smallest covering ball holds " << smallest << " grid cells (need 4)";
        throw UnderResolved(os.str());
    }

    const auto w = snapshot_weights(tr);
    const std::size_t ns = tr.size();
    const double cell = g.dx() * g.dx(), nn = static_cast<double>(g.size());
    {
        double tot = 0.0;
        for (std::size_t i = 0; i < ns; ++i) {
            const auto col = sp.columns(i, d.scales.back());
            double s = 0.0;
            for (double v : *col) s += v;
            tot += w[i] * s;
        }
        d.total_energy = tot * cell;
    }

    for (std::size_t k = 0; k < d.scales.size(); ++k) {
        const double r = d.scales[k], rho = d.radii[k];
        const int stride = std::max(1, static_cast<int>(std::lround(rho / d.radii.front())));
        d.strides.push_back(stride);
        std::vector<std::vector<cplx>> E(ns);
        for (std::size_t i = 0; i < ns; ++i) {
            auto v = *sp.columns(i, r);
            for (auto& x : v) x *= w[i] * cell;
            E[i] = fft::forward(g, v);
        }
        std::map<long long, std::vector<cplx>> masks;
        const double rb = std::pow(rho, d.beta);
        std::size_t scanned = 0;
        for (std::size_t c = 0; c < ns; c += stride) {
            std::vector<cplx> acc(g.spec_size(), cplx(0.0, 0.0));
            bool any = false;
            for (std::size_t i = 0; i < ns; ++i) {
                const double dt = opt.anisotropy * std::abs(tr.time(i) - tr.time(c));
                if (!(dt < rho) || w[i] == 0.0) continue;
                const double R = std::sqrt(rho * rho - dt * dt);
                const long long key = std::llround(R / g.dx() * 1e9);
                auto it = masks.find(key);
                if (it == masks.end()) it = masks.emplace(key, disk_spectrum(g, R)).first;
                const auto& D = it->second;
                for (std::size_t m = 0; m < acc.size(); ++m) acc[m] += E[i][m] * D[m];
                any = true;
            }
            if (!any) continue;
            const auto sums = fft::inverse(g, acc);
            for (int i1 = 0; i1 < g.n; i1 += stride)
                for (int i2 = 0; i2 < g.n; i2 += stride) {
                    ++scanned;
                    const double I = std::max(0.0, nn * sums[static_cast<std::size_t>(i1) * g.n + i2]);
                    const double v = I / rb;
                    if (v > opt.delta0) {
                        CandidatePoint p;
                        p.x = cell_center(g, i1, i2);
                        p.s = tr.time(c);
                        p.r = r;
                        p.rho = rho;
                        p.integral = I;
                        p.value = v;
                        p.scale = static_cast<int>(k);
                        d.candidates.push_back(p);
                    }
                }
        }
        d.scanned.push_back(scanned);
    }
    return d;
}

double ball_distance(const SpaceTimeBall& a, const SpaceTimeBall& b, double period) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
        double d = a.c[k] - b.c[k];
        if (k < 2 && period > 0.0) d = std::remainder(d, period);
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<SpaceTimeBall> candidate_balls(const std::vector<CandidatePoint>& c, double anisotropy) {
    std::vector<SpaceTimeBall> b;
    b.reserve(c.size());
    for (auto& p : c) b.push_back({{p.x[0], p.x[1], anisotropy * p.s}, p.rho});
    return b;
}

CoverResult vitali_cover(const std::vector<SpaceTimeBall>& balls, double period) {
    CoverResult res;
    std::vector<std::size_t> order(balls.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const auto& a = balls[i];
        const auto& b = balls[j];
        if (a.radius != b.radius) return a.radius > b.radius;
        if (a.c != b.c) return a.c < b.c;
        return i < j;
    });
    for (std::size_t i : order) {
        if (!(balls[i].radius > 0.0)) throw std::invalid_argument("vitali_cover: radii must be positive");
        bool free = true;
        for (std::size_t j : res.selected)
            if (ball_distance(balls[i], balls[j], period) < balls[i].radius + balls[j].radius) {
                free = false;
                break;
            }
        if (free) res.selected.push_back(i);
    }
    res.covered_by.assign(balls.size(), balls.size());
    res.certificate_complete = true;
    for (std::size_t i = 0; i < balls.size(); ++i) {
        double best = kNoCover;
        for (std::size_t j : res.selected) {
            const double dil = (ball_distance(balls[i], balls[j], period) + balls[i].radius) / balls[j].radius;
            if (dil < best) {
                best = dil;
                res.covered_by[i] = j;
            }
        }
        if (best <= 5.0)
            res.max_dilation = std::max(res.max_dilation, best);
        else
            res.certificate_complete = false;
    }
    return res;
}

ContentBound hausdorff_content(const CoverResult& cover, const std::vector<CandidatePoint>& candidates, double beta,
                               double delta0, double total_energy) {
    if (!(delta0 > 0.0)) throw std::invalid_argument("hausdorff_content: delta0 must be positive");
    ContentBound b;
    double local = 0.0;
    for (std::size_t i : cover.selected) {
        if (i >= candidates.size()) throw std::out_of_range("hausdorff_content: cover does not match candidates");
        b.content += std::pow(10.0 * candidates[i].rho, beta);
        local += candidates[i].integral;
    }
    const double f = std::pow(10.0, beta) / delta0;
    b.local_bound = f * local;
    b.global_bound = f * total_energy;
    const double slack = 1e-12;
    b.chain_holds = b.content <= b.local_bound * (1.0 + slack) && b.local_bound <= b.global_bound * (1.0 + slack);
    return b;
}

std::vector<SweepRow> covering_sweep(const Detection& d, double delta0, double period, double anisotropy) {
    std::vector<SweepRow> rows;
    for (std::size_t k = 0; k < d.radii.size(); ++k) {
        std::vector<CandidatePoint> sub;
        for (auto& c : d.candidates)
            if (c.scale <= static_cast<int>(k)) sub.push_back(c);
        const CoverResult cov = vitali_cover(candidate_balls(sub, anisotropy), period);
        const ContentBound b = hausdorff_content(cov, sub, d.beta, delta0, d.total_energy);
        SweepRow row;
        row.delta0 = delta0;
        row.eps = 2.0 * d.radii[k];
        row.beta = d.beta;
        row.candidates = sub.size();
        row.selected = cov.selected.size();
        row.content = b.content;
        row.bound = b.global_bound;
        row.chain_holds = b.chain_holds && cov.certificate_complete;
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "delta0,eps,beta,candidates,selected,content,dissipation_bound,chain_holds\n";
    for (auto& r : rows)
        os << r.delta0 << ',' << r.eps << ',' << r.beta << ',' << r.candidates << ',' << r.selected << ',' << r.content
           << ',' << r.bound << ',' << (r.chain_holds ? 1 : 0) << '\n';
    return os.str();
}

std::vector<std::size_t> box_counts(const std::vector<CandidatePoint>& c, const std::vector<double>& sizes,
                                    double anisotropy) {
    std::vector<std::size_t> out;
    for (double e : sizes) {
        if (!(e > 0.0)) throw std::invalid_argument("box_counts: sizes must be positive");
        std::set<std::tuple<long long, long long, long long>> boxes;
        for (auto& p : c)
            boxes.insert({static_cast<long long>(std::floor(p.x[0] / e)), static_cast<long long>(std::floor(p.x[1] / e)),
                          static_cast<long long>(std::floor(anisotropy * p.s / e))});
        out.push_back(boxes.size());
    }
    return out;
}

std::string candidates_json(const Detection& d) {
    nlohmann::ordered_json j;
    j["beta"] = d.beta;
    j["scales"] = d.scales;
    j["radii"] = d.radii;
    j["strides"] = d.strides;
    j["scanned"] = d.scanned;
    j["total_energy"] = d.total_energy;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (auto& c : d.candidates)
        arr.push_back({{"x", {c.x[0], c.x[1]}}, {"s", c.s}, {"r", c.r}, {"rho", c.rho}, {"integral", c.integral},
                       {"value", c.value}});
    j["candidates"] = arr;
    return j.dump();
}

std::string cover_json(const CoverResult& cover, const std::vector<CandidatePoint>& c, const ContentBound& b) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json sel = nlohmann::ordered_json::array();
    for (std::size_t i : cover.selected)
        sel.push_back({{"x", {c[i].x[0], c[i].x[1]}}, {"s", c[i].s}, {"rho", c[i].rho}, {"integral", c[i].integral}});
    j["selected"] = sel;
    j["certificate_complete"] = cover.certificate_complete;
    j["max_dilation"] = cover.max_dilation;
    j["content"] = b.content;
    j["local_bound"] = b.local_bound;
    j["global_bound"] = b.global_bound;
    j["chain_holds"] = b.chain_holds;
    return j.dump();
}

}  // namespace sqg
