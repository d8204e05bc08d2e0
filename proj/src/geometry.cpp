#include "sqglab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sqg {

double periodic_distance(Vec2 a, Vec2 b, double L) {
    const double d1 = std::remainder(a[0] - b[0], L), d2 = std::remainder(a[1] - b[1], L);
    return std::sqrt(d1 * d1 + d2 * d2);
}

std::vector<std::size_t> ball_cells(const Grid& g, Vec2 c, double R) {
    std::vector<std::size_t> out;
    if (!(R > 0.0)) return out;
    const double h = g.dx(), R2 = R * R;
    for (int i = 0; i < g.n; ++i) {
        const double d1 = std::remainder(i * h - c[0], g.L);
        if (d1 * d1 >= R2) continue;
        for (int j = 0; j < g.n; ++j) {
            const double d2 = std::remainder(j * h - c[1], g.L);
            if (d1 * d1 + d2 * d2 < R2) out.push_back(static_cast<std::size_t>(i) * g.n + j);
        }
    }
    return out;
}

std::vector<std::size_t> resolved_ball(const Grid& g, Vec2 c, double R, std::size_t min_cells) {
    auto cells = ball_cells(g, c, R);
    if (cells.size() < min_cells) {
        std::ostringstream os;
        os << "under-resolved: ball of radius " << R << " holds " << cells.size() << " grid cells (need "
           << min_cells << ")";
        throw UnderResolved(os.str());
    }
    return cells;
}

TimeWindow time_window(const Trajectory& tr, double lo, double hi, bool clip) {
    if (!(hi > lo)) throw std::invalid_argument("time window: need hi > lo");
    const double tol = 1e-9 * (hi - lo);
    if (clip) {
        lo = std::max(lo, tr.start());
        hi = std::min(hi, tr.end());
        if (!(hi > lo)) throw OutsideHorizon("time window does not meet the trajectory span");
    } else if (lo < tr.start() - tol || hi > tr.end() + tol) {
        std::ostringstream os;
        os << "cylinder outside horizon: window [" << lo << ", " << hi << "] vs trajectory [" << tr.start() << ", "
           << tr.end() << "]";
        throw OutsideHorizon(os.str());
    }
    TimeWindow w;
    w.lo = lo;
    w.hi = hi;
    const auto& t = tr.times();
    const std::size_t N = t.size();
    for (std::size_t i = 0; i < N; ++i) {
        if (t[i] >= lo - tol && t[i] <= hi + tol) w.inside.push_back(i);
        const double a = i == 0 ? t[0] : 0.5 * (t[i - 1] + t[i]);
        const double b = i + 1 == N ? t[N - 1] : 0.5 * (t[i] + t[i + 1]);
        const double len = std::min(b, hi) - std::max(a, lo);
        if (len > tol) w.weights.push_back({i, len});
    }
    if (w.inside.empty()) throw UnderResolved("under-resolved: time window contains no snapshot");
    return w;
}

std::vector<double> tail_ladder(double r, double L) {
    std::vector<double> R;
    const double top = 0.5 * L;
    for (int k = 0;; ++k) {
        const double v = 0.25 * r * std::pow(2.0, 0.25 * k);
        if (v >= top * (1.0 - 1e-12)) break;
        R.push_back(v);
    }
    R.push_back(top);
    return R;
}

SortedOffsets::SortedOffsets(const Grid& g, Vec2 center) {
    const std::size_t N = g.size();
    std::vector<double> d(N);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            d[static_cast<std::size_t>(i) * g.n + j] = periodic_distance(cell_center(g, i, j), center, g.L);
    cells_.resize(N);
    std::iota(cells_.begin(), cells_.end(), std::size_t{0});
    std::stable_sort(cells_.begin(), cells_.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    dist_.resize(N);
    for (std::size_t k = 0; k < N; ++k) dist_[k] = d[cells_[k]];
}

std::size_t SortedOffsets::count_below(double R) const {
    return static_cast<std::size_t>(std::lower_bound(dist_.begin(), dist_.end(), R) - dist_.begin());
}

}  // namespace sqg
