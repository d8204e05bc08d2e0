#include <doctest/doctest.h>

#include <algorithm>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <random>

#include "sqglab/covering.hpp"
#include "sqglab/geometry.hpp"

using namespace sqg;

namespace {

constexpr double A = 0.45;

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::vector<double> uniform_times(double t0, double t1, int count) {
    std::vector<double> t;
    for (int i = 0; i < count; ++i) t.push_back(t0 + (t1 - t0) * i / (count - 1));
    return t;
}

Trajectory built(const Grid& g, const std::vector<double>& times,
                 const std::function<double(double, double, double)>& f) {
    std::vector<Field> snaps;
    for (double t : times) snaps.push_back(Field::from_function(g, [&](double x, double y) { return f(x, y, t); }));
    return Trajectory(g, A, times, std::move(snaps));
}

std::mt19937_64 rng(20240611);

std::vector<SpaceTimeBall> random_balls(std::size_t count, double box, double rmin, double rmax) {
    std::uniform_real_distribution<double> pos(0.0, box), rad(rmin, rmax);
    std::vector<SpaceTimeBall> b(count);
    for (auto& x : b) {
        x.c = {pos(rng), pos(rng), pos(rng)};
        x.radius = rad(rng);
    }
    return b;
}

double dist3(const SpaceTimeBall& a, const SpaceTimeBall& b) {
    return std::sqrt(std::pow(a.c[0] - b.c[0], 2) + std::pow(a.c[1] - b.c[1], 2) + std::pow(a.c[2] - b.c[2], 2));
}

// Exhaustive oracle: selected balls pairwise disjoint, every input ball inside some selected 5x dilate.
bool cover_is_valid(const std::vector<SpaceTimeBall>& b, const CoverResult& c) {
    for (std::size_t i = 0; i < c.selected.size(); ++i)
        for (std::size_t j = i + 1; j < c.selected.size(); ++j) {
            const auto& p = b[c.selected[i]];
            const auto& q = b[c.selected[j]];
            if (dist3(p, q) < p.radius + q.radius) return false;
        }
    for (const auto& x : b) {
        bool in = false;
        for (std::size_t s : c.selected) in = in || dist3(x, b[s]) + x.radius <= 5.0 * b[s].radius;
        if (!in) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("dimension bound arithmetic") {
    // Frozen from a 30-digit evaluation of the formula.
    CHECK(dimension_bound(0.45, 20) == doctest::Approx(2.78684027777777779711536679241).epsilon(1e-13));
    CHECK(dimension_bound(0.45, 40) == doctest::Approx(2.61864379084967321116519858465).epsilon(1e-13));
    CHECK(dimension_bound(0.45, 400) == doctest::Approx(2.48333488516449410333038679515).epsilon(1e-13));
    CHECK(dimension_limit(0.45) == doctest::Approx(2.4691358024691358).epsilon(1e-15));

    double prev = 1e300;
    for (double q : {20.0, 40.0, 80.0, 160.0}) {
        const double b = dimension_bound(0.45, q);
        CHECK(b < prev);
        CHECK(b > dimension_limit(0.45));
        prev = b;
    }
    for (double q : {100.0, 1000.0, 10000.0}) {
        const double g1 = dimension_bound(0.45, q) - dimension_limit(0.45);
        const double g2 = dimension_bound(0.45, 2 * q) - dimension_limit(0.45);
        const double g4 = dimension_bound(0.45, 4 * q) - dimension_limit(0.45);
        CHECK(g1 / g2 == doctest::Approx(2.0).epsilon(0.03));
        CHECK(g2 / g4 == doctest::Approx(2.0).epsilon(0.03));
    }
    for (double a : {0.42, 0.45, 0.49}) CHECK(std::abs(dimension_bound(a, 400) - dimension_limit(a)) < 0.05);

    CHECK_THROWS_AS(dimension_bound(0.40, 20), std::domain_error);
    CHECK_THROWS_AS(dimension_bound(0.5, 20), std::domain_error);
    CHECK_THROWS_AS(dimension_bound(0.45, 19), std::domain_error);
    try {
        dimension_bound(0.40, 20);
    } catch (const std::domain_error& e) {
        CHECK(std::string(e.what()).find("(1/sqrt(6), 1/2)") != std::string::npos);
    }
}

TEST_CASE("vitali cover") {
    SUBCASE("single ball") {
        std::vector<SpaceTimeBall> b{{{1.0, 2.0, 3.0}, 0.5}};
        CoverResult c = vitali_cover(b);
        REQUIRE(c.selected.size() == 1);
        CHECK(c.certificate_complete);
        std::vector<CandidatePoint> cp(1);
        cp[0].rho = 0.5;
        cp[0].integral = 1.0;
        ContentBound cb = hausdorff_content(c, cp, 2.5, 1e-3, 2.0);
        CHECK(cb.content == doctest::Approx(std::pow(5.0, 2.5)));
    }
    SUBCASE("two disjoint balls") {
        std::vector<SpaceTimeBall> b{{{0.0, 0.0, 0.0}, 1.0}, {{3.0, 0.0, 0.0}, 1.0}};
        CHECK(vitali_cover(b).selected.size() == 2);
        // Tangent balls are disjoint as open balls.
        b[1].c[0] = 2.0;
        CHECK(vitali_cover(b).selected.size() == 2);
        b[1].c[0] = 1.9;
        CHECK(vitali_cover(b).selected.size() == 1);
    }
    SUBCASE("largest first with lexicographic ties") {
        std::vector<SpaceTimeBall> b{{{1.0, 0.0, 0.0}, 1.0}, {{0.5, 0.0, 0.0}, 1.0}, {{0.0, 0.0, 0.0}, 0.3}};
        CoverResult c = vitali_cover(b);
        REQUIRE(c.selected.size() == 1);
        CHECK(c.selected[0] == 1);
        std::reverse(b.begin(), b.end());
        CHECK(vitali_cover(b).selected[0] == 1);
    }
    SUBCASE("random cluster of 100 balls") {
        auto b = random_balls(100, 2.0, 0.05, 0.4);
        CoverResult c = vitali_cover(b);
        CHECK(c.certificate_complete);
        CHECK(cover_is_valid(b, c));
        CHECK(c.max_dilation <= 3.0 + 1e-12);
        // Maximality: every rejected ball meets a selected ball at least as large.
        for (std::size_t i = 0; i < b.size(); ++i) {
            if (std::find(c.selected.begin(), c.selected.end(), i) != c.selected.end()) continue;
            bool hit = false;
            for (std::size_t s : c.selected)
                hit = hit || (dist3(b[i], b[s]) < b[i].radius + b[s].radius && b[s].radius >= b[i].radius);
            CHECK(hit);
        }
        // Input order does not matter.
        auto p = b;
        std::shuffle(p.begin(), p.end(), rng);
        CoverResult cp = vitali_cover(p);
        REQUIRE(cp.selected.size() == c.selected.size());
        for (std::size_t k = 0; k < c.selected.size(); ++k) CHECK(p[cp.selected[k]].c == b[c.selected[k]].c);
    }
    SUBCASE("1000 random sets") {
        std::uniform_int_distribution<int> count(1, 60);
        std::uniform_real_distribution<double> spread(0.2, 3.0);
        int bad = 0;
        for (int t = 0; t < 1000; ++t) {
            auto b = random_balls(count(rng), spread(rng), 0.01, 0.5);
            CoverResult c = vitali_cover(b);
            if (!c.certificate_complete || !cover_is_valid(b, c)) ++bad;
        }
        CHECK(bad == 0);
    }
    SUBCASE("periodic metric") {
        std::vector<SpaceTimeBall> b{{{0.1, 0.0, 0.0}, 0.3}, {{9.9, 0.0, 0.0}, 0.3}};
        CHECK(vitali_cover(b).selected.size() == 2);
        CHECK(vitali_cover(b, 10.0).selected.size() == 1);
        CHECK(ball_distance(b[0], b[1], 10.0) == doctest::Approx(0.2));
    }
}

TEST_CASE("hausdorff content chain") {
    CoverResult empty;
    ContentBound e = hausdorff_content(empty, {}, 2.8, 1e-3, 5.0);
    CHECK(e.content == 0.0);
    CHECK(e.local_bound == 0.0);
    CHECK(e.chain_holds);

    // Single ball on a frozen single mode; the column energy is
    // A^2 (P(r) sin^2 x1 + Q(r) cos^2 x1) with P, Q the y-integrals of the profile.
    Grid g{64};
    const double amp = 0.7;
    auto times = uniform_times(0.0, 1.0, 21);
    Trajectory tr = built(g, times, [&](double x, double, double) { return amp * std::cos(x); });
    SlabProvider sp(tr);
    const double q = 20.0, beta = dimension_bound(A, q), r = 0.3, rho = std::pow(r, 2 * A - 2 / q);
    const double b = 1 - 2 * A;
    const double cst = std::pow(2.0, 1 - A) / boost::math::tgamma(A);
    auto phi = [&](double s) { return s == 0.0 ? 1.0 : cst * std::pow(s, A) * boost::math::cyl_bessel_k(A, s); };
    auto dphi = [&](double s) { return -cst * std::pow(s, A) * boost::math::cyl_bessel_k(1 - A, s); };
    boost::math::quadrature::tanh_sinh<double> ts;
    const double P = ts.integrate([&](double y) { return std::pow(y, b) * phi(y) * phi(y); }, 0.0, r);
    const double Q = ts.integrate([&](double y) { return std::pow(y, b) * dphi(y) * dphi(y); }, 0.0, r);
    const Vec2 x0{1.0, 2.0};
    const double s0 = 0.5;
    double I = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double dt = std::abs(times[i] - s0);
        if (dt >= rho) continue;
        const double w = (i == 0 || i + 1 == times.size()) ? 0.025 : 0.05;
        for (auto k : ball_cells(g, x0, std::sqrt(rho * rho - dt * dt))) {
            const double x = (k / g.n) * g.dx();
            I += w * amp * amp * (P * std::sin(x) * std::sin(x) + Q * std::cos(x) * std::cos(x));
        }
    }
    I *= g.dx() * g.dx();
    const double measured = ball_integral(tr, sp, x0, s0, r, rho);
    CHECK(rel(measured, I) < 1e-2);

    std::vector<CandidatePoint> cp(1);
    cp[0].x = x0;
    cp[0].s = s0;
    cp[0].r = r;
    cp[0].rho = rho;
    cp[0].integral = measured;
    cp[0].value = measured / std::pow(rho, beta);
    const double delta0 = 0.5 * cp[0].value;
    CoverResult c = vitali_cover(candidate_balls(cp));
    ContentBound cb = hausdorff_content(c, cp, beta, delta0, 10.0 * measured);
    CHECK(cb.content == doctest::Approx(std::pow(10 * rho, beta)));
    CHECK(cb.content <= cb.local_bound);
    CHECK(cb.local_bound <= cb.global_bound);
    CHECK(cb.chain_holds);
}

TEST_CASE("candidate detection") {
    const double q = 20.0;
    SUBCASE("constant data fires nowhere") {
        Grid g{32};
        Trajectory tr = built(g, uniform_times(0.0, 1.0, 11), [](double, double, double) { return 3.0; });
        SlabProvider sp(tr);
        DetectionOptions o;
        o.delta0 = 1e-300;
        o.scales = {0.3, 0.6};
        Detection d = detect_candidates(tr, sp, o);
        CHECK(d.candidates.empty());
        CHECK(d.total_energy == 0.0);
    }
    SUBCASE("tiny delta0 fires at every lattice point") {
        Grid g{32};
        Trajectory tr =
            built(g, uniform_times(0.0, 1.0, 11), [](double x, double y, double t) { return std::sin(x + t) + std::cos(2 * y); });
        SlabProvider sp(tr);
        DetectionOptions o;
        o.delta0 = 1e-300;
        o.scales = {0.3, 0.6};
        Detection d = detect_candidates(tr, sp, o);
        std::size_t finest = 0;
        for (auto& c : d.candidates) finest += c.scale == 0;
        CHECK(finest == d.scanned[0]);
        CHECK(d.scanned[0] == g.size() * 11);
        CHECK(d.strides[0] == 1);
        CHECK(d.candidates.size() == d.scanned[0] + d.scanned[1]);
        for (auto& c : d.candidates) CHECK(c.value > o.delta0);
    }
    SUBCASE("lattice values match direct ball integrals") {
        Grid g{32};
        Trajectory tr =
            built(g, uniform_times(0.0, 1.0, 11), [](double x, double y, double t) { return std::sin(x + t) * std::cos(y); });
        SlabProvider sp(tr);
        DetectionOptions o;
        o.delta0 = 1e-300;
        o.scales = {0.3, 0.6};
        Detection d = detect_candidates(tr, sp, o);
        for (std::size_t k = 0; k < d.candidates.size(); k += 97) {
            const auto& c = d.candidates[k];
            CHECK(rel(c.integral, ball_integral(tr, sp, c.x, c.s, c.r, c.rho)) < 1e-10);
        }
    }
    SUBCASE("concentrated dissipation localizes, against a dense scan") {
        Grid g{64};
        const Vec2 xs{2.0, 3.5};
        const double ss = 0.5;
        auto times = uniform_times(0.0, 1.0, 21);
        Trajectory tr = built(g, times, [&](double x, double y, double t) {
            if (std::abs(t - ss) > 0.051) return 0.0;
            const double d1 = std::remainder(x - xs[0], g.L), d2 = std::remainder(y - xs[1], g.L);
            return std::exp(-(d1 * d1 + d2 * d2) / (2 * 0.15 * 0.15));
        });
        SlabProvider sp(tr);
        DetectionOptions o;
        o.q = q;
        o.scales = {0.1};
        o.delta0 = 1e-300;
        Detection all = detect_candidates(tr, sp, o);
        double vmax = 0.0;
        for (auto& c : all.candidates) vmax = std::max(vmax, c.value);
        o.delta0 = 0.3 * vmax;
        Detection d = detect_candidates(tr, sp, o);
        REQUIRE(!d.candidates.empty());
        const double rho = d.radii[0];
        auto sep = [&](Vec2 x, double s) {
            const double d1 = std::remainder(x[0] - xs[0], g.L), d2 = std::remainder(x[1] - xs[1], g.L);
            return std::sqrt(d1 * d1 + d2 * d2 + (s - ss) * (s - ss));
        };
        for (auto& c : d.candidates) CHECK(sep(c.x, c.s) <= rho + g.dx());

        // Dense scan at twice the density per axis, with its own ball sums.
        const double h = 0.5 * g.dx(), beta = d.beta;
        std::vector<std::vector<double>> cols;
        for (std::size_t i = 0; i < times.size(); ++i) cols.push_back(*sp.columns(i, 0.1));
        std::size_t dense_hits = 0;
        double dense_far = 0.0;
        for (std::size_t ic = 0; ic < times.size(); ++ic)
            for (int a = 0; a < 2 * g.n; ++a)
                for (int bb = 0; bb < 2 * g.n; ++bb) {
                    const Vec2 x{a * h, bb * h};
                    if (periodic_distance(x, xs, g.L) > 3 * rho) continue;
                    double I = 0.0;
                    for (std::size_t i = 0; i < times.size(); ++i) {
                        const double dt = std::abs(times[i] - times[ic]);
                        if (dt >= rho) continue;
                        const double w = (i == 0 || i + 1 == times.size()) ? 0.025 : 0.05;
                        for (int i1 = 0; i1 < g.n; ++i1)
                            for (int i2 = 0; i2 < g.n; ++i2)
                                if (periodic_distance(cell_center(g, i1, i2), x, g.L) < std::sqrt(rho * rho - dt * dt))
                                    I += w * cols[i][static_cast<std::size_t>(i1) * g.n + i2];
                    }
                    I *= g.dx() * g.dx();
                    if (I / std::pow(rho, beta) > o.delta0) {
                        ++dense_hits;
                        dense_far = std::max(dense_far, sep(x, times[ic]));
                    }
                }
        CHECK(dense_hits >= d.candidates.size());
        CHECK(dense_far <= rho + g.dx());
    }
    SUBCASE("errors") {
        Grid g{32};
        Trajectory tr = built(g, uniform_times(0.0, 1.0, 5), [](double x, double, double) { return std::sin(x); });
        SlabProvider sp(tr);
        DetectionOptions o;
        o.scales = {0.01};
        CHECK_THROWS_AS(detect_candidates(tr, sp, o), UnderResolved);
        o.scales = {3.0};
        CHECK_THROWS_AS(detect_candidates(tr, sp, o), std::invalid_argument);
        o.scales = {0.3};
        o.delta0 = 0.0;
        CHECK_THROWS_AS(detect_candidates(tr, sp, o), std::invalid_argument);
    }
}

TEST_CASE("covering sweep and exports") {
    Grid g{32};
    Trajectory tr = built(g, uniform_times(0.0, 1.0, 11),
                          [](double x, double y, double t) { return std::exp(-t) * (std::sin(x) + 0.5 * std::cos(3 * y)); });
    SlabProvider sp(tr);
    DetectionOptions o;
    o.scales = {0.3, 0.6, 1.0};
    o.delta0 = 0.05;
    Detection d = detect_candidates(tr, sp, o);
    auto rows = covering_sweep(d, o.delta0, g.L);
    REQUIRE(rows.size() == 3);
    for (auto& r : rows) {
        CHECK(r.chain_holds);
        CHECK(r.content <= r.bound);
    }
    CHECK(rows[0].eps < rows[1].eps);
    const std::string csv = sweep_csv(rows);
    CHECK(csv.rfind("delta0,eps,beta,candidates,selected,content,dissipation_bound,chain_holds\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    auto j = nlohmann::json::parse(candidates_json(d));
    CHECK(j["candidates"].size() == d.candidates.size());
    CoverResult c = vitali_cover(candidate_balls(d.candidates), g.L);
    ContentBound b = hausdorff_content(c, d.candidates, d.beta, o.delta0, d.total_energy);
    auto jc = nlohmann::json::parse(cover_json(c, d.candidates, b));
    CHECK(jc["selected"].size() == c.selected.size());
    CHECK(jc["chain_holds"] == true);

    std::vector<CandidatePoint> pts(3);
    pts[0].x = {0.1, 0.1};
    pts[1].x = {0.2, 0.1};
    pts[2].x = {1.5, 0.1};
    auto counts = box_counts(pts, {1.0, 0.15});
    CHECK(counts[0] == 2);
    CHECK(counts[1] == 3);
}
