#include <doctest/doctest.h>

#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <numbers>

#include "sqglab/flow.hpp"
#include "sqglab/verify.hpp"

using namespace sqg;

namespace {

constexpr double A = 0.45;
constexpr double pi = std::numbers::pi;

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

SimulationConfig base(int n, double horizon, double cadence) {
    SimulationConfig cfg;
    cfg.grid.n = n;
    cfg.alpha = A;
    cfg.horizon = horizon;
    cfg.snapshot_dt = cadence;
    cfg.dt_max = 0.005;
    return cfg;
}

Trajectory constant_run(int n, double value, double horizon = 2.0) {
    SimulationConfig cfg = base(n, horizon, 0.05);
    cfg.initial.kind = InitialCondition::Kind::Constant;
    cfg.initial.mean = value;
    return simulate(cfg);
}

// Heat-only single mode A cos(m1 x + phase) + mean.
Trajectory linear_mode(int n, double amp, double mean, double horizon, double cadence, int m1 = 1) {
    SimulationConfig cfg = base(n, horizon, cadence);
    cfg.advect = false;
    cfg.initial.kind = InitialCondition::Kind::SingleMode;
    cfg.initial.amplitude = amp;
    cfg.initial.mean = mean;
    cfg.initial.m1 = m1;
    cfg.initial.m2 = 0;
    return simulate(cfg);
}

Trajectory random_run(std::uint64_t seed, int n, double amp, double horizon, double cadence = 0.02) {
    SimulationConfig cfg = base(n, horizon, cadence);
    cfg.initial.kind = InitialCondition::Kind::Random;
    cfg.initial.seed = seed;
    cfg.initial.kmax = 4;
    cfg.initial.amplitude = amp;
    return simulate(cfg);
}

}  // namespace

TEST_CASE("time quadratures") {
    const std::vector<double> t{0.0, 0.1, 0.25, 0.3, 0.5, 0.55, 0.8, 1.0};
    std::vector<double> f;
    for (double x : t) f.push_back(1.0 - 2.0 * x + 3.0 * x * x * x - x * x * x * x);
    // Exact for quartics on arbitrary nodes.
    CHECK(time_integral(t, f) == doctest::Approx(1.0 - 1.0 + 0.75 - 0.2).epsilon(1e-13));
    CHECK(time_integral({0.0, 1.0}, {2.0, 4.0}) == doctest::Approx(3.0));

    std::vector<double> g;
    for (double x : t) g.push_back(2.0 + x - 4.0 * x * x * x);
    // Cubic data times a smooth weight: compare with direct fine midpoint rule.
    auto w = [](double x) { return std::exp(-x) * std::sin(3.0 * x); };
    double ref = 0.0;
    const int N = 20000;
    for (int k = 0; k < N; ++k) {
        const double x = 0.2 + 0.7 * (k + 0.5) / N;
        ref += w(x) * (2.0 + x - 4.0 * x * x * x);
    }
    ref *= 0.7 / N;
    CHECK(weighted_time_integral(t, g, w, 0.2, 0.9) == doctest::Approx(ref).epsilon(1e-8));
    CHECK(weighted_time_integral(t, g, w, 0.5, 0.5) == 0.0);
}

TEST_CASE("global energy") {
    SUBCASE("constant data: equality 0 = 0 in the dissipation") {
        Trajectory tr = constant_run(32, 1.3);
        CheckReport r = check_global_energy(tr, 0.0, 1.0);
        CHECK(r.pass);
        CHECK(r.value("dissipation") == 0.0);
        CHECK(std::abs(r.margin) <= 1e-14 * r.rhs);
    }
    SUBCASE("heat-only single mode against exponential decay") {
        const double amp = 0.8, L = 2.0 * pi;
        const double kap = std::pow(1.0, 2 * A);
        const double E0 = 0.5 * amp * amp * L * L / 2.0;
        const double D_exact = E0 * (1.0 - std::exp(-2.0 * kap * 1.0));
        Trajectory coarse = linear_mode(32, amp, 0.0, 1.0, 0.1);
        Trajectory fine = linear_mode(32, amp, 0.0, 1.0, 0.05);
        CheckReport rc = check_global_energy(coarse, 0.0, 1.0), rf = check_global_energy(fine, 0.0, 1.0);
        CHECK(rc.pass);
        CHECK(rf.pass);
        CHECK(rel(rc.value("energy_s"), E0) < 1e-12);
        CHECK(rel(rc.value("dissipation"), D_exact) < 1e-10);
        CHECK(std::abs(rc.margin) < 1e-10 * E0);
        const double ec = std::abs(rc.value("dissipation_quadrature") - D_exact);
        const double ef = std::abs(rf.value("dissipation_quadrature") - D_exact);
        CHECK(ec < 1e-4 * D_exact);
        CHECK(ef < ec / 4.0);
    }
    SUBCASE("nonlinear run") {
        Trajectory tr = random_run(3, 32, 0.6, 1.0);
        CheckReport r = check_global_energy(tr, 0.0, 1.0);
        CHECK(r.pass);
        CHECK(r.margin >= -1e-8 * r.rhs);
        CHECK(rel(r.value("dissipation_quadrature"), r.value("dissipation")) < 1e-4);
        CHECK_THROWS_AS(check_global_energy(tr, 0.0, 0.013), std::invalid_argument);
        CHECK_THROWS_AS(check_global_energy(tr, 0.5, 0.5), std::invalid_argument);
    }
}

TEST_CASE("level-set energy") {
    SUBCASE("lambda above the maximum") {
        Trajectory tr = random_run(4, 32, 0.5, 0.5);
        CheckReport r = check_levelset_energy(tr, 10.0, 0.0, 0.5);
        CHECK(r.pass);
        CHECK(r.lhs == 0.0);
        CHECK(r.rhs == 0.0);
    }
    SUBCASE("lambda = 0 on positive data reduces to the global quadrature") {
        Trajectory tr = linear_mode(32, 0.5, 2.0, 1.0, 0.05);
        CheckReport lv = check_levelset_energy(tr, 0.0, 0.0, 1.0);
        CheckReport gl = check_global_energy(tr, 0.0, 1.0);
        CHECK(rel(lv.value("energy_s"), gl.value("energy_s")) < 1e-13);
        CHECK(rel(lv.value("energy_t"), gl.value("energy_t")) < 1e-13);
        CHECK(rel(lv.value("dissipation"), gl.value("dissipation_quadrature")) < 1e-10);
    }
    SUBCASE("sweep on a nonlinear run") {
        Trajectory tr = random_run(5, 32, 0.6, 1.0);
        const double m = sup_abs(tr.snapshot(0));
        for (double f : {-0.5, -0.2, 0.0, 0.2, 0.5}) {
            CheckReport r = check_levelset_energy(tr, f * m, 0.0, 1.0);
            INFO("lambda=" << f * m << " margin=" << r.margin);
            CHECK(r.pass);
        }
    }
}

TEST_CASE("maximum principle") {
    SUBCASE("constant") {
        Trajectory tr = constant_run(32, -0.7);
        CheckReport r = check_max_principle(tr);
        CHECK(r.pass);
        CHECK(r.margin == 0.0);
    }
    SUBCASE("heat-only C_fit against the mode decay") {
        const double amp = 0.9;
        Trajectory tr = linear_mode(32, amp, 0.0, 1.0, 0.05, 2);
        const double kap = std::pow(2.0, 2 * A), l2 = amp * 2.0 * pi / std::sqrt(2.0);
        double C = 0.0;
        for (std::size_t i = 1; i < tr.size(); ++i) {
            const double t = tr.time(i);
            C = std::max(C, amp * std::exp(-kap * t) * std::pow(t, 1.0 / (2 * A)) / l2);
        }
        CheckReport r = check_max_principle(tr);
        CHECK(r.pass);
        CHECK(rel(r.value("C_fit"), C) < 1e-8);
    }
    SUBCASE("nonlinear run is monotone") {
        Trajectory tr = random_run(6, 32, 0.6, 1.0);
        CheckReport r = check_max_principle(tr);
        CHECK(r.pass);
        CHECK(std::isfinite(r.value("C_fit")));
    }
}

TEST_CASE("test function profiles") {
    TestFunction phi = TestFunction::bump({1.0, 2.0}, 1.0, 0.8, A);
    CHECK(phi.tau == doctest::Approx(std::pow(0.8, 2 * A)));
    CHECK(phi.y_collar == doctest::Approx(0.1));
    CHECK(phi.space(0.8) == 0.0);
    CHECK(phi.space(1.5) == 0.0);
    CHECK(phi.space(0.0) == doctest::Approx(1.0));
    CHECK(phi.height(phi.y_top) == 0.0);
    CHECK(phi.time(phi.t0 - phi.tau) == 0.0);
    CHECK(phi.time(phi.t0) == doctest::Approx(1.0));
    for (double y = 0.0; y <= phi.y_collar; y += phi.y_collar / 16) {
        CHECK(phi.height(y) == 1.0);
        CHECK(phi.height_d1(y) == 0.0);
    }
    const double h = 1e-5;
    for (double x : {0.1, 0.3, 0.55, 0.7}) {
        CHECK(phi.space(x) >= 0.0);
        CHECK(phi.space_d1(x) == doctest::Approx((phi.space(x + h) - phi.space(x - h)) / (2 * h)).epsilon(1e-6));
        const double d2 = (phi.space(x + h) - 2 * phi.space(x) + phi.space(x - h)) / (h * h);
        CHECK(phi.space_laplacian(x) == doctest::Approx(d2 + phi.space_d1(x) / x).epsilon(1e-4));
    }
    for (double y : {0.2, 0.4, 0.7}) {
        CHECK(phi.height_d1(y) == doctest::Approx((phi.height(y + h) - phi.height(y - h)) / (2 * h)).epsilon(1e-6));
        CHECK(phi.height_d2(y) ==
              doctest::Approx((phi.height_d1(y + h) - phi.height_d1(y - h)) / (2 * h)).epsilon(1e-5));
    }
    for (double t : {0.3, 0.6, 0.9}) {
        CHECK(phi.time(t) >= 0.0);
        CHECK(phi.time_d1(t) == doctest::Approx((phi.time(t + h) - phi.time(t - h)) / (2 * h)).epsilon(1e-6));
    }
    CHECK(phi.c2_bound() > 0.0);

    Grid g{32};
    CHECK_NOTHROW(phi.validate(Grid{128}));
    CHECK_THROWS_AS(phi.validate(g), UnderResolved);
    CHECK_THROWS_AS(TestFunction::bump({0.0, 0.0}, 1.0, 2.0, A).validate(Grid{128}, 1e-3), std::invalid_argument);
}

TEST_CASE("height rule and extension constant") {
    const double b = 1 - 2 * A;
    HeightRule hr = HeightRule::build(A, 0.1, 0.9);
    double sb = 0.0, smb = 0.0, s3 = 0.0;
    for (std::size_t l = 0; l < hr.y.size(); ++l) {
        sb += hr.w_b[l];
        smb += hr.w_mb[l];
        s3 += hr.w_b[l] * std::cos(hr.y[l]);
    }
    // In t = y^{2a} the y^b weight becomes t^{b/a}, singular at 0; the lowest dyadic panel bounds the error.
    CHECK(sb == doctest::Approx(std::pow(0.9, 1 + b) / (1 + b)).epsilon(1e-8));
    CHECK(smb == doctest::Approx(std::pow(0.9, 1 - b) / (1 - b)).epsilon(1e-12));
    // int_0^0.9 y^b cos y dy by a fine midpoint rule in t = y^{1+b}.
    double ref = 0.0;
    const int N = 200000;
    const double T = std::pow(0.9, 1 + b);
    for (int k = 0; k < N; ++k) ref += std::cos(std::pow((k + 0.5) * T / N, 1 / (1 + b)));
    ref *= T / N / (1 + b);
    CHECK(s3 == doctest::Approx(ref).epsilon(1e-9));

    const double gamma_form = std::tgamma(A) * std::pow(2.0, 2 * A - 1) / std::tgamma(1 - A);
    CHECK(profile_constant(A) == doctest::Approx(gamma_form).epsilon(1e-10));
    CHECK(calibrate_constant(A).c_measured == doctest::Approx(profile_constant(A)).epsilon(1e-6));
}

TEST_CASE("local energy") {
    SUBCASE("theta = M gives all terms zero") {
        Trajectory tr = constant_run(32, 0.4);
        SlabProvider sp(tr);
        TestFunction phi = TestFunction::bump({3.0, 3.0}, 2.0, 1.6, A);
        for (double q : {2.0, 3.0}) {
            CheckReport r = check_local_energy(sp, phi, q, 1.0, 0.4);
            CHECK(r.pass);
            for (const char* k : {"kinetic", "dissipation", "time_derivative", "transport", "extension"})
                CHECK(r.value(k) == 0.0);
        }
    }
    SUBCASE("heat-only mode on a bump is an identity") {
        Trajectory tr = linear_mode(64, 0.5, 0.0, 1.0, 0.02, 1);
        SlabProvider sp(tr);
        TestFunction phi = TestFunction::bump({1.0, 2.0}, 1.0, 1.0, A);
        CheckReport r = check_local_energy(sp, phi, 2.0, 1.0, -1.0);
        INFO(report_json(r));
        CHECK(r.pass);
        CHECK(std::abs(r.value("relative_margin")) < 1e-6);
        CHECK(r.value("dissipation") > 0.0);
    }
    SUBCASE("nonlinear run, two exponents in one pass") {
        Trajectory tr = random_run(7, 64, 0.5, 1.0);
        SlabProvider sp(tr);
        TestFunction phi = TestFunction::bump({2.0, 4.0}, 1.0, 0.9, A);
        const double M = tr.snapshot(0).mean() - 1.0;
        auto both = check_local_energy_orders(sp, phi, {2.0, 2.6}, 1.0, M);
        REQUIRE(both.size() == 2);
        for (auto& r : both) {
            INFO(report_json(r));
            CHECK(r.pass);
            CHECK(std::abs(r.value("relative_margin")) < 1e-6);
        }
        CheckReport single = check_local_energy(sp, phi, 2.6, 1.0, M);
        CHECK(rel(single.lhs, both[1].lhs) < 1e-14);
        CHECK(rel(single.rhs, both[1].rhs) < 1e-14);
        // Renormalization: eta = (theta - M)/L scales every term by L^{-q}.
        CheckReport scaled = check_local_energy(sp, phi, 2.0, 2.0, M);
        CHECK(rel(scaled.lhs * 4.0, both[0].lhs) < 1e-12);
    }
    SUBCASE("whole-domain variant tracks the global energy") {
        Trajectory tr = random_run(8, 32, 0.5, 1.0);
        SlabProvider sp(tr);
        CheckReport r = local_global_comparison(sp, 0.0, 1.0);
        INFO(report_json(r));
        CHECK(r.pass);
        CHECK(r.value("leakage") < 0.02);
        CHECK(std::abs(r.value("local_margin")) < 1e-6 * r.value("local_scale"));
    }
    SUBCASE("errors") {
        Trajectory tr = random_run(9, 64, 0.5, 1.0);
        SlabProvider sp(tr);
        TestFunction phi = TestFunction::bump({2.0, 4.0}, 1.0, 0.9, A);
        CHECK_THROWS_AS(check_local_energy(sp, phi, 1.5, 1.0, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(check_local_energy(sp, phi, 2.0, 0.0, 0.0), std::invalid_argument);
        TestFunction small = TestFunction::bump({2.0, 4.0}, 1.0, 0.5, A);
        CHECK_THROWS_AS(check_local_energy(sp, small, 2.0, 1.0, 0.0), UnderResolved);
        TestFunction off = phi;
        off.t0 = 0.987;
        CHECK_THROWS(check_local_energy(sp, off, 2.0, 1.0, 0.0));
    }
}

TEST_CASE("Poincare chain") {
    SUBCASE("constants") {
        Grid g{32};
        Field f = Field::from_function(g, [](double, double) { return 2.0; });
        ExtensionSlab slab = extend(f, A, default_levels(g));
        CheckReport r = check_poincare(f, slab, {3.0, 3.0}, 1.6, 2.0);
        CHECK(r.pass);
        CHECK(r.status == CheckStatus::Degenerate);
    }
    SUBCASE("single mode: finite ratios, stable under refinement") {
        double prev1 = 0.0, prev2 = 0.0;
        for (int n : {32, 64}) {
            Grid g{n};
            Field f = Field::from_function(g, [](double x, double y) { return std::sin(x + 2 * y); });
            ExtensionSlab slab = extend(f, A, default_levels(g));
            CheckReport r = check_poincare(f, slab, {3.0, 3.0}, 1.6, 2.5);
            CHECK(r.pass);
            const double r1 = r.value("ratio_lq_gagliardo"), r2 = r.value("ratio_gagliardo_extension");
            CHECK(std::isfinite(r1));
            CHECK(std::isfinite(r2));
            if (n == 64) {
                CHECK(rel(r1, prev1) < 0.15);
                CHECK(rel(r2, prev2) < 0.15);
            }
            prev1 = r1;
            prev2 = r2;
        }
    }
    SUBCASE("q range") {
        Grid g{32};
        Field f = Field::from_function(g, [](double x, double) { return std::sin(x); });
        ExtensionSlab slab = extend(f, A, default_levels(g));
        CHECK_THROWS_AS(check_poincare(f, slab, {3.0, 3.0}, 1.6, 1.5), std::invalid_argument);
        CHECK_THROWS_AS(check_poincare(f, slab, {3.0, 3.0}, 1.6, 4.0), std::invalid_argument);
    }
}

TEST_CASE("scale-invariant probes under dyadic rescaling") {
    Trajectory tr = random_run(11, 64, 0.5, 2.0, 0.05);
    SlabProvider sp(tr);
    Params P = Params::preset(A, 20.0);
    const Cylinder c{{12 * tr.grid().dx(), 20 * tr.grid().dx()}, 1.8, 0.5, Variant::Backward};
    CheckReport i0 = probe_interpolation(tr, sp, c, P);
    CheckReport t0 = check_tail_transfer(tr, sp, c.x, c.t, 1.2, 0.5, P, true);
    CheckReport e0 = probe_excess_decay(tr, c, P, 1.0, 0.1, 1e6);
    CHECK(i0.pass);
    for (double lam : {0.5}) {
        Trajectory ts = rescale(tr, lam);
        SlabProvider sps(ts);
        const Cylinder cs{{c.x[0] / lam, c.x[1] / lam}, c.t / std::pow(lam, 2 * A), c.r / lam, c.variant};
        CheckReport i1 = probe_interpolation(ts, sps, cs, P);
        CHECK(rel(i1.value("ratio_D"), i0.value("ratio_D")) < 1e-4);
        CheckReport t1 = check_tail_transfer(ts, sps, cs.x, cs.t, 1.2 / lam, 0.5, P, true);
        CHECK(t1.pass == t0.pass);
        if (std::isfinite(t0.value("C_fit")) && t0.value("C_fit") > 0.0)
            CHECK(rel(t1.value("C_fit"), t0.value("C_fit")) < 1e-3);
        CheckReport e1 = probe_excess_decay(ts, cs, P, 1.0, 0.1, 1e6);
        CHECK(std::abs(e1.value("observed_exponent") - e0.value("observed_exponent")) < 1e-3);
    }
}

TEST_CASE("conditional probes on constants and hypothesis gating") {
    Params P = Params::preset(A, 20.0);
    Trajectory flat = constant_run(64, 0.0, 2.0);
    SlabProvider fsp(flat);
    CheckReport d = probe_energy_decay(flat, fsp, {3.0, 3.0}, 1.5, 1.0, P);
    CHECK(d.pass);
    CHECK(d.status == CheckStatus::Pass);
    CHECK(d.lhs == 0.0);
    CheckReport ex = probe_excess_decay(flat, Cylinder{{3.0, 3.0}, 1.5, 1.0}, P, 1.0, 0.1, 1e-3);
    CHECK(ex.pass);
    CheckReport in = probe_interpolation(flat, fsp, Cylinder{{3.0, 3.0}, 1.9, 0.6}, P);
    CHECK(in.pass);
    CHECK(in.status == CheckStatus::Degenerate);
    CheckReport tt = check_tail_transfer(flat, fsp, {3.0, 3.0}, 1.5, 1.0, 0.5, P, true);
    CHECK(tt.pass);

    // One zoom by 1/4 costs a factor 4 in resolution, so the ladder needs the finer grid.
    Trajectory flat128 = constant_run(128, 0.0, 2.0);
    RescaledFamily fam = build_family(flat128, {0.0, 0.0}, 1.5, 0.25, 1);
    CheckReport it = probe_iterated_decay(fam, P, 1);
    INFO(report_json(it));
    CHECK(it.pass);

    // Large-amplitude data without recentering: B_local is far above delta.
    Trajectory big = random_run(12, 32, 3.0, 2.0, 0.05);
    SlabProvider bsp(big);
    CheckReport g = probe_energy_decay(big, bsp, {3.0, 3.0}, 1.5, 1.0, P);
    CHECK(g.status == CheckStatus::HypothesisFailure);
    CHECK(!g.note.empty());
    CHECK(suite_exit_code({d, g}) == 2);
    CheckReport bad = inequality_report("x", 2.0, 1.0, 0.0);
    CHECK(suite_exit_code({g, bad}) == 1);

    CheckReport ge = probe_excess_decay(big, Cylinder{{3.0, 3.0}, 1.5, 1.0}, P, 1.0, 0.1, 1e-6);
    CHECK(ge.status == CheckStatus::HypothesisFailure);

    RescaledFamily short_fam = build_family(big, {0.0, 0.0}, 1.5, 0.25, 1);
    CheckReport sf = probe_iterated_decay(short_fam, P, 3);
    CHECK(sf.status == CheckStatus::HypothesisFailure);
}

TEST_CASE("report JSON") {
    CheckReport r = inequality_report("demo", 1.0, 2.0, 1e-9);
    r.values = {{"finite", 0.5}, {"unbounded", std::numeric_limits<double>::infinity()}};
    r.meta = {{"k", "v"}};
    const std::string s = report_json(r);
    auto j = nlohmann::json::parse(s);
    CHECK(j["name"] == "demo");
    CHECK(j["pass"] == true);
    CHECK(j["margin"].get<double>() == 1.0);
    CHECK(j["values"]["unbounded"] == "inf");
    CHECK(j["meta"]["k"] == "v");
    CHECK(s.find("\"name\"") < s.find("\"status\""));
    const std::string lines = reports_jsonl({r, r});
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 2);
    CHECK(report_json(r) == s);
}
