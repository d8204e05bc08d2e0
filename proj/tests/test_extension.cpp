#include <doctest/doctest.h>

#include <boost/math/quadrature/ooura_fourier_integrals.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <filesystem>

#include "sqglab/extension.hpp"
#include "sqglab/special.hpp"

using namespace sqg;

namespace {

constexpr double A = 0.45;

Field random_field(const Grid& g, std::uint64_t seed, int kmax, double amp = 1.0) {
    InitialCondition ic;
    ic.kind = InitialCondition::Kind::Random;
    ic.seed = seed;
    ic.kmax = kmax;
    ic.amplitude = amp;
    return make_initial(g, ic);
}

double closed_form_constant(double a) { return std::tgamma(a) * std::pow(2.0, 2 * a - 1) / std::tgamma(1 - a); }

// phi(y) for a unit-frequency mode from the Poisson kernel on R^2, integrated
// over x2 in closed form and over x1 by a Fourier cosine quadrature.
double poisson_profile(double a, double y) {
    boost::math::quadrature::ooura_fourier_cos<double> integrator(1e-12);
    auto f = [&](double x) { return std::pow(y * y + x * x, -a - 0.5); };
    auto [num, err] = integrator.integrate(f, 1.0);
    (void)err;
    return 2.0 * num / (std::pow(y, -2 * a) * boost::math::beta(0.5, a));
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("Bessel K against Boost") {
    for (double nu : {0.05, 0.3, 0.45, 0.5, 0.55, 0.9})
        for (double x : {1e-6, 0.01, 0.5, 2.0, 7.5, 9.99, 10.0, 10.01, 25.0, 100.0}) {
            INFO("nu=" << nu << " x=" << x);
            CHECK(rel(special::bessel_k(nu, x), boost::math::cyl_bessel_k(nu, x)) < 1e-8);
        }
    CHECK_THROWS(special::bessel_k(1.0, 1.0));
    CHECK_THROWS(special::bessel_k(0.5, 0.0));
}

TEST_CASE("extension profile") {
    CHECK(special::ext_profile(A, 0.0) == 1.0);
    // alpha = 1/2 gives the harmonic profile e^{-s}.
    for (double s : {0.01, 1.0, 5.0, 12.0}) CHECK(rel(special::ext_profile(0.5, s), std::exp(-s)) < 1e-12);
    CHECK(rel(poisson_profile(A, 0.1), special::ext_profile(A, 0.1)) < 1e-6);
    CHECK(rel(poisson_profile(A, 1.3), special::ext_profile(A, 1.3)) < 1e-6);
    // Derivative against central differences, and the flux limit.
    for (double s : {0.05, 0.7, 3.0, 11.0}) {
        const double h = 1e-5 * s;
        const double fd = (special::ext_profile(A, s + h) - special::ext_profile(A, s - h)) / (2 * h);
        CHECK(rel(special::ext_profile_derivative(A, s), fd) < 1e-7);
    }
    const double s = 1e-8;
    CHECK(rel(std::pow(s, 1 - 2 * A) * special::ext_profile_derivative(A, s), special::ext_flux_limit(A)) < 1e-4);
}

TEST_CASE("smooth step") {
    CHECK(special::smooth_step(-1) == 1.0);
    CHECK(special::smooth_step(2) == 0.0);
    CHECK(special::smooth_step(0.5) == doctest::Approx(0.5));
    for (double s : {0.1, 0.4, 0.77}) {
        const double h = 1e-6;
        CHECK(special::smooth_step_derivative(s) ==
              doctest::Approx((special::smooth_step(s + h) - special::smooth_step(s - h)) / (2 * h)).epsilon(1e-6));
        CHECK(special::smooth_step_second_derivative(s) ==
              doctest::Approx((special::smooth_step_derivative(s + h) - special::smooth_step_derivative(s - h)) / (2 * h))
                  .epsilon(1e-5));
    }
}

TEST_CASE("level validation") {
    Grid g{16};
    Field f = Field::constant(g, 1.0);
    CHECK_THROWS(extend(f, A, {0.0, 0.1, 0.2}));
    CHECK_THROWS(extend(f, A, {0.1, 0.3, 0.2}));
    CHECK_THROWS(extend(f, A, {}));
    auto y = default_levels(g);
    CHECK(y.size() == 64);
    CHECK(y.front() == doctest::Approx(1e-4 * g.L));
    CHECK(y.back() == doctest::Approx(g.L));
}

TEST_CASE("extension of constants and sup bound") {
    Grid g{32};
    auto y = default_levels(g);
    ExtensionSlab s = extend(Field::constant(g, 2.5), A, y);
    for (std::size_t j = 0; j < s.size(); j += 9)
        for (double v : s.level(j).values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(weighted_energy(s) < 1e-20);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Field th = random_field(g, seed, 8);
        CHECK(extend(th, A, y).max_abs() <= sup_abs(th) * (1 + 1e-12));
    }
}

TEST_CASE("calibrated constant") {
    auto c = calibrate_constant(A);
    CHECK(c.relative_gap < 1e-6);
    CHECK(rel(c.c_measured, closed_form_constant(A)) < 1e-6);
    CHECK(calibrate_constant(0.5).c_measured == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS(calibrate_constant(1.0));
}

TEST_CASE("energy identity for single modes and refinement") {
    Grid g{32};
    const double c = calibrate_constant(A).c_measured;
    for (int m : {1, 2, 3}) {
        Field th = Field::from_function(g, [&](double x, double) { return std::cos(m * x); });
        // Full-torus spectral energy: L^2 * 2 * |1/2|^2 * |k|^{2a}.
        const double spectral = g.L * g.L * 0.5 * std::pow(m, 2 * A);
        const double e64 = c * weighted_energy(extend(th, A, default_levels(g, 64)));
        const double e127 = c * weighted_energy(extend(th, A, default_levels(g, 127)));
        INFO("m=" << m << " e64=" << e64 << " e127=" << e127 << " spectral=" << spectral);
        CHECK(rel(e64, spectral) < 1e-2);
        CHECK(rel(e127, spectral) < 2e-3);
        CHECK(rel(e127, spectral) < rel(e64, spectral));
    }
}

TEST_CASE("energy regions") {
    Grid g{32};
    Field th = random_field(g, 9, 6);
    ExtensionSlab s = extend(th, A, default_levels(g));
    const double full = weighted_energy(s);
    EnergyRegion small{false, {1.0, 2.0}, 0.5, 0.5};
    EnergyRegion mid{false, {1.0, 2.0}, 1.0, 0.5};
    EnergyRegion tall{false, {1.0, 2.0}, 1.0, 2.0};
    const double e1 = weighted_energy(s, small), e2 = weighted_energy(s, mid), e3 = weighted_energy(s, tall);
    CHECK(e1 > 0);
    CHECK(e1 <= e2);
    CHECK(e2 <= e3);
    CHECK(e3 <= full);
    EnergyRegion over{true, {0, 0}, 0, 2 * g.L};
    CHECK_THROWS_AS(weighted_energy(s, over), std::out_of_range);
    // Streaming columns equal slab columns.
    auto a = column_energy(s, 0.7);
    auto b = column_energy(th, A, default_levels(g), 0.7);
    double err = 0;
    for (std::size_t k = 0; k < a.size(); ++k) err = std::max(err, std::abs(a[k] - b[k]));
    CHECK(err < 1e-12);
}

TEST_CASE("minimality against perturbed competitors") {
    Grid g{32};
    Field th = random_field(g, 4, 5);
    auto y = default_levels(g);
    ExtensionSlab s = extend(th, A, y);
    const double e0 = weighted_energy(s);
    for (double eps : {0.2, 0.05}) {
        std::vector<Field> lv;
        for (std::size_t j = 0; j < y.size(); ++j) {
            auto v = s.level(j).values();
            const double yy = y[j];
            for (int i = 0; i < g.n; ++i)
                for (int k = 0; k < g.n; ++k)
                    v[i * g.n + k] += eps * yy * std::exp(-yy) * std::sin(i * g.dx() + 2 * k * g.dx());
            lv.push_back(Field::from_values(g, v));
        }
        ExtensionSlab comp(th, A, y, lv);
        CHECK(weighted_energy(comp) > e0);
    }
}

TEST_CASE("DtN trace") {
    auto cal = calibrate_constant(A);
    Grid g{32};
    auto z = dtn_trace(extend(Field::constant(g, 3.0), A, default_levels(g)), cal);
    CHECK(z.value.max_abs() < 1e-9);
    Field mode = Field::from_function(g, [](double x, double y) { return std::sin(x) * 0 + std::cos(y); });
    auto r = dtn_trace(extend(mode, A, default_levels(g)), cal);
    CHECK(!r.flagged);
    auto d = r.value.values();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] -= mode.values()[k];
    CHECK(Field::from_values(g, d).l2_norm() / mode.l2_norm() < 1e-4);

    Grid g64{64};
    Field th = random_field(g64, 77, 21);
    auto fl = fractional_laplacian(th, A).to_physical();
    auto rr = dtn_trace(extend(th, A, default_levels(g64)), cal);
    auto e = rr.value.values();
    for (std::size_t k = 0; k < e.size(); ++k) e[k] -= fl.values()[k];
    CHECK(Field::from_values(g64, e).l2_norm() / fl.l2_norm() < 1e-3);
}

TEST_CASE("slab persistence") {
    Grid g{16};
    ExtensionSlab s = extend(random_field(g, 3, 4), A, geometric_levels(0.01, 1.0, 5));
    auto dir = std::filesystem::temp_directory_path() / "sqglab_slab_test";
    std::filesystem::remove_all(dir);
    save_slab(s, dir.string());
    ExtensionSlab b = load_slab(dir.string());
    CHECK(b.y_levels() == s.y_levels());
    for (std::size_t j = 0; j < s.size(); ++j) CHECK(b.level(j).values() == s.level(j).values());
    std::filesystem::remove_all(dir);
}
