#include "sqglab/special.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sqg::special {
namespace {

constexpr double pi = std::numbers::pi;
constexpr double crossover = 10.0;

// sum_m (x/2)^{2m} / (m! Gamma(m + 1 + nu)) in extended precision: the two
// series below cancel by up to e^{2x} near the crossover.
long double reduced_i_series(double nu, double x) {
    const long double q = 0.25L * x * x;
    long double term = 1.0L / std::tgamma(1.0L + nu);
    long double sum = term;
    for (int m = 1; m < 500; ++m) {
        term *= q / (m * (m + static_cast<long double>(nu)));
        sum += term;
        if (term < 1e-21L * sum) break;
    }
    return sum;
}

// K_nu(x) e^{x} sqrt(2x/pi) by the Hankel asymptotic series, truncated at the
// smallest term.
double k_asymptotic_factor(double nu, double x) {
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 60; ++k) {
        const double next = term * (mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * x);
        if (std::abs(next) >= std::abs(term)) break;
        term = next;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

// x^nu K_nu(x) for 0 < nu < 1, finite at x = 0.
double xk(double nu, double x) {
    if (x >= crossover) return std::pow(x, nu) * std::sqrt(pi / (2.0 * x)) * std::exp(-x) * k_asymptotic_factor(nu, x);
    // x^nu I_{-nu} = 2^nu S(-nu), x^nu I_nu = 2^{-nu} x^{2nu} S(nu).
    const long double a = std::pow(2.0L, static_cast<long double>(nu)) * reduced_i_series(-nu, x);
    const long double b = std::pow(2.0L, static_cast<long double>(-nu)) *
                          std::pow(static_cast<long double>(x), 2.0L * nu) * reduced_i_series(nu, x);
    return static_cast<double>(0.5L * std::numbers::pi_v<long double> / std::sin(nu * std::numbers::pi_v<long double>) * (a - b));
}

void check_alpha(double a) {
    if (!(a > 0.0 && a < 1.0)) throw std::domain_error("extension profile requires 0 < alpha < 1");
}

}  // namespace

double bessel_k(double nu, double x) {
    if (!(nu > 0.0 && nu < 1.0)) throw std::domain_error("bessel_k: order must lie in (0,1)");
    if (!(x > 0.0)) throw std::domain_error("bessel_k: argument must be positive");
    if (x >= crossover) return std::sqrt(pi / (2.0 * x)) * std::exp(-x) * k_asymptotic_factor(nu, x);
    return xk(nu, x) * std::pow(x, -nu);
}

double ext_profile(double alpha, double s) {
    check_alpha(alpha);
    if (s < 0.0) throw std::domain_error("ext_profile: negative argument");
    if (s == 0.0) return 1.0;
    if (s > 745.0) return 0.0;
    return std::pow(2.0, 1.0 - alpha) / std::tgamma(alpha) * xk(alpha, s);
}

double ext_profile_derivative(double alpha, double s) {
    check_alpha(alpha);
    if (!(s > 0.0)) throw std::domain_error("ext_profile_derivative: argument must be positive");
    if (s > 745.0) return 0.0;
    const double nu = 1.0 - alpha;
    double sak;
    if (s >= crossover) {
        sak = std::pow(s, alpha) * bessel_k(nu, s);
    } else {
        // s^a I_{a-1} = 2^{1-a} s^{2a-1} S(a-1), s^a I_{1-a} = 2^{a-1} s S(1-a).
        using ld = long double;
        const ld a = std::pow(2.0L, ld(1.0 - alpha)) * std::pow(ld(s), ld(2.0 * alpha - 1.0)) * reduced_i_series(alpha - 1.0, s);
        const ld b = std::pow(2.0L, ld(alpha - 1.0)) * ld(s) * reduced_i_series(nu, s);
        sak = static_cast<double>(0.5L * std::numbers::pi_v<ld> / std::sin(nu * std::numbers::pi_v<ld>) * (a - b));
    }
    return -std::pow(2.0, 1.0 - alpha) / std::tgamma(alpha) * sak;
}

double ext_flux_limit(double alpha) {
    check_alpha(alpha);
    return -std::pow(2.0, 1.0 - 2.0 * alpha) * std::tgamma(1.0 - alpha) / std::tgamma(alpha);
}

namespace {
double bump_f(double x) { return x <= 1e-3 ? 0.0 : std::exp(-1.0 / x); }
double bump_f1(double x) { return x <= 1e-3 ? 0.0 : std::exp(-1.0 / x) / (x * x); }
double bump_f2(double x) { return x <= 1e-3 ? 0.0 : std::exp(-1.0 / x) * (1.0 / (x * x * x * x) - 2.0 / (x * x * x)); }
}  // namespace

double smooth_step(double s) {
    if (s <= 0.0) return 1.0;
    if (s >= 1.0) return 0.0;
    const double a = bump_f(1.0 - s), b = bump_f(s);
    return a / (a + b);
}

double smooth_step_derivative(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    const double a = bump_f(1.0 - s), b = bump_f(s);
    const double da = -bump_f1(1.0 - s), db = bump_f1(s);
    return (da * b - a * db) / ((a + b) * (a + b));
}

double smooth_step_second_derivative(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    const double a = bump_f(1.0 - s), b = bump_f(s);
    const double da = -bump_f1(1.0 - s), db = bump_f1(s);
    const double dda = bump_f2(1.0 - s), ddb = bump_f2(s);
    const double N = da * b - a * db, D = (a + b) * (a + b);
    const double dN = dda * b - a * ddb, dD = 2.0 * (a + b) * (da + db);
    return (dN * D - N * dD) / (D * D);
}

}  // namespace sqg::special
