#pragma once

namespace sqg::special {

/// Modified Bessel function K_nu(x) for non-integer 0 < nu < 1 and x > 0:
/// power series below x = 10, large-argument asymptotic series above.
double bessel_k(double nu, double x);

/// Extension profile phi(s) = 2^{1-a}/Gamma(a) s^a K_a(s), phi(0) = 1. It is the
/// decaying solution of phi'' + ((1-2a)/s) phi' = phi.
double ext_profile(double alpha, double s);
/// phi'(s) = -2^{1-a}/Gamma(a) s^a K_{1-a}(s).
double ext_profile_derivative(double alpha, double s);
/// lim_{s->0} s^{1-2a} phi'(s) = -2^{1-2a} Gamma(1-a)/Gamma(a).
double ext_flux_limit(double alpha);

/// C-infinity step: 1 for s <= 0, 0 for s >= 1.
double smooth_step(double s);
double smooth_step_derivative(double s);
double smooth_step_second_derivative(double s);

}  // namespace sqg::special
