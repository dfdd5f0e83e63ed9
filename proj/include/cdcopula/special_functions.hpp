#pragma once

// Real-valued special functions used throughout the copula and margin code.
// All functions are pure and reentrant.

namespace cdcopula::special {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLn2 = 0.69314718055994530942;
inline constexpr double kEulerGamma = 0.57721566490153286061;
// Apery's constant zeta(3), OEIS A002117.
inline constexpr double kZeta3 = 1.20205690315959428540;

// ln Gamma(x) for x > 0.
double log_gamma(double x);

// ln B(a, b); symmetric in its arguments bit for bit.
double log_beta(double a, double b);

double digamma(double x);
double trigamma(double x);

// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double x, double a, double b);

// Harmonic number extended to real x > -1: H(x) = digamma(x + 1) + gamma.
double harmonic(double x);

// Numerically stable log(exp(a) + exp(b)).
double log_add_exp(double a, double b);

double logistic(double x);

}  // namespace cdcopula::special
