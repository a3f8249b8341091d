#pragma once

#include <bgnmf/inference.hpp>

namespace bgnmf::oracle {

/// log K_nu(x) from int_0^inf exp(-x cosh t) cosh(nu t) dt in 50-digit arithmetic.
double log_bessel_k_quad(double nu, double x);

struct QuadMoments {
    double log_z = 0.0;
    double e_x = 0.0;
    double e_inv_x = 0.0;
    double e_log_x = 0.0;
    double entropy = 0.0; ///< -int q log q
};

/// Moments of the density proportional to x^(gamma-1) exp(-rho x - tau/x),
/// by adaptive quadrature in u = log x around the mode.
QuadMoments gig_quadrature(double gamma, double rho, double tau);

/// E_q[log Gamma(x; shape, rate)] by quadrature under the same q.
double gamma_cross_entropy_quad(double shape, double rate, double gamma, double rho, double tau);

/**
 * Hand transcription of every update and of the bound for a single cell
 * (L = M = N = K = J = 1). GIG moments come from Boost's cyl_bessel_k, with
 * the order derivative by a five-point stencil.
 */
struct Scalar {
    struct Moments {
        double e_x, e_inv_x, e_log_x, log_z;
    };
    static Moments moments(double gamma, double rho, double tau);

    double x = 1.0;
    double a = 0.1, b = 0.1, c = 0.1;
    GigParams common, individual, activation;

    double pi1 = 0.0, pi2 = 0.0, psi = 1.0, w = 0.0;

    void update_aux();
    GigParams q_common() const;
    GigParams q_individual() const;
    GigParams q_activation() const;
    double elbo() const;
};

} // namespace bgnmf::oracle
