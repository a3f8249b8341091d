#include "bgnmf/special_functions.hpp"

#include "bgnmf/errors.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

namespace bgnmf {
namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 100000;
// Orders at or above this use the uniform asymptotic expansion instead of
// forward recurrence from |mu| <= 1/2.
constexpr double kDebyeOrder = 1000.0;
// Below this argument the Temme series is used, above it Steed's CF2.
constexpr double kSeriesCrossover = 2.0;
constexpr double kOrderStep = 1e-5;

[[noreturn]] void domain_fail(const std::string& what, double nu, double x) {
    std::ostringstream os;
    os.precision(17);
    os << what << " (nu=" << nu << ", x=" << x << ")";
    throw DomainError(os.str());
}

// log K_mu(x) and x K_{mu+1}(x) / K_mu(x) for |mu| <= 1/2. The ratio is
// carried scaled by x so it stays finite for tiny arguments.
struct BaseOrder {
    double log_k;
    double scaled_ratio;
};

// Temme's series, x <= 2.
BaseOrder temme_series(double mu, double x) {
    using boost::math::tgamma1pm1;
    constexpr double pi = std::numbers::pi;
    constexpr double euler = std::numbers::egamma;

    const double half_x = 0.5 * x;
    const double pimu = pi * mu;
    const double fact = std::abs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    const double d = -std::log(half_x);
    double e = mu * d;
    const double fact2 = std::abs(e) < kEps ? 1.0 : std::sinh(e) / e;

    // 1/Gamma(1+mu), 1/Gamma(1-mu) and the two Temme combinations.
    const double gp = 1.0 + tgamma1pm1(mu);
    const double gm = 1.0 + tgamma1pm1(-mu);
    const double gampl = 1.0 / gp;
    const double gammi = 1.0 / gm;
    const double gam1 = std::abs(mu) < 1e-12
                            ? -euler
                            : (tgamma1pm1(mu) - tgamma1pm1(-mu)) / (gp * gm) /
                                  (2.0 * mu);
    const double gam2 = 0.5 * (gammi + gampl);

    double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / gampl;
    double q = 0.5 / (e * gammi);
    double c = 1.0;
    const double dd = half_x * half_x;
    double sum1 = p;
    const double mu2 = mu * mu;
    int i = 1;
    for (; i <= kMaxIter; ++i) {
        ff = (i * ff + p + q) / (i * static_cast<double>(i) - mu2);
        c *= dd / i;
        p /= (i - mu);
        q /= (i + mu);
        const double del = c * ff;
        sum += del;
        sum1 += c * (p - i * ff);
        if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    if (i > kMaxIter) domain_fail("log_bessel_k: series did not converge", mu, x);
    return {std::log(sum), 2.0 * sum1 / sum};
}

// Steed's continued fraction CF2, x > 2. Works with e^x K_mu(x) internally.
BaseOrder steed_cf2(double mu, double x) {
    const double mu2 = mu * mu;
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    int i = 2;
    for (; i <= kMaxIter; ++i) {
        a -= 2 * (i - 1);
        c = -a * c / i;
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < kEps) break;
    }
    if (i > kMaxIter) domain_fail("log_bessel_k: CF2 did not converge", mu, x);
    h *= a1;
    const double log_k = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x - std::log(s);
    return {log_k, mu + x + 0.5 - h};
}

// Uniform asymptotic expansion in the order (nu large).
double debye_log_k(double nu, double x) {
    const double z = x / nu;
    const double root = std::sqrt(1.0 + z * z);
    const double p = 1.0 / root;
    const double eta = root + std::log(z / (1.0 + root));
    const double p2 = p * p;
    const double u1 = p * (3.0 - 5.0 * p2) / 24.0;
    const double u2 = p2 * (81.0 + p2 * (-462.0 + p2 * 385.0)) / 1152.0;
    const double u3 =
        p * p2 * (30375.0 + p2 * (-369603.0 + p2 * (765765.0 - p2 * 425425.0))) /
        414720.0;
    const double u4 =
        p2 * p2 *
        (4465125.0 +
         p2 * (-94121676.0 + p2 * (349922430.0 + p2 * (-446185740.0 + p2 * 185910725.0)))) /
        39813120.0;
    const double inv = 1.0 / nu;
    const double series = 1.0 - inv * (u1 - inv * (u2 - inv * (u3 - inv * u4)));
    return 0.5 * std::log(std::numbers::pi / (2.0 * nu)) - nu * eta -
           0.5 * std::log(root) + std::log(series);
}

} // namespace

double log_bessel_k(double nu, double x) {
    if (!std::isfinite(nu) || !std::isfinite(x)) {
        domain_fail("log_bessel_k: non-finite argument", nu, x);
    }
    if (x <= 0.0) domain_fail("log_bessel_k: x must be positive", nu, x);

    nu = std::abs(nu);
    if (nu >= kDebyeOrder) return debye_log_k(nu, x);

    const int n = static_cast<int>(nu + 0.5);
    const double mu = nu - n;
    const BaseOrder base = x <= kSeriesCrossover ? temme_series(mu, x) : steed_cf2(mu, x);

    // K_{k+1} = K_{k-1} + (2k/x) K_k is stable upward; carry only the scaled
    // ratios s_k = x K_{k+1} / K_k.
    const double log_x = std::log(x);
    const double x2 = x * x;
    double log_k = base.log_k;
    double ratio = base.scaled_ratio;
    for (int i = 1; i <= n; ++i) {
        log_k += std::log(ratio) - log_x;
        ratio = x2 / ratio + 2.0 * (mu + i);
    }
    return log_k;
}

double log_bessel_k_order_derivative(double nu, double x) {
    return (log_bessel_k(nu + kOrderStep, x) - log_bessel_k(nu - kOrderStep, x)) /
           (2.0 * kOrderStep);
}

double digamma(double x) { return boost::math::digamma(x); }

namespace {

enum class GigKind { kGeneral, kGamma, kInverseGamma };

// Bessel argument 2 sqrt(rho tau), formed without overflow.
double bessel_argument(const GigParams& p) { return 2.0 * std::sqrt(p.rho) * std::sqrt(p.tau); }

// A zero rate, or a Bessel argument that underflows, is the one-sided limit.
GigKind classify(const GigParams& p) {
    if (p.tau == 0.0) return GigKind::kGamma;
    if (p.rho == 0.0) return GigKind::kInverseGamma;
    if (bessel_argument(p) == 0.0) return p.gamma > 0.0 ? GigKind::kGamma : GigKind::kInverseGamma;
    return GigKind::kGeneral;
}

[[noreturn]] void gig_fail(const std::string& what, const GigParams& p) {
    std::ostringstream os;
    os.precision(17);
    os << what << " (gamma=" << p.gamma << ", rho=" << p.rho << ", tau=" << p.tau << ")";
    throw DomainError(os.str());
}

[[noreturn]] void moment_fail(const std::string& what, const GigParams& p) {
    std::ostringstream os;
    os.precision(17);
    os << "moment undefined: " << what << " (gamma=" << p.gamma << ", rho=" << p.rho
       << ", tau=" << p.tau << ")";
    throw MomentUndefined(os.str());
}

} // namespace

void validate(const GigParams& p) {
    if (!std::isfinite(p.gamma) || !std::isfinite(p.rho) || !std::isfinite(p.tau)) {
        gig_fail("GIG parameters must be finite", p);
    }
    if (p.rho < 0.0 || p.tau < 0.0) gig_fail("GIG rates must be nonnegative", p);
    if (p.rho == 0.0 && p.tau == 0.0) gig_fail("GIG needs rho > 0 or tau > 0", p);
    switch (classify(p)) {
    case GigKind::kGamma:
        if (p.gamma <= 0.0) gig_fail("Gamma limit needs gamma > 0", p);
        break;
    case GigKind::kInverseGamma:
        if (p.gamma >= 0.0) gig_fail("inverse-Gamma limit needs gamma < 0", p);
        break;
    case GigKind::kGeneral:
        break;
    }
}

double gig_log_normalizer(const GigParams& p) {
    validate(p);
    switch (classify(p)) {
    case GigKind::kGamma:
        return std::lgamma(p.gamma) - p.gamma * std::log(p.rho);
    case GigKind::kInverseGamma:
        return std::lgamma(-p.gamma) + p.gamma * std::log(p.tau);
    case GigKind::kGeneral:
        break;
    }
    const double z = bessel_argument(p);
    return std::numbers::ln2 + 0.5 * p.gamma * (std::log(p.tau) - std::log(p.rho)) +
           log_bessel_k(p.gamma, z);
}

GigMoments gig_moments(const GigParams& p, DivergentMoment policy) {
    validate(p);
    constexpr double inf = std::numeric_limits<double>::infinity();
    GigMoments m;
    switch (classify(p)) {
    case GigKind::kGamma:
        m.e_x = p.gamma / p.rho;
        if (p.gamma > 1.0) {
            m.e_inv_x = p.rho / (p.gamma - 1.0);
        } else if (policy == DivergentMoment::kThrow) {
            moment_fail("E[1/x] needs gamma > 1 when tau = 0", p);
        } else {
            m.e_inv_x = inf;
        }
        m.e_log_x = digamma(p.gamma) - std::log(p.rho);
        return m;
    case GigKind::kInverseGamma: {
        const double shape = -p.gamma;
        m.e_inv_x = shape / p.tau;
        if (shape > 1.0) {
            m.e_x = p.tau / (shape - 1.0);
        } else if (policy == DivergentMoment::kThrow) {
            moment_fail("E[x] needs gamma < -1 when rho = 0", p);
        } else {
            m.e_x = inf;
        }
        m.e_log_x = std::log(p.tau) - digamma(shape);
        return m;
    }
    case GigKind::kGeneral:
        break;
    }
    const double z = bessel_argument(p);
    const double half_log_ratio = 0.5 * (std::log(p.tau) - std::log(p.rho));
    const double lk = log_bessel_k(p.gamma, z);
    m.e_x = std::exp(half_log_ratio + log_bessel_k(p.gamma + 1.0, z) - lk);
    m.e_inv_x = std::exp(-half_log_ratio + log_bessel_k(p.gamma - 1.0, z) - lk);
    m.e_log_x = half_log_ratio + log_bessel_k_order_derivative(p.gamma, z);
    return m;
}

double gig_entropy(const GigParams& p, const GigMoments& m) {
    const double log_z = gig_log_normalizer(p);
    double h = log_z - (p.gamma - 1.0) * m.e_log_x;
    // In a one-sided limit the vanishing rate contributes nothing, even when
    // the paired moment diverges.
    const GigKind kind = classify(p);
    if (kind != GigKind::kInverseGamma) h += p.rho * m.e_x;
    if (kind != GigKind::kGamma) h += p.tau * m.e_inv_x;
    return h;
}

double gamma_cross_entropy(double shape, double rate, const GigMoments& m) {
    if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
        std::ostringstream os;
        os << "gamma_cross_entropy: shape and rate must be positive (shape=" << shape
           << ", rate=" << rate << ")";
        throw DomainError(os.str());
    }
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * m.e_log_x -
           rate * m.e_x;
}

} // namespace bgnmf
