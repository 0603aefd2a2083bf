#include "ofmtss/numerics.hpp"

#include <fftw3.h>

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace ofmtss {

double energy(const cvec& x) {
    double e = 0.0;
    for (const auto& v : x) e += std::norm(v);
    return e;
}

namespace {

std::mutex g_plan_mutex;
std::map<std::pair<std::size_t, bool>, fftw_plan> g_plans;

fftw_plan plan_for(std::size_t n, bool inverse) {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto key = std::make_pair(n, inverse);
    auto it = g_plans.find(key);
    if (it != g_plans.end()) return it->second;
    // Planner scribbles on the buffer, so plan on scratch memory.
    auto* buf = fftw_alloc_complex(n);
    fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), buf, buf,
                                   inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    if (!p) throw std::runtime_error("fftw: plan creation failed");
    g_plans.emplace(key, p);
    return p;
}

}  // namespace

void fft_unscaled(cvec& x, bool inverse) {
    if (x.empty()) throw std::invalid_argument("fft: empty input");
    auto* d = reinterpret_cast<fftw_complex*>(x.data());
    fftw_execute_dft(plan_for(x.size(), inverse), d, d);
}

cvec dft(const cvec& x, bool inverse) {
    if (x.empty()) throw std::invalid_argument("dft: zero-length input");
    cvec out = x;
    fft_unscaled(out, inverse);
    const double s = 1.0 / std::sqrt(static_cast<double>(x.size()));
    for (auto& v : out) v *= s;
    return out;
}

ComplexSignal dft(const ComplexSignal& x, bool inverse) {
    return ComplexSignal{dft(x.samples, inverse), x.sample_rate_hz};
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t seed_hash(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = splitmix64(a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ c);
}

double gaussian_q(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double gaussian_q_inv(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("gaussian_q_inv: p must be in (0,1)");
    if (p == 0.5) return 0.0;
    if (p > 0.5) return -gaussian_q_inv(1.0 - p);

    // Abramowitz-Stegun 26.2.23 start, then safeguarded Newton on log Q.
    const double t = std::sqrt(-2.0 * std::log(p));
    double x = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                       (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    double lo = 0.0, hi = 40.0;
    const double lp = std::log(p);
    for (int it = 0; it < 200; ++it) {
        const double q = gaussian_q(x);
        const double f = std::log(q) - lp;
        if (f > 0) lo = x; else hi = x;
        const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        double step = f / (-phi / q);
        double xn = x - step;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) < 1e-15 * std::max(1.0, std::abs(x))) return xn;
        x = xn;
    }
    return x;
}

namespace {

// Regularized P(a,x) and Q(a,x); the smaller one is computed directly.
struct GammaPQ {
    double p, q;
};

GammaPQ gamma_pq(double a, double x) {
    if (x == 0.0) return {0.0, 1.0};
    const double log_pref = -x + a * std::log(x) - std::lgamma(a);
    constexpr double eps = 1e-17;

    if (x < a + 1.0) {
        double term = 1.0 / a, sum = term;
        for (int n = 1; n < 1000000; ++n) {
            term *= x / (a + n);
            sum += term;
            if (term < sum * eps) break;
        }
        const double p = std::min(1.0, sum * std::exp(log_pref));
        return {p, std::max(0.0, 1.0 - p)};
    }

    // Modified Lentz continued fraction for Q(a,x).
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 1000000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    const double q = std::min(1.0, std::exp(log_pref) * h);
    return {std::max(0.0, 1.0 - q), q};
}

}  // namespace

double gamma_q(double a, double x) {
    if (!(a > 0.0)) throw std::invalid_argument("gamma_q: a must be positive");
    if (x < 0.0) throw std::invalid_argument("gamma_q: x must be non-negative");
    return gamma_pq(a, x).q;
}

double chi2_tail(int dof, double x) {
    if (dof < 1) throw std::invalid_argument("chi2_tail: dof must be >= 1");
    if (x < 0.0) throw std::invalid_argument("chi2_tail: x must be non-negative");
    return gamma_q(0.5 * dof, 0.5 * x);
}

namespace {

double log_chi2_pdf(int dof, double x) {
    const double k = 0.5 * dof;
    return (k - 1.0) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k);
}

}  // namespace

double chi2_tail_inv(int dof, double p) {
    if (dof < 1) throw std::invalid_argument("chi2_tail_inv: dof must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_tail_inv: p must be in (0,1)");

    // Wilson-Hilferty start.
    const double z = gaussian_q_inv(p);
    const double v = 2.0 / (9.0 * dof);
    double x = dof * std::pow(std::max(1e-3, 1.0 - v + z * std::sqrt(v)), 3);

    double lo = 0.0, hi = std::max(2.0 * x, 1.0);
    while (chi2_tail(dof, hi) > p) hi *= 2.0;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);

    const double lp = std::log(p);
    for (int it = 0; it < 400; ++it) {
        const double q = chi2_tail(dof, x);
        const double f = std::log(q) - lp;
        if (f > 0) lo = x; else hi = x;
        double xn;
        if (q > 0.0 && x > 0.0) {
            const double deriv = -std::exp(log_chi2_pdf(dof, x)) / q;
            xn = x - f / deriv;
        } else {
            xn = 0.5 * (lo + hi);
        }
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) <= 1e-15 * x) return xn;
        x = xn;
    }
    return x;
}

double noncentral_chi2_tail(int dof, double noncentrality, double x) {
    if (dof < 1) throw std::invalid_argument("noncentral_chi2_tail: dof must be >= 1");
    if (noncentrality < 0.0) throw std::invalid_argument("noncentral_chi2_tail: negative noncentrality");
    if (x < 0.0) throw std::invalid_argument("noncentral_chi2_tail: x must be non-negative");
    if (noncentrality == 0.0) return chi2_tail(dof, x);
    if (x == 0.0) return 1.0;

    // Poisson(mu) mixture of central chi-squared laws with dof + 2k, summed
    // outward from the mode. Tail terms fall with k, cdf terms rise as k falls,
    // so each direction is bounded by the Poisson tail times the current term.
    const double mu = 0.5 * noncentrality;
    const long k0 = static_cast<long>(std::floor(mu));
    auto weight = [&](long k) { return std::exp(-mu + k * std::log(mu) - std::lgamma(k + 1.0)); };
    constexpr double tol = 1e-15;

    auto mixture = [&](bool upper) {
        auto part = [&](long k) {
            const GammaPQ g = gamma_pq(0.5 * dof + static_cast<double>(k), 0.5 * x);
            return upper ? g.q : g.p;
        };
        double sum = 0.0;
        for (long k = k0; k - k0 <= 200000; ++k) {
            const double w = weight(k);
            const double f = part(k);
            sum += w * f;
            const double ratio = mu / (k + 1.0);
            const double rest = (ratio < 1.0 ? w * ratio / (1.0 - ratio) : w) * (upper ? f : 1.0);
            if (k > k0 && rest <= tol * sum) break;
        }
        for (long k = k0 - 1; k >= 0; --k) {
            const double w = weight(k);
            const double f = part(k);
            sum += w * f;
            const double ratio = k / mu;
            const double rest = w * ratio / (1.0 - ratio) * (upper ? 1.0 : f);
            if (rest <= tol * sum) break;
        }
        return std::min(1.0, std::max(0.0, sum));
    };

    const double tail = mixture(true);
    if (tail <= 0.5) return tail;
    return std::max(0.0, 1.0 - mixture(false));
}

}  // namespace ofmtss
