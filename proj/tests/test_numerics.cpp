#include "doctest.h"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <random>
#include <stdexcept>

#include "ofmtss/numerics.hpp"

using namespace ofmtss;

namespace {

cvec random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    cvec x(n);
    for (auto& v : x) v = {nd(rng), nd(rng)};
    return x;
}

}  // namespace

TEST_CASE("dft: impulse maps to a unitary constant") {
    const cvec X = dft(cvec{1.0, 0.0, 0.0, 0.0});
    for (const auto& v : X) {
        CHECK(v.real() == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(std::abs(v.imag()) < 1e-15);
    }
}

TEST_CASE("dft: forward uses exp(-j2pi kn/N)") {
    const std::size_t n = 16;
    cvec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::polar(1.0, 2.0 * M_PI * 3.0 * i / n);
    const cvec X = dft(x);
    CHECK(std::abs(X[3] - cplx(4.0, 0.0)) < 1e-12);
    for (std::size_t k = 0; k < n; ++k)
        if (k != 3) CHECK(std::abs(X[k]) < 1e-12);
}

TEST_CASE("dft: round trip and Parseval") {
    for (std::size_t n : {1u, 7u, 64u, 1000u, 1023u, 4096u}) {
        const cvec x = random_vector(n, n);
        const cvec X = dft(x);
        const cvec y = dft(X, true);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(x[i] - y[i]));
        CHECK(err < 1e-12);
        CHECK(energy(X) == doctest::Approx(energy(x)).epsilon(1e-12));
    }
    const cvec big = random_vector(std::size_t{1} << 20, 99);
    CHECK(energy(dft(big)) == doctest::Approx(energy(big)).epsilon(1e-12));
}

TEST_CASE("dft: empty input is an error") {
    CHECK_THROWS_AS(dft(cvec{}), std::invalid_argument);
    CHECK_THROWS_AS(dft(ComplexSignal{}), std::invalid_argument);
}

TEST_CASE("dft: ComplexSignal overload keeps the sample rate") {
    ComplexSignal s{random_vector(32, 3), 5e6};
    CHECK(dft(s).sample_rate_hz == 5e6);
}

TEST_CASE("fft_unscaled matches the unitary DFT up to sqrt(N)") {
    const cvec x = random_vector(48, 5);
    cvec y = x;
    fft_unscaled(y, false);
    const cvec X = dft(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] / std::sqrt(48.0) - X[i]) < 1e-12);
}

TEST_CASE("gaussian_q and its inverse") {
    CHECK(gaussian_q(0.0) == 0.5);
    CHECK(std::abs(gaussian_q(1.2815515655) - 0.10) < 1e-8);
    CHECK(std::abs(gaussian_q_inv(gaussian_q(2.0)) - 2.0) < 1e-9);
    CHECK(std::abs(gaussian_q_inv(0.5)) < 1e-12);
    CHECK(std::abs(gaussian_q_inv(1e-8) - 5.612001244174789) < 1e-9);
    CHECK(std::abs(gaussian_q_inv(0.975) - (-1.959963984540054)) < 1e-9);
    CHECK_THROWS_AS(gaussian_q_inv(0.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_q_inv(1.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_q_inv(-0.1), std::invalid_argument);
}

TEST_CASE("gaussian_q_inv round trips across the unit interval") {
    for (double e = -10.0; e <= -0.31; e += 0.25) {
        for (double p : {std::pow(10.0, e), 1.0 - std::pow(10.0, e)}) {
            const double x = gaussian_q_inv(p);
            CHECK(gaussian_q(x) == doctest::Approx(p).epsilon(1e-9));
        }
    }
}

TEST_CASE("chi2_tail: closed forms and oracle") {
    CHECK(std::abs(chi2_tail(2, 13.8155) - std::exp(-13.8155 / 2)) < 1e-15);
    CHECK(std::abs(chi2_tail(2, 13.8155) - 1e-3) < 1e-6);
    CHECK(std::abs(chi2_tail(8, 26.1245) - 1e-3) < 1e-5);
    CHECK(std::abs(chi2_tail(8, 26.1245) - 0.0009999927253796287) < 1e-12);
    CHECK(chi2_tail(5, 0.0) == 1.0);
    CHECK_THROWS_AS(chi2_tail(0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(chi2_tail(2, -1.0), std::invalid_argument);
}

TEST_CASE("chi2_tail agrees with the incomplete gamma oracle") {
    for (int dof : {1, 2, 3, 8, 20, 80, 208, 1000})
        for (double x : {0.01, 0.5, 1.0, 5.0, 26.0, 80.0, 172.3, 400.0, 1500.0}) {
            const double ref = boost::math::gamma_q(0.5 * dof, 0.5 * x);
            if (ref < 1e-300) continue;
            CHECK(chi2_tail(dof, x) == doctest::Approx(ref).epsilon(1e-10));
        }
}

TEST_CASE("chi2_tail_inv") {
    CHECK(std::abs(chi2_tail_inv(2, 1e-3) + 2.0 * std::log(1e-3)) < 1e-9);
    CHECK(std::abs(chi2_tail_inv(8, 1e-3) - 26.124481558376143) < 1e-8);
    CHECK(std::abs(chi2_tail_inv(80, 1e-8) - 172.34660727016785) < 1e-7);
    CHECK_THROWS_AS(chi2_tail_inv(8, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(chi2_tail_inv(8, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(chi2_tail_inv(0, 0.5), std::invalid_argument);
    for (int dof : {1, 2, 8, 80, 208})
        for (double e = -10.0; e <= -0.1; e += 0.7) {
            for (double p : {std::pow(10.0, e), 1.0 - std::pow(10.0, e)}) {
                const double x = chi2_tail_inv(dof, p);
                CHECK(chi2_tail(dof, x) == doctest::Approx(p).epsilon(1e-8));
            }
        }
}

TEST_CASE("noncentral_chi2_tail") {
    for (int dof : {2, 8, 80})
        for (double x : {0.0, 3.0, 26.1245, 150.0}) CHECK(std::abs(noncentral_chi2_tail(dof, 0.0, x) - chi2_tail(dof, x)) < 1e-10);
    CHECK(std::abs(noncentral_chi2_tail(8, 40.96, 26.1245) - 0.9714752090224965) < 1e-10);
    CHECK_THROWS_AS(noncentral_chi2_tail(8, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(noncentral_chi2_tail(0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("noncentral_chi2_tail agrees with the Boost oracle") {
    for (int dof : {2, 8, 80, 208})
        for (double lam : {0.5, 10.0, 40.96, 300.0, 3000.0})
            for (double q : {0.2, 0.5, 0.9}) {
                const boost::math::non_central_chi_squared d(dof, lam);
                const double x = boost::math::quantile(d, q);
                const double ref = boost::math::cdf(boost::math::complement(d, x));
                CHECK(noncentral_chi2_tail(dof, lam, x) == doctest::Approx(ref).epsilon(1e-8));
            }
}

TEST_CASE("noncentral_chi2_tail matches sampling") {
    // Sum over 4 complex entries with total |mu|^2 = lambda/2 in each real dim pair.
    const int dof = 8;
    const double lambda = 12.0, x = 20.0;
    const double mu = std::sqrt(lambda / dof);
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> nd;
    const long n = 1000000;
    long hits = 0;
    for (long i = 0; i < n; ++i) {
        double s = 0.0;
        for (int d = 0; d < dof; ++d) {
            const double v = mu + nd(rng);
            s += v * v;
        }
        hits += s > x;
    }
    const double p = noncentral_chi2_tail(dof, lambda, x);
    const double sigma = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(static_cast<double>(hits) / n - p) < 3.0 * sigma);
}

TEST_CASE("tail functions: range and monotonicity") {
    for (int dof : {2, 8, 40}) {
        double prev = 1.0;
        for (double x = 0.0; x < 200.0; x += 0.5) {
            const double t = chi2_tail(dof, x);
            CHECK(t >= 0.0);
            CHECK(t <= 1.0);
            CHECK(t <= prev);
            prev = t;
        }
        for (double x : {5.0, 30.0, 90.0}) {
            double pl = 0.0;
            for (double lam = 0.0; lam < 200.0; lam += 2.5) {
                const double t = noncentral_chi2_tail(dof, lam, x);
                CHECK(t >= pl - 1e-15);
                CHECK(t <= 1.0);
                pl = t;
            }
        }
        double pq = 1.0;
        for (double lam : {0.0, 20.0}) {
            pq = 1.0;
            for (double x = 0.0; x < 150.0; x += 1.0) {
                const double t = noncentral_chi2_tail(dof, lam, x);
                CHECK(t <= pq + 1e-15);
                pq = t;
            }
        }
    }
}

TEST_CASE("gamma_q edge cases") {
    CHECK(gamma_q(3.0, 0.0) == 1.0);
    CHECK(gamma_q(1.0, 2.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(gamma_q(0.0, 1.0), std::invalid_argument);
}

TEST_CASE("seed_hash is deterministic and spreads inputs") {
    CHECK(seed_hash(1, 2, 3) == seed_hash(1, 2, 3));
    CHECK(seed_hash(1, 2, 3) != seed_hash(1, 2, 4));
    CHECK(seed_hash(1, 2, 3) != seed_hash(1, 3, 2));
    CHECK(seed_hash(0) != seed_hash(1));
}
