#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace ofmtss {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

struct ComplexSignal {
    cvec samples;
    double sample_rate_hz = 1.0;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    cplx& operator[](std::size_t i) { return samples[i]; }
    const cplx& operator[](std::size_t i) const { return samples[i]; }
};

double energy(const cvec& x);
inline double energy(const ComplexSignal& x) { return energy(x.samples); }

// Unitary DFT (1/sqrt(N) both ways). Forward uses exp(-j2pi kn/N).
cvec dft(const cvec& x, bool inverse = false);
ComplexSignal dft(const ComplexSignal& x, bool inverse = false);

// Unnormalized in-place FFT, for hot loops that apply their own scaling.
void fft_unscaled(cvec& x, bool inverse);

// Stable seed splitting: splitmix64 finalizer folded over the inputs.
std::uint64_t seed_hash(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

double gaussian_q(double x);
double gaussian_q_inv(double p);

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

double chi2_tail(int dof, double x);
double chi2_tail_inv(int dof, double p);
double noncentral_chi2_tail(int dof, double noncentrality, double x);

}  // namespace ofmtss
