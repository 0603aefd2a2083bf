#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "ofmtss/numerics.hpp"

namespace ofmtss {

struct PrototypeFilter {
    std::vector<double> taps;  // length L*span + 1, centered
    int samples_per_symbol = 0;
    int span_symbols = 0;
    double rolloff = 0.0;
    // Largest constraint violation left by the refinement step (0 if exact).
    double design_residual = 0.0;

    int half_length() const { return samples_per_symbol * span_symbols / 2; }
};

struct SpreadingCode {
    cvec gains;              // gamma_k = j^k zeta_k
    std::vector<int> signs;  // zeta_k
};

struct WaveformConfig {
    int L = 0;
    int N = 0;
    double symbol_duration = 0.0;  // T_b, seconds
    PrototypeFilter prototype;
    SpreadingCode code;
    cvec preamble_symbols;

    double sample_rate() const { return L / symbol_duration; }
    double sample_interval() const { return symbol_duration / L; }
    double subcarrier_frequency(int k) const {
        return (k - 0.5 * (L + 1)) / symbol_duration;
    }
    // Samples between the first sample of a pulse and its peak.
    int pulse_delay() const { return prototype.half_length(); }
};

struct LinearModelSpec {
    cvec preamble_symbols;
    int L = 0;
    int p = 0;
};

struct WaveformOptions {
    int span_symbols = 8;
    double rolloff = 0.25;
    std::uint64_t code_seed = 1;
    std::uint64_t symbol_seed = 2;
};

// Square-root raised cosine, refined so that h*h vanishes at every nonzero
// multiple of L and the composite pulse energy is exactly L.
PrototypeFilter design_prototype_filter(int L, int span_symbols, double rolloff);

// Plain truncated RRC without refinement, unit energy.
std::vector<double> rrc_taps(int L, int span_symbols, double rolloff);

SpreadingCode make_spreading_code(int L, std::uint64_t sign_seed);
SpreadingCode spreading_code_from_signs(const std::vector<int>& signs);

cvec make_preamble_symbols(int N, std::uint64_t seed);

WaveformConfig make_waveform(int L, int N, double symbol_duration, const WaveformOptions& opt = {});

// g[n], n = 0 .. L*span, peak at n = half_length.
ComplexSignal synthesize_pulse(const WaveformConfig& config);
// Same construction with arbitrary per-band gains (no j^k requirement).
cvec synthesize_pulse(const PrototypeFilter& h, const cvec& gains);

// rho[l] = sum_n g[n+l] g*[n]; returned with l = 0 at index size()/2.
ComplexSignal composite_pulse(const WaveformConfig& config);
cvec autocorrelation(const cvec& g);

// Sample 0 is the first sample of the first pulse.
ComplexSignal generate_preamble(const WaveformConfig& config);

Eigen::MatrixXcd build_data_matrix(const LinearModelSpec& spec);

}  // namespace ofmtss
