#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ofmtss/numerics.hpp"

namespace ofmtss {

struct ChannelTap {
    double delay_s = 0.0;
    cplx gain{1.0, 0.0};
};

struct ChannelRealization {
    std::vector<ChannelTap> taps;
    double total_energy() const;
};

struct EffectiveTaps {
    cvec theta;
    double sample_interval = 0.0;
    double energy() const { return ofmtss::energy(theta); }
};

enum class Environment { office, industrial, outdoor, custom };

struct DelaySpreadProfile {
    Environment environment = Environment::custom;
    bool los = false;
    double target_95pct_duration_ns = 0.0;
    double decay_constant_ns = 0.0;  // 0 means a single tap
    double tap_spacing_ns = 1.0;
};

struct InterferenceConfig {
    int count = 0;
    double bandwidth_hz = 20e6;
    std::pair<double, double> psd_above_noise_db_range{5.0, 40.0};
    std::pair<double, double> band_edges_hz{0.0, 0.0};
};

struct SnrSpec {
    double eta_db = 0.0;
    double noise_psd = 1.0;  // N0, variance of the matched-filtered noise
};

std::string to_string(Environment e);
Environment environment_from_string(const std::string& s);

// Reference delay-spread profile with its decay constant solved for the given tap spacing.
DelaySpreadProfile table2_profile(Environment env, bool los, double tap_spacing_ns);
// Solves decay_constant_ns so the ensemble-mean 95% duration hits the target.
DelaySpreadProfile calibrate_profile(DelaySpreadProfile profile, int realizations = 400);

// Delay of the last tap in the shortest prefix holding 95% of the energy,
// plus one tap spacing (a single tap has duration = spacing).
double energy_duration_95(const ChannelRealization& ch, double tap_spacing_s);
double mean_energy_duration_95(const DelaySpreadProfile& profile, int realizations, std::uint64_t seed);

ChannelRealization generate_multipath(const DelaySpreadProfile& profile, std::uint64_t seed);
ChannelRealization flat_channel();

// theta[l] = sum_i c_i rho(l T_s - tau_i), rho linearly interpolated.
// rho is indexed with lag 0 at rho.size()/2, at spacing T_s.
EffectiveTaps effective_taps(const ChannelRealization& channel, const cvec& rho, int p, double T_s);

ComplexSignal apply_channel(const ComplexSignal& signal, const ChannelRealization& channel);

// N0 = theta^H theta / (L * 10^(eta/10)).
double noise_psd_for_snr(const EffectiveTaps& theta, int L, double eta_db);
// Per-sample variance of white input noise that yields N0 after g*(-t),
// given energy(g) = L.
inline double input_noise_variance(double N0, int L) { return N0 / L; }

ComplexSignal add_awgn(const ComplexSignal& signal, const SnrSpec& snr, const EffectiveTaps& theta, int L,
                       std::uint64_t seed);
// Adds white noise of the given per-sample variance.
ComplexSignal add_white_noise(const ComplexSignal& signal, double variance, std::uint64_t seed);

// noise_psd here is the per-sample input noise variance (the white floor's
// PSD on a unit-width normalized band). Interferer PSDs are set relative to it.
ComplexSignal add_interference(const ComplexSignal& signal, const InterferenceConfig& cfg, double noise_psd,
                               std::uint64_t seed);

struct InterfererDraw {
    double center_hz;
    double psd;  // absolute, same units as noise_psd
};
std::vector<InterfererDraw> draw_interferers(const InterferenceConfig& cfg, double noise_psd, std::uint64_t seed);

ComplexSignal apply_cfo(const ComplexSignal& signal, double delta_f_hz);

struct AssembledStream {
    ComplexSignal stream;
    long true_start_index = 0;
};

// noise_psd is the per-sample input noise variance.
AssembledStream assemble_stream(const ComplexSignal& preamble_rx, long lead_samples, long trail_samples,
                                double noise_psd, std::uint64_t seed);

void save_channel(const ChannelRealization& ch, const std::string& path);
ChannelRealization load_channel(const std::string& path);

}  // namespace ofmtss
