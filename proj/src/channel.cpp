#include "ofmtss/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace ofmtss {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Table2Entry {
    Environment env;
    double los_ns;
    double nlos_ns;
};

constexpr Table2Entry kTable2[] = {
    {Environment::office, 35.0, 47.0},
    {Environment::industrial, 17.0, 289.0},
    {Environment::outdoor, 92.0, 268.0},
};

void add_cn(cvec& x, double variance, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * variance));
    for (auto& v : x) {
        const double re = nd(rng);
        const double im = nd(rng);
        v += cplx(re, im);
    }
}

}  // namespace

double ChannelRealization::total_energy() const {
    double e = 0.0;
    for (const auto& t : taps) e += std::norm(t.gain);
    return e;
}

std::string to_string(Environment e) {
    switch (e) {
        case Environment::office: return "office";
        case Environment::industrial: return "industrial";
        case Environment::outdoor: return "outdoor";
        case Environment::custom: return "custom";
    }
    return "custom";
}

Environment environment_from_string(const std::string& s) {
    if (s == "office") return Environment::office;
    if (s == "industrial") return Environment::industrial;
    if (s == "outdoor") return Environment::outdoor;
    if (s == "custom") return Environment::custom;
    throw std::invalid_argument("unknown environment: " + s);
}

ChannelRealization flat_channel() { return ChannelRealization{{ChannelTap{0.0, {1.0, 0.0}}}}; }

ChannelRealization generate_multipath(const DelaySpreadProfile& profile, std::uint64_t seed) {
    if (!(profile.tap_spacing_ns > 0.0)) throw std::invalid_argument("generate_multipath: tap spacing must be positive");
    if (profile.decay_constant_ns < 0.0) throw std::invalid_argument("generate_multipath: negative decay constant");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));

    std::size_t count = 1;
    if (profile.decay_constant_ns > 0.0) {
        // Out to exp(-12) of the first tap's mean power.
        count = static_cast<std::size_t>(std::ceil(12.0 * profile.decay_constant_ns / profile.tap_spacing_ns)) + 1;
        count = std::min<std::size_t>(count, 100000);
    }
    ChannelRealization ch;
    ch.taps.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double tau_ns = static_cast<double>(i) * profile.tap_spacing_ns;
        const double amp =
            profile.decay_constant_ns > 0.0 ? std::exp(-0.5 * tau_ns / profile.decay_constant_ns) : 1.0;
        const double re = nd(rng);
        const double im = nd(rng);
        ch.taps.push_back(ChannelTap{tau_ns * 1e-9, amp * cplx(re, im)});
    }
    const double e = ch.total_energy();
    if (!(e > 0.0)) throw std::runtime_error("generate_multipath: degenerate realization");
    const double s = 1.0 / std::sqrt(e);
    for (auto& t : ch.taps) t.gain *= s;
    return ch;
}

double energy_duration_95(const ChannelRealization& ch, double tap_spacing_s) {
    if (ch.taps.empty()) return 0.0;
    std::vector<ChannelTap> taps = ch.taps;
    std::stable_sort(taps.begin(), taps.end(),
                     [](const ChannelTap& a, const ChannelTap& b) { return a.delay_s < b.delay_s; });
    const double total = ch.total_energy();
    double acc = 0.0;
    for (const auto& t : taps) {
        acc += std::norm(t.gain);
        if (acc >= 0.95 * total) return t.delay_s - taps.front().delay_s + tap_spacing_s;
    }
    return taps.back().delay_s - taps.front().delay_s + tap_spacing_s;
}

double mean_energy_duration_95(const DelaySpreadProfile& profile, int realizations, std::uint64_t seed) {
    double acc = 0.0;
    for (int r = 0; r < realizations; ++r)
        acc += energy_duration_95(generate_multipath(profile, seed_hash(seed, static_cast<std::uint64_t>(r))),
                                  profile.tap_spacing_ns * 1e-9);
    return acc / realizations;
}

DelaySpreadProfile calibrate_profile(DelaySpreadProfile profile, int realizations) {
    const double target_s = profile.target_95pct_duration_ns * 1e-9;
    if (!(target_s > 0.0)) throw std::invalid_argument("calibrate_profile: target must be positive");
    const std::uint64_t seed = 0x95e;
    profile.decay_constant_ns = 0.0;
    if (mean_energy_duration_95(profile, realizations, seed) >= target_s) return profile;

    // Common random numbers make the ensemble mean monotone in the decay.
    double lo = 0.0, hi = profile.target_95pct_duration_ns;
    profile.decay_constant_ns = hi;
    while (mean_energy_duration_95(profile, realizations, seed) < target_s) {
        hi *= 2.0;
        profile.decay_constant_ns = hi;
    }
    for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo + hi);
        profile.decay_constant_ns = mid;
        if (mean_energy_duration_95(profile, realizations, seed) < target_s) lo = mid; else hi = mid;
        if (hi - lo < 1e-4 * profile.target_95pct_duration_ns) break;
    }
    profile.decay_constant_ns = 0.5 * (lo + hi);
    return profile;
}

DelaySpreadProfile table2_profile(Environment env, bool los, double tap_spacing_ns) {
    for (const auto& e : kTable2) {
        if (e.env != env) continue;
        DelaySpreadProfile p;
        p.environment = env;
        p.los = los;
        p.target_95pct_duration_ns = los ? e.los_ns : e.nlos_ns;
        p.tap_spacing_ns = tap_spacing_ns;
        return calibrate_profile(p);
    }
    throw std::invalid_argument("table2_profile: no reference delay-spread entry for " + to_string(env));
}

EffectiveTaps effective_taps(const ChannelRealization& channel, const cvec& rho, int p, double T_s) {
    if (p < 1) throw std::invalid_argument("effective_taps: p must be >= 1");
    if (!(T_s > 0.0)) throw std::invalid_argument("effective_taps: T_s must be positive");
    const long center = static_cast<long>(rho.size() / 2);
    auto rho_at = [&](double lag) -> cplx {
        const double pos = lag + static_cast<double>(center);
        const double fl = std::floor(pos);
        const long i = static_cast<long>(fl);
        const double frac = pos - fl;
        auto at = [&](long k) -> cplx {
            return (k >= 0 && k < static_cast<long>(rho.size())) ? rho[static_cast<std::size_t>(k)] : cplx{};
        };
        if (frac == 0.0) return at(i);
        return (1.0 - frac) * at(i) + frac * at(i + 1);
    };
    EffectiveTaps out;
    out.sample_interval = T_s;
    out.theta.assign(static_cast<std::size_t>(p), cplx{});
    for (int l = 0; l < p; ++l)
        for (const auto& t : channel.taps) out.theta[static_cast<std::size_t>(l)] += t.gain * rho_at(l - t.delay_s / T_s);
    return out;
}

ComplexSignal apply_channel(const ComplexSignal& signal, const ChannelRealization& channel) {
    if (channel.taps.empty()) throw std::invalid_argument("apply_channel: empty channel");
    std::vector<long> shifts;
    long max_shift = 0;
    for (const auto& t : channel.taps) {
        if (t.delay_s < 0.0) throw std::invalid_argument("apply_channel: negative delay");
        const long s = std::lround(t.delay_s * signal.sample_rate_hz);
        shifts.push_back(s);
        max_shift = std::max(max_shift, s);
    }
    ComplexSignal out;
    out.sample_rate_hz = signal.sample_rate_hz;
    out.samples.assign(signal.size() + static_cast<std::size_t>(max_shift), cplx{});
    for (std::size_t k = 0; k < channel.taps.size(); ++k) {
        const cplx c = channel.taps[k].gain;
        const std::size_t s = static_cast<std::size_t>(shifts[k]);
        for (std::size_t n = 0; n < signal.size(); ++n) out.samples[n + s] += c * signal.samples[n];
    }
    return out;
}

double noise_psd_for_snr(const EffectiveTaps& theta, int L, double eta_db) {
    if (L < 1) throw std::invalid_argument("noise_psd_for_snr: L must be >= 1");
    return theta.energy() / (L * std::pow(10.0, eta_db / 10.0));
}

ComplexSignal add_white_noise(const ComplexSignal& signal, double variance, std::uint64_t seed) {
    if (variance < 0.0) throw std::invalid_argument("add_white_noise: negative variance");
    ComplexSignal out = signal;
    if (variance == 0.0) return out;
    std::mt19937_64 rng(seed);
    add_cn(out.samples, variance, rng);
    return out;
}

ComplexSignal add_awgn(const ComplexSignal& signal, const SnrSpec& snr, const EffectiveTaps& theta, int L,
                       std::uint64_t seed) {
    const double N0 = theta.energy() > 0.0 ? noise_psd_for_snr(theta, L, snr.eta_db) : snr.noise_psd;
    if (!(N0 > 0.0)) throw std::invalid_argument("add_awgn: noise PSD must be positive");
    return add_white_noise(signal, input_noise_variance(N0, L), seed);
}

std::vector<InterfererDraw> draw_interferers(const InterferenceConfig& cfg, double noise_psd, std::uint64_t seed) {
    if (cfg.count < 0) throw std::invalid_argument("interference: negative count");
    const auto [db_lo, db_hi] = cfg.psd_above_noise_db_range;
    if (db_lo > db_hi) throw std::invalid_argument("interference: PSD range low > high");
    const auto [f_lo, f_hi] = cfg.band_edges_hz;
    if (cfg.count > 0 && cfg.bandwidth_hz > f_hi - f_lo)
        throw std::invalid_argument("interference: bandwidth exceeds passband");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<InterfererDraw> out;
    for (int i = 0; i < cfg.count; ++i) {
        const double db = db_lo + (db_hi - db_lo) * u(rng);
        const double lo = f_lo + 0.5 * cfg.bandwidth_hz;
        const double hi = f_hi - 0.5 * cfg.bandwidth_hz;
        out.push_back(InterfererDraw{lo + (hi - lo) * u(rng), noise_psd * std::pow(10.0, db / 10.0)});
    }
    return out;
}

ComplexSignal add_interference(const ComplexSignal& signal, const InterferenceConfig& cfg, double noise_psd,
                               std::uint64_t seed) {
    if (cfg.count == 0) return signal;
    const double fs = signal.sample_rate_hz;
    const double nyq = 0.5 * fs * (1.0 + 1e-12);  // fs = L / T_b may round just below the nominal rate
    if (cfg.band_edges_hz.first < -nyq || cfg.band_edges_hz.second > nyq)
        throw std::invalid_argument("interference: band edges outside the Nyquist band");
    const auto draws = draw_interferers(cfg, noise_psd, seed);

    // 128-tap Blackman-windowed sinc lowpass, scaled to unit noise gain per unit bandwidth.
    constexpr int kTaps = 128;
    const double fc = 0.5 * cfg.bandwidth_hz / fs;
    std::vector<double> f(kTaps);
    double e = 0.0;
    for (int i = 0; i < kTaps; ++i) {
        const double t = i - 0.5 * (kTaps - 1);
        const double sinc = std::abs(t) < 1e-12 ? 2.0 * fc : std::sin(2.0 * kPi * fc * t) / (kPi * t);
        const double w = 0.42 - 0.5 * std::cos(2.0 * kPi * i / (kTaps - 1)) + 0.08 * std::cos(4.0 * kPi * i / (kTaps - 1));
        f[static_cast<std::size_t>(i)] = sinc * w;
        e += f[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(i)];
    }

    ComplexSignal out = signal;
    const std::size_t n = signal.size();
    std::mt19937_64 rng(seed_hash(seed, 0x1f));
    for (const auto& d : draws) {
        // Variance psd * B/fs after filtering.
        const double gain = std::sqrt(d.psd * (cfg.bandwidth_hz / fs) / e);
        cvec w(n + kTaps - 1, cplx{});
        add_cn(w, 1.0, rng);
        const double step = 2.0 * kPi * d.center_hz / fs;
        for (std::size_t k = 0; k < n; ++k) {
            cplx acc{};
            for (int i = 0; i < kTaps; ++i) acc += f[static_cast<std::size_t>(i)] * w[k + static_cast<std::size_t>(i)];
            out.samples[k] += gain * acc * std::polar(1.0, step * static_cast<double>(k));
        }
    }
    return out;
}

ComplexSignal apply_cfo(const ComplexSignal& signal, double delta_f_hz) {
    ComplexSignal out = signal;
    if (delta_f_hz == 0.0) return out;
    const double step = 2.0 * kPi * delta_f_hz / signal.sample_rate_hz;
    for (std::size_t n = 0; n < out.size(); ++n) out.samples[n] *= std::polar(1.0, step * static_cast<double>(n));
    return out;
}

AssembledStream assemble_stream(const ComplexSignal& preamble_rx, long lead_samples, long trail_samples,
                                double noise_psd, std::uint64_t seed) {
    if (lead_samples < 0 || trail_samples < 0) throw std::invalid_argument("assemble_stream: negative lead/trail");
    AssembledStream a;
    a.stream.sample_rate_hz = preamble_rx.sample_rate_hz;
    a.stream.samples.assign(static_cast<std::size_t>(lead_samples + trail_samples) + preamble_rx.size(), cplx{});
    std::copy(preamble_rx.samples.begin(), preamble_rx.samples.end(),
              a.stream.samples.begin() + lead_samples);
    a.true_start_index = lead_samples;
    if (noise_psd > 0.0) {
        std::mt19937_64 rng(seed);
        add_cn(a.stream.samples, noise_psd, rng);
    }
    return a;
}

void save_channel(const ChannelRealization& ch, const std::string& path) {
    nlohmann::json j;
    j["taps"] = nlohmann::json::array();
    for (const auto& t : ch.taps)
        j["taps"].push_back({{"delay_s", t.delay_s}, {"re", t.gain.real()}, {"im", t.gain.imag()}});
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_channel: cannot open " + path);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("save_channel: write failed for " + path);
}

ChannelRealization load_channel(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_channel: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_channel: parse error in " + path + ": " + e.what());
    }
    ChannelRealization ch;
    for (const auto& t : j.at("taps"))
        ch.taps.push_back(ChannelTap{t.at("delay_s").get<double>(),
                                     cplx(t.at("re").get<double>(), t.at("im").get<double>())});
    return ch;
}

}  // namespace ofmtss
