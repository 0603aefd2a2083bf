#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "ofmtss/channel.hpp"
#include "ofmtss/channelizer.hpp"
#include "ofmtss/detector.hpp"
#include "ofmtss/harness.hpp"
#include "ofmtss/waveform.hpp"

using namespace ofmtss;

namespace {

// Scenario source shared by every subcommand: preset, then config file, then flags.
struct ScenarioFlags {
    std::string preset_name = "desk";
    std::string config;
    std::optional<int> p, trials, noise_trials, threads, M, J, interferers, N;
    std::optional<double> pfa, cfo_range;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode, timing;
    std::vector<double> sweep;  // lo hi step

    void attach(CLI::App* app) {
        app->add_option("--preset", preset_name, "Base preset (desk, narrowband, wideband, wideband_short, fig7)");
        app->add_option("--config", config, "JSON scenario file (applied over the preset)");
        app->add_option("--p", p, "Channel taps modeled by the detector");
        app->add_option("--N", N, "Preamble symbols");
        app->add_option("--pfa", pfa, "Target false-alarm probability");
        app->add_option("--M", M, "Radio bands for MRB mode");
        app->add_option("--mode", mode, "SRB or MRB");
        app->add_option("--timing", timing, "aligned or scan");
        app->add_option("--trials", trials, "Signal trials per SNR point");
        app->add_option("--noise-trials", noise_trials, "Noise-only trials per SNR point");
        app->add_option("--threads", threads, "Worker threads (0 = all cores)");
        app->add_option("--seed", seed, "Root seed");
        app->add_option("--interferers", interferers, "Number of narrowband interferers");
        app->add_option("--cfo-range", cfo_range, "CFO half-range in Hz (enables the grid search)");
        app->add_option("--cfo-bins", J, "CFO grid size (default: sized for 1 dB loss)");
        app->add_option("--sweep", sweep, "SNR sweep in dB: lo hi step")->expected(3);
    }

    Scenario build() const {
        Scenario s = preset(preset_name);
        if (!config.empty()) {
            const std::string name = s.name;
            Scenario f = load_scenario(config);
            s = f;
            if (s.name.empty()) s.name = name;
        }
        if (p) s.detector.p = *p;
        if (N) s.waveform.N = *N;
        if (pfa) s.detector.P_FA = *pfa;
        if (M) s.detector.M = *M;
        if (mode) {
            if (*mode != "SRB" && *mode != "MRB") throw std::invalid_argument("--mode must be SRB or MRB");
            s.mode = *mode == "MRB" ? RadioMode::MRB : RadioMode::SRB;
        }
        if (timing) {
            if (*timing != "aligned" && *timing != "scan") throw std::invalid_argument("--timing must be aligned or scan");
            s.timing = *timing == "scan" ? TimingMode::scan : TimingMode::aligned;
        }
        if (trials) s.trials_per_point = *trials;
        if (noise_trials) s.noise_trials_per_point = *noise_trials;
        if (threads) s.threads = *threads;
        if (seed) s.root_seed = *seed;
        if (interferers) s.interference.count = *interferers;
        if (cfo_range) {
            s.cfo.enabled = *cfo_range > 0.0;
            s.cfo.range_hz = *cfo_range;
            s.cfo.J = J ? *J : cfo_grid_size(*cfo_range, s.waveform.N * s.waveform.symbol_duration_s);
        } else if (J) {
            s.cfo.J = *J;
        }
        if (!sweep.empty()) {
            if (!(sweep[2] > 0.0) || sweep[1] < sweep[0]) throw std::invalid_argument("--sweep needs lo <= hi and step > 0");
            s.snr_sweep_db.clear();
            for (int i = 0; sweep[0] + i * sweep[2] <= sweep[1] + 1e-9; ++i) s.snr_sweep_db.push_back(sweep[0] + i * sweep[2]);
        }
        s.validate();
        return s;
    }
};

int cmd_theory(const ScenarioFlags& sf, const std::string& out) {
    const Scenario s = sf.build();
    const int J = s.cfo.enabled ? s.cfo.J : 1;
    const auto rows = theory_curve(s.snr_sweep_db, s.detector.p, s.waveform.N, s.waveform.L, s.detector.P_FA, J);
    if (out.empty() || out == "-") {
        std::printf("eta_db,lambda,p,P_FA,J,P_D_theory_chi2,P_D_theory_deflection\n");
        for (const auto& r : rows)
            std::printf("%.6f,%.10g,%d,%.10g,%d,%.10g,%.10g\n", r.eta_db, r.lambda, r.p, r.P_FA, r.J, r.pd_chi2,
                        r.pd_deflection);
    } else {
        write_theory_csv(rows, out);
    }
    return 0;
}

int cmd_simulate(const ScenarioFlags& sf, const std::string& out, const std::string& save_config) {
    const Scenario s = sf.build();
    if (!save_config.empty()) save_scenario(s, save_config);
    std::fprintf(stderr, "scenario %s: L=%d N=%d p=%d mode=%s trials=%d\n", s.name.c_str(), s.waveform.L, s.waveform.N,
                 s.detector.p, s.mode == RadioMode::MRB ? "MRB" : "SRB", s.trials_per_point);
    const auto pts = run_curve(s, out, [](const CurvePoint& p) {
        std::fprintf(stderr, "  eta=%7.2f dB  P_D=%.4f  theory=%.4f  P_FA=%.4g\n", p.eta_db, p.p_d_empirical,
                     p.p_d_theory, p.p_fa_empirical);
    });
    if (out.empty()) {
        std::printf("%s\n", curve_csv_header().c_str());
        for (const auto& p : pts) std::printf("%s\n", curve_csv_row(p).c_str());
    }
    return 0;
}

int cmd_detect(const ScenarioFlags& sf, const std::string& in, const std::string& dump_prefix) {
    const Scenario s = sf.build();
    const ScenarioContext ctx = make_context(s);
    const ComplexSignal x = iq_read(in);
    const DetectionResult res = detect_stream(x, ctx.channelizer, ctx.threshold);
    std::printf("threshold %.6g\n", ctx.threshold);
    for (const auto& e : res.events) std::printf("event index=%ld statistic=%.6g\n", e.index, e.statistic);
    if (res.argmax) std::printf("argmax index=%ld statistic=%.6g\n", res.argmax->index, res.argmax->statistic);
    if (!dump_prefix.empty()) {
        AnalysisFilterBank afb(ctx.waveform.prototype, s.waveform.r, x.sample_rate_hz);
        dump_subbands(afb.process(x.samples), dump_prefix);
    }
    return res.events.empty() ? 1 : 0;
}

int cmd_preamble(const ScenarioFlags& sf, const std::string& out) {
    const Scenario s = sf.build();
    const WaveformConfig w = make_waveform(s.waveform.L, s.waveform.N, s.waveform.symbol_duration_s, s.waveform.options);
    iq_write(generate_preamble(w), out);
    std::printf("wrote %s: L=%d N=%d fs=%.6g Hz\n", out.c_str(), w.L, w.N, w.sample_rate());
    return 0;
}

struct ChannelFlags {
    std::string in, out, env = "flat", save_channel;
    bool los = false;
    double snr_db = 0.0, cfo_hz = 0.0;
    long lead = 0, trail = 0;
    std::uint64_t seed = 1;
};

int cmd_channel(const ScenarioFlags& sf, const ChannelFlags& cf) {
    const Scenario s = sf.build();
    const ScenarioContext ctx = make_context(s);
    ComplexSignal x = iq_read(cf.in);
    if (x.sample_rate_hz <= 1.0) x.sample_rate_hz = ctx.waveform.sample_rate();
    ChannelRealization ch = flat_channel();
    if (cf.env != "flat") {
        const DelaySpreadProfile prof =
            table2_profile(environment_from_string(cf.env), cf.los, 1e9 / ctx.waveform.sample_rate());
        ch = generate_multipath(prof, seed_hash(cf.seed, 1));
    }
    if (!cf.save_channel.empty()) save_channel(ch, cf.save_channel);
    const EffectiveTaps theta = effective_taps(ch, ctx.rho, s.detector.p, ctx.waveform.sample_interval());
    const double sigma2 = input_noise_variance(noise_psd_for_snr(theta, s.waveform.L, cf.snr_db), s.waveform.L);
    ComplexSignal y = apply_channel(x, ch);
    if (cf.cfo_hz != 0.0) y = apply_cfo(y, cf.cfo_hz);
    AssembledStream as = assemble_stream(y, cf.lead, cf.trail, sigma2, seed_hash(cf.seed, 2));
    if (s.interference.count > 0) as.stream = add_interference(as.stream, s.interference, sigma2, seed_hash(cf.seed, 3));
    iq_write(as.stream, cf.out);
    std::printf("wrote %s: %zu samples, signal starts at %ld, noise variance %.6g\n", cf.out.c_str(),
                as.stream.size(), as.true_start_index, sigma2);
    return 0;
}

int cmd_selftest() {
    int failures = 0;
    auto report = [&](const char* name, bool ok, const std::string& detail) {
        std::printf("%s %s (%s)\n", ok ? "PASS" : "FAIL", name, detail.c_str());
        failures += ok ? 0 : 1;
    };
    char buf[160];

    const WaveformConfig w = make_waveform(64, 32, 128e-9);
    const ComplexSignal rho = composite_pulse(w);
    const std::size_t c = rho.size() / 2;
    double side = 0.0;
    for (long k = 1; static_cast<std::size_t>(k) * 64 <= c; ++k) side = std::max(side, std::abs(rho[c + static_cast<std::size_t>(k) * 64]));
    std::snprintf(buf, sizeof(buf), "largest |rho| at nonzero multiples of L is %.3g of the peak", side / std::abs(rho[c]));
    report("composite pulse is Nyquist", side < 0.01 * std::abs(rho[c]), buf);

    const double g = threshold(1e-2, 4);
    std::snprintf(buf, sizeof(buf), "tail at threshold %.6g", chi2_tail(8, g));
    report("threshold inverts the chi-squared tail", std::abs(chi2_tail(8, g) - 1e-2) < 1e-10, buf);

    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    const int N = 8, L = 16, p = 3;
    const Eigen::MatrixXcd H = build_data_matrix({make_preamble_symbols(N, 3), L, p});
    Eigen::VectorXcd y(N * L);
    for (auto& v : y) v = {nd(rng), nd(rng)};
    std::vector<double> phi(L);
    for (auto& v : phi) v = 1.0 + 9.0 * std::uniform_real_distribution<double>()(rng);
    const double a = rao_exact(y, H, per_band_covariance(std::vector<double>(L, 2.0), N, L));
    const double b = rao_low_complexity(y, H, std::vector<double>(L, 2.0), compute_beta(std::vector<double>(L, 2.0), N, L));
    std::snprintf(buf, sizeof(buf), "exact %.10g low-complexity %.10g", a, b);
    report("white-noise Rao forms agree", std::abs(a - b) <= 1e-6 * std::abs(a), buf);

    const double l1 = required_snr_db(1e-3, 0.9, 8, 32, 64), l2 = required_snr_db(1e-3, 0.9, 16, 32, 64);
    std::snprintf(buf, sizeof(buf), "difference %.4f dB", l2 - l1);
    report("doubling p costs 1.505 dB", std::abs(l2 - l1 - 1.505) < 0.01, buf);

    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OFMT-SS packet detection: Rao score test, filter-bank channelizer and Monte Carlo harness"};
    app.require_subcommand(1);

    ScenarioFlags th_f, sim_f, det_f, pre_f, ch_f;
    std::string th_out, sim_out, sim_save, det_in, det_dump, pre_out;
    ChannelFlags cf;

    auto* th = app.add_subcommand("theory", "Write chi-squared and deflection P_D curves");
    th_f.attach(th);
    th->add_option("-o,--out", th_out, "CSV path ('-' or empty for stdout)");

    auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo detection curve");
    sim_f.attach(sim);
    sim->add_option("-o,--out", sim_out, "CSV path (resumable through <out>.partial)");
    sim->add_option("--save-config", sim_save, "Write the effective scenario as JSON");

    auto* det = app.add_subcommand("detect", "Run the streaming detector on an IQ file");
    det_f.attach(det);
    det->add_option("-i,--in", det_in, "Input IQ file")->required();
    det->add_option("--dump-subbands", det_dump, "Write each AFB band to <prefix>_bandKKK.iq");

    auto* pre = app.add_subcommand("preamble", "Write the reference preamble as an IQ file");
    pre_f.attach(pre);
    pre->add_option("-o,--out", pre_out, "Output IQ file")->required();

    auto* ch = app.add_subcommand("channel", "Apply multipath, noise, interference and CFO to an IQ file");
    ch_f.attach(ch);
    ch->add_option("-i,--in", cf.in, "Input IQ file")->required();
    ch->add_option("-o,--out", cf.out, "Output IQ file")->required();
    ch->add_option("--env", cf.env, "flat, office, industrial or outdoor");
    ch->add_flag("--los", cf.los, "Line-of-sight delay-spread profile");
    ch->add_option("--snr-db", cf.snr_db, "Chip SNR eta in dB");
    ch->add_option("--cfo-hz", cf.cfo_hz, "Carrier frequency offset");
    ch->add_option("--lead", cf.lead, "Noise samples before the signal");
    ch->add_option("--trail", cf.trail, "Noise samples after the signal");
    ch->add_option("--channel-seed", cf.seed, "Seed for channel, noise and interference");
    ch->add_option("--save-channel", cf.save_channel, "Write the drawn channel as JSON");

    auto* st = app.add_subcommand("selftest", "Run a quick invariant suite");

    CLI11_PARSE(app, argc, argv);
    try {
        if (th->parsed()) return cmd_theory(th_f, th_out);
        if (sim->parsed()) return cmd_simulate(sim_f, sim_out, sim_save);
        if (det->parsed()) return cmd_detect(det_f, det_in, det_dump);
        if (pre->parsed()) return cmd_preamble(pre_f, pre_out);
        if (ch->parsed()) return cmd_channel(ch_f, cf);
        if (st->parsed()) return cmd_selftest();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
