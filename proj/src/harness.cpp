#include "ofmtss/harness.hpp"

#include <boost/math/distributions/beta.hpp>
#include "json.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ofmtss {

using nlohmann::json;

namespace {

constexpr std::uint64_t kNoiseTrialOffset = 1ULL << 40;

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs f(i) for i in [0, n) on a small pool; rethrows the first failure.
template <class F>
void parallel_for(long n, int threads, F&& f) {
    threads = static_cast<int>(std::min<long>(std::max(1, threads), std::max(1L, n)));
    if (threads <= 1) {
        for (long i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const long i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                    next.store(n);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

int radio_bands(const Scenario& s) { return s.mode == RadioMode::MRB ? s.detector.M : 1; }

long ceil_to(long v, long m) { return (v + m - 1) / m * m; }

struct StreamLayout {
    long lead_base = 0;
    long trail = 0;
};

StreamLayout layout_for(const ChannelizerConfig& c) {
    const long L = c.L, N = c.N(), S = c.pulse_delay(), Sf = static_cast<long>(c.interp_half_symbols) * L;
    StreamLayout lay;
    // FIFO fill (r*N hops) plus the synthesis delay before the first whitened window.
    lay.lead_base = ceil_to((N + 1) * L + S + Sf, c.M);
    lay.trail = S + Sf + 2 * L + c.p;
    return lay;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------- scenario

void Scenario::validate() const {
    if (trials_per_point < 1) throw std::invalid_argument("scenario: trials_per_point must be >= 1");
    if (snr_sweep_db.empty()) throw std::invalid_argument("scenario: SNR sweep is empty");
    if (waveform.L < 2 || waveform.N < 1 || !(waveform.symbol_duration_s > 0.0))
        throw std::invalid_argument("scenario: invalid waveform parameters");
    detector.validate(waveform.L);
    if (detector.p >= waveform.L) throw std::invalid_argument("scenario: p must be < L");
    if (cfo.enabled && (cfo.J < 1 || cfo.range_hz < 0.0)) throw std::invalid_argument("scenario: invalid CFO grid");
}

std::pair<double, double> wilson_interval(long k, long n, double z) {
    if (n <= 0) throw std::invalid_argument("wilson_interval: n must be positive");
    if (k < 0 || k > n) throw std::invalid_argument("wilson_interval: successes out of range");
    const double ph = static_cast<double>(k) / n;
    const double z2 = z * z;
    const double den = 1.0 + z2 / n;
    const double center = (ph + z2 / (2.0 * n)) / den;
    const double half = z / den * std::sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, std::min(center - half, ph)), std::min(1.0, std::max(center + half, ph))};
}

std::pair<double, double> clopper_pearson(long k, long n, double confidence) {
    if (n <= 0 || k < 0 || k > n) throw std::invalid_argument("clopper_pearson: invalid counts");
    const double a = 0.5 * (1.0 - confidence);
    double lo = 0.0, hi = 1.0;
    if (k > 0) lo = boost::math::quantile(boost::math::beta_distribution<double>(k, n - k + 1), a);
    if (k < n) hi = boost::math::quantile(boost::math::beta_distribution<double>(k + 1, n - k), 1.0 - a);
    return {lo, hi};
}

// ---------------------------------------------------------------- presets

std::vector<std::string> preset_names() { return {"desk", "narrowband", "wideband", "wideband_short", "fig7"}; }

namespace {

std::vector<double> sweep(double lo, double hi, double step) {
    std::vector<double> v;
    for (int i = 0; lo + i * step <= hi + 1e-9; ++i) v.push_back(lo + i * step);
    return v;
}

Scenario full_scale_base(int L, int M, double bw_hz, double preamble_s, int p) {
    Scenario s;
    s.waveform.L = L;
    s.waveform.symbol_duration_s = L / bw_hz;
    s.waveform.N = static_cast<int>(std::lround(preamble_s / s.waveform.symbol_duration_s));
    s.detector.M = M;
    s.detector.p = p;
    s.detector.P_FA = 1e-8;
    s.mode = RadioMode::MRB;
    s.channel_profile = table2_profile(Environment::office, false, 1e9 / bw_hz);
    s.interference.count = 4;
    s.interference.bandwidth_hz = 20e6;
    s.interference.band_edges_hz = {-0.5 * bw_hz, 0.5 * bw_hz};
    s.trials_per_point = 1000;
    return s;
}

}  // namespace

Scenario preset(const std::string& name) {
    Scenario s;
    if (name == "desk") {
        s.waveform.L = 64;
        s.waveform.N = 32;
        s.waveform.symbol_duration_s = 64 / 500e6;
        s.detector.p = 4;
        s.detector.M = 4;
        s.detector.P_FA = 1e-2;
        s.channel_profile.tap_spacing_ns = 2.0;
        s.interference.count = 0;
        s.interference.band_edges_hz = {-250e6, 250e6};
        s.snr_sweep_db = sweep(-34.0, -20.0, 1.0);
        s.trials_per_point = 2000;
    } else if (name == "narrowband") {
        s = full_scale_base(1024, 4, 500e6, 2e-3, 40);
        s.snr_sweep_db = sweep(-48.0, -36.0, 1.0);
    } else if (name == "wideband" || name == "fig7") {
        // 80 ns at 1.28 GS/s is 102.4 samples, rounded up to a multiple of M.
        s = full_scale_base(4096, 8, 1280e6, 2e-3, 104);
        s.snr_sweep_db = sweep(-48.0, -36.0, 1.0);
        if (name == "fig7") s.snr_sweep_db = sweep(-46.0, -36.0, 0.5);
    } else if (name == "wideband_short") {
        s = full_scale_base(4096, 8, 1280e6, 0.2e-3, 104);
        s.snr_sweep_db = sweep(-38.0, -26.0, 1.0);
    } else {
        throw std::invalid_argument("preset: unknown name '" + name + "'");
    }
    s.name = name;
    return s;
}

// ---------------------------------------------------------------- trials

ScenarioContext make_context(const Scenario& s) {
    s.validate();
    ScenarioContext c;
    c.scenario = s;
    c.waveform = make_waveform(s.waveform.L, s.waveform.N, s.waveform.symbol_duration_s, s.waveform.options);
    c.preamble = generate_preamble(c.waveform);
    c.rho = composite_pulse(c.waveform).samples;
    c.channelizer = make_channelizer_config(c.waveform, s.detector.p, radio_bands(s), s.waveform.r);
    const int J = s.cfo.enabled ? s.cfo.J : 1;
    c.threshold = threshold(s.detector.P_FA, s.detector.p, J);
    if (s.cfo.enabled) c.cfo_grid = cfo_grid(s.cfo.range_hz, s.cfo.J);
    return c;
}

TrialOutcome run_trial(const ScenarioContext& ctx, double eta_db, std::uint64_t seed, bool signal) {
    const Scenario& s = ctx.scenario;
    const ChannelizerConfig& cc = ctx.channelizer;
    const int L = cc.L, p = cc.p;
    const long S = cc.pulse_delay();

    const ChannelRealization ch = s.channel_profile.decay_constant_ns > 0.0
                                      ? generate_multipath(s.channel_profile, seed_hash(seed, 1))
                                      : flat_channel();
    const EffectiveTaps theta = effective_taps(ch, ctx.rho, p, ctx.waveform.sample_interval());
    const double sigma2 = input_noise_variance(noise_psd_for_snr(theta, L, eta_db), L);

    ComplexSignal rx = apply_channel(ctx.preamble, ch);
    if (!signal) std::fill(rx.samples.begin(), rx.samples.end(), cplx{});
    if (signal && s.cfo.enabled && s.cfo.range_hz > 0.0) {
        std::mt19937_64 rng(seed_hash(seed, 4));
        std::uniform_real_distribution<double> u(-s.cfo.range_hz, s.cfo.range_hz);
        rx = apply_cfo(rx, u(rng));
    }

    const StreamLayout lay = layout_for(cc);
    std::mt19937_64 lrng(seed_hash(seed, 5));
    const long offset = static_cast<long>(lrng() % static_cast<std::uint64_t>(L)) / cc.M * cc.M;
    const long lead = lay.lead_base + offset;
    AssembledStream as = assemble_stream(rx, lead, lay.trail, sigma2, seed_hash(seed, 2));
    if (s.interference.count > 0) as.stream = add_interference(as.stream, s.interference, sigma2, seed_hash(seed, 3));

    const long t_true = as.true_start_index + S;
    const long tol = p + L;
    long lo = t_true, hi = t_true;
    if (s.timing == TimingMode::scan) {
        lo = std::max(lay.lead_base, t_true - tol) / cc.M * cc.M;
        hi = t_true + tol;
    }

    TrialOutcome out;
    long best_index = 0;
    bool have = false;
    if (s.cfo.enabled) {
        const TestStatistic ts = cfo_grid_search(as.stream, cc, ctx.cfo_grid, lo, hi);
        out.statistic = ts.value;
        best_index = ts.window_index;
        have = true;
    } else {
        StreamDetector det(cc);
        det.set_eval_range(lo, hi);
        std::vector<StatisticSample> stats;
        det.push(as.stream.samples, stats);
        for (const auto& st : stats) {
            if (st.index < lo || st.index > hi) continue;
            if (!have || st.value > out.statistic) {
                out.statistic = st.value;
                best_index = st.index;
                have = true;
            }
        }
    }
    if (!have) throw std::logic_error("run_trial: evaluation window was not produced");
    out.index_error = best_index - t_true;
    out.detected = out.statistic > ctx.threshold && std::labs(out.index_error) <= tol;
    return out;
}

CurvePoint run_point(const Scenario& scenario, double eta_db, int point_index) {
    return run_point(make_context(scenario), eta_db, point_index);
}

CurvePoint run_point(const ScenarioContext& ctx, double eta_db, int point_index) {
    const Scenario& s = ctx.scenario;
    s.validate();
    const long n = s.trials_per_point;
    const long nn = s.noise_trials_per_point < 0 ? n : s.noise_trials_per_point;
    std::vector<char> hit(static_cast<std::size_t>(n + nn), 0);
    parallel_for(n + nn, resolve_threads(s.threads), [&](long i) {
        const bool sig = i < n;
        const std::uint64_t trial = sig ? static_cast<std::uint64_t>(i) : kNoiseTrialOffset + static_cast<std::uint64_t>(i - n);
        const std::uint64_t seed = seed_hash(s.root_seed, static_cast<std::uint64_t>(point_index), trial);
        const TrialOutcome o = run_trial(ctx, eta_db, seed, sig);
        hit[static_cast<std::size_t>(i)] = sig ? o.detected : o.statistic > ctx.threshold;
    });
    long det = 0, fa = 0;
    for (long i = 0; i < n; ++i) det += hit[static_cast<std::size_t>(i)];
    for (long i = n; i < n + nn; ++i) fa += hit[static_cast<std::size_t>(i)];

    CurvePoint cp;
    cp.eta_db = eta_db;
    cp.trials = static_cast<int>(n);
    cp.p_d_empirical = static_cast<double>(det) / n;
    cp.p_fa_empirical = nn > 0 ? static_cast<double>(fa) / nn : 0.0;
    cp.wilson_ci = wilson_interval(det, n);
    const double eta = std::pow(10.0, eta_db / 10.0);
    const double lambda = 2.0 * ctx.waveform.N * ctx.waveform.L * eta;
    cp.p_d_theory = theory_pd(s.detector.P_FA, s.detector.p, lambda, s.cfo.enabled ? s.cfo.J : 1);
    return cp;
}

FalseAlarmResult run_false_alarm(const Scenario& scenario, long windows, std::uint64_t seed) {
    if (windows < 1) throw std::invalid_argument("run_false_alarm: windows must be >= 1");
    const ScenarioContext ctx = make_context(scenario);
    const ChannelizerConfig& cc = ctx.channelizer;
    const long L = cc.L;
    const long Sf = static_cast<long>(cc.interp_half_symbols) * L;
    // Window footprint plus synthesis overlap on both sides.
    const long W = ceil_to(static_cast<long>(cc.N()) * L + cc.p + 2 * Sf, cc.M);
    const StreamLayout lay = layout_for(cc);
    const long first = lay.lead_base + cc.pulse_delay();
    constexpr long kPerSegment = 2000;
    const long segments = (windows + kPerSegment - 1) / kPerSegment;
    const std::vector<double> grid = ctx.cfo_grid.empty() ? std::vector<double>{0.0} : ctx.cfo_grid;
    const double sigma2 = 1.0 / L;
    const double fs = ctx.waveform.sample_rate();

    std::vector<long> alarms(static_cast<std::size_t>(segments), 0);
    parallel_for(segments, resolve_threads(scenario.threads), [&](long sidx) {
        const long count = std::min(kPerSegment, windows - sidx * kPerSegment);
        const long last = first + (count - 1) * W;
        const long total = last + static_cast<long>(cc.N()) * L + lay.trail;
        std::vector<StreamDetector> dets;
        for (std::size_t j = 0; j < grid.size(); ++j) dets.emplace_back(cc);
        std::map<long, double> best;
        std::mt19937_64 rng(seed_hash(seed, static_cast<std::uint64_t>(sidx)));
        std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * sigma2));
        constexpr long kChunk = 8192;
        cvec chunk, rot;
        std::vector<StatisticSample> stats;
        for (long pos = 0; pos < total; pos += kChunk) {
            const long m = std::min(kChunk, total - pos);
            chunk.resize(static_cast<std::size_t>(m));
            for (auto& v : chunk) {
                const double re = nd(rng);
                v = cplx{re, nd(rng)};
            }
            for (std::size_t j = 0; j < grid.size(); ++j) {
                rot = chunk;
                if (grid[j] != 0.0) {
                    const double w = -2.0 * 3.14159265358979323846 * grid[j] / fs;
                    for (long i = 0; i < m; ++i) rot[static_cast<std::size_t>(i)] *= std::polar(1.0, w * static_cast<double>(pos + i));
                }
                stats.clear();
                dets[j].push(rot, stats);
                for (const auto& st : stats) {
                    if (st.index < first || st.index > last || (st.index - first) % W != 0) continue;
                    auto it = best.find(st.index);
                    if (it == best.end()) best.emplace(st.index, st.value);
                    else it->second = std::max(it->second, st.value);
                }
            }
        }
        long a = 0;
        for (const auto& kv : best) a += kv.second > ctx.threshold;
        if (static_cast<long>(best.size()) != count) throw std::logic_error("run_false_alarm: missing windows");
        alarms[static_cast<std::size_t>(sidx)] = a;
    });
    FalseAlarmResult r;
    r.windows = windows;
    for (long a : alarms) r.alarms += a;
    return r;
}

// ---------------------------------------------------------------- CSV

std::string curve_csv_header() { return "eta_db,p_d_empirical,p_d_theory,p_fa_empirical,trials,wilson_low,wilson_high"; }

std::string curve_csv_row(const CurvePoint& p) {
    std::ostringstream os;
    os << fmt("%.6f", p.eta_db) << ',' << fmt("%.10g", p.p_d_empirical) << ',' << fmt("%.10g", p.p_d_theory) << ','
       << fmt("%.10g", p.p_fa_empirical) << ',' << p.trials << ',' << fmt("%.10g", p.wilson_ci.first) << ','
       << fmt("%.10g", p.wilson_ci.second);
    return os.str();
}

namespace {

CurvePoint parse_row(const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 7) throw std::runtime_error("malformed curve row: " + line);
    CurvePoint p;
    p.eta_db = std::stod(f[0]);
    p.p_d_empirical = std::stod(f[1]);
    p.p_d_theory = std::stod(f[2]);
    p.p_fa_empirical = std::stod(f[3]);
    p.trials = std::stoi(f[4]);
    p.wilson_ci = {std::stod(f[5]), std::stod(f[6])};
    return p;
}

}  // namespace

void write_curve_csv(const std::vector<CurvePoint>& pts, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_curve_csv: cannot open " + path);
    f << curve_csv_header() << '\n';
    for (const auto& p : pts) f << curve_csv_row(p) << '\n';
    if (!f) throw std::runtime_error("write_curve_csv: write failed for " + path);
}

std::vector<CurvePoint> run_curve(const Scenario& scenario, const std::string& csv_path,
                                  const std::function<void(const CurvePoint&)>& progress) {
    const ScenarioContext ctx = make_context(scenario);
    // FNV-1a of the scenario JSON keys the partial file.
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : scenario_to_json(scenario)) h = (h ^ c) * 1099511628211ULL;
    const std::string sig = std::to_string(h);
    const std::string partial = csv_path + ".partial";

    // Points finished by an earlier run of the same scenario.
    std::map<int, CurvePoint> done;
    if (!csv_path.empty() && std::filesystem::exists(partial)) {
        std::ifstream in(partial);
        std::string line;
        if (std::getline(in, line) && line == "# " + sig) {
            while (std::getline(in, line)) {
                if (in.eof()) break;  // no trailing newline: torn write
                const auto comma = line.find(',');
                if (comma == std::string::npos) continue;
                try {
                    done[std::stoi(line.substr(0, comma))] = parse_row(line.substr(comma + 1));
                } catch (const std::exception&) {
                    break;  // torn final line
                }
            }
        }
    }
    std::ofstream part;
    if (!csv_path.empty()) {
        part.open(partial, std::ios::binary | std::ios::trunc);
        if (!part) throw std::runtime_error("run_curve: cannot open " + partial);
        part << "# " << sig << '\n';
        for (const auto& [i, p] : done) part << i << ',' << curve_csv_row(p) << '\n';
        part.flush();
    }

    std::vector<CurvePoint> pts;
    for (std::size_t i = 0; i < scenario.snr_sweep_db.size(); ++i) {
        const int idx = static_cast<int>(i);
        CurvePoint p;
        if (auto it = done.find(idx); it != done.end()) {
            p = it->second;
        } else {
            p = run_point(ctx, scenario.snr_sweep_db[i], idx);
            if (part.is_open()) {
                part << idx << ',' << curve_csv_row(p) << '\n';
                part.flush();
                if (!part) throw std::runtime_error("run_curve: write failed for " + partial);
            }
        }
        if (progress) progress(p);
        pts.push_back(p);
    }
    if (!csv_path.empty()) {
        part.close();
        write_curve_csv(pts, csv_path);
        json meta = json::parse(scenario_to_json(scenario));
        meta["derived"] = {{"N", ctx.waveform.N},
                           {"L", ctx.waveform.L},
                           {"threshold", ctx.threshold},
                           {"subcarrier_spacing_hz", 1.0 / ctx.waveform.symbol_duration},
                           {"sample_rate_hz", ctx.waveform.sample_rate()},
                           {"prototype_residual", ctx.waveform.prototype.design_residual}};
        std::ofstream m(csv_path + ".meta.json");
        if (!m) throw std::runtime_error("run_curve: cannot open " + csv_path + ".meta.json");
        m << meta.dump(2) << '\n';
        std::filesystem::remove(partial);
    }
    return pts;
}

// ---------------------------------------------------------------- config

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["waveform"] = {{"L", s.waveform.L},
                     {"N", s.waveform.N},
                     {"symbol_duration_s", s.waveform.symbol_duration_s},
                     {"span_symbols", s.waveform.options.span_symbols},
                     {"rolloff", s.waveform.options.rolloff},
                     {"code_seed", s.waveform.options.code_seed},
                     {"symbol_seed", s.waveform.options.symbol_seed},
                     {"r", s.waveform.r}};
    j["channel_profile"] = {{"environment", to_string(s.channel_profile.environment)},
                            {"los", s.channel_profile.los},
                            {"target_95pct_duration_ns", s.channel_profile.target_95pct_duration_ns},
                            {"decay_constant_ns", s.channel_profile.decay_constant_ns},
                            {"tap_spacing_ns", s.channel_profile.tap_spacing_ns}};
    j["interference"] = {{"count", s.interference.count},
                         {"bandwidth_hz", s.interference.bandwidth_hz},
                         {"psd_above_noise_db", {s.interference.psd_above_noise_db_range.first,
                                                 s.interference.psd_above_noise_db_range.second}},
                         {"band_edges_hz", {s.interference.band_edges_hz.first, s.interference.band_edges_hz.second}}};
    j["snr_sweep_db"] = s.snr_sweep_db;
    j["cfo"] = {{"enabled", s.cfo.enabled}, {"range_hz", s.cfo.range_hz}, {"J", s.cfo.J}};
    j["detector"] = {{"p", s.detector.p}, {"P_FA", s.detector.P_FA}, {"M", s.detector.M}};
    j["trials_per_point"] = s.trials_per_point;
    j["noise_trials_per_point"] = s.noise_trials_per_point;
    j["root_seed"] = s.root_seed;
    j["mode"] = s.mode == RadioMode::MRB ? "MRB" : "SRB";
    j["timing"] = s.timing == TimingMode::scan ? "scan" : "aligned";
    j["threads"] = s.threads;
    return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
    const json j = json::parse(text);
    // Start from the named preset when given, so files may list overrides only.
    Scenario s;
    if (j.contains("preset")) s = preset(j.at("preset").get<std::string>());
    auto get = [](const json& o, const char* key, auto& dst) {
        if (o.contains(key)) o.at(key).get_to(dst);
    };
    get(j, "name", s.name);
    if (j.contains("waveform")) {
        const json& w = j["waveform"];
        get(w, "L", s.waveform.L);
        get(w, "N", s.waveform.N);
        get(w, "symbol_duration_s", s.waveform.symbol_duration_s);
        get(w, "span_symbols", s.waveform.options.span_symbols);
        get(w, "rolloff", s.waveform.options.rolloff);
        get(w, "code_seed", s.waveform.options.code_seed);
        get(w, "symbol_seed", s.waveform.options.symbol_seed);
        get(w, "r", s.waveform.r);
    }
    if (j.contains("channel_profile")) {
        const json& c = j["channel_profile"];
        if (c.contains("environment")) s.channel_profile.environment = environment_from_string(c["environment"]);
        get(c, "los", s.channel_profile.los);
        get(c, "target_95pct_duration_ns", s.channel_profile.target_95pct_duration_ns);
        get(c, "decay_constant_ns", s.channel_profile.decay_constant_ns);
        get(c, "tap_spacing_ns", s.channel_profile.tap_spacing_ns);
    }
    if (j.contains("interference")) {
        const json& c = j["interference"];
        get(c, "count", s.interference.count);
        get(c, "bandwidth_hz", s.interference.bandwidth_hz);
        if (c.contains("psd_above_noise_db"))
            s.interference.psd_above_noise_db_range = {c["psd_above_noise_db"].at(0), c["psd_above_noise_db"].at(1)};
        if (c.contains("band_edges_hz")) s.interference.band_edges_hz = {c["band_edges_hz"].at(0), c["band_edges_hz"].at(1)};
    }
    get(j, "snr_sweep_db", s.snr_sweep_db);
    if (j.contains("cfo")) {
        get(j["cfo"], "enabled", s.cfo.enabled);
        get(j["cfo"], "range_hz", s.cfo.range_hz);
        get(j["cfo"], "J", s.cfo.J);
    }
    if (j.contains("detector")) {
        get(j["detector"], "p", s.detector.p);
        get(j["detector"], "P_FA", s.detector.P_FA);
        get(j["detector"], "M", s.detector.M);
    }
    get(j, "trials_per_point", s.trials_per_point);
    get(j, "noise_trials_per_point", s.noise_trials_per_point);
    get(j, "root_seed", s.root_seed);
    get(j, "threads", s.threads);
    if (j.contains("mode")) {
        const auto m = j["mode"].get<std::string>();
        if (m != "SRB" && m != "MRB") throw std::invalid_argument("scenario: mode must be SRB or MRB");
        s.mode = m == "MRB" ? RadioMode::MRB : RadioMode::SRB;
    }
    if (j.contains("timing")) {
        const auto t = j["timing"].get<std::string>();
        if (t != "aligned" && t != "scan") throw std::invalid_argument("scenario: timing must be aligned or scan");
        s.timing = t == "scan" ? TimingMode::scan : TimingMode::aligned;
    }
    return s;
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_scenario: cannot open " + path);
    f << scenario_to_json(s) << '\n';
    if (!f) throw std::runtime_error("save_scenario: write failed for " + path);
}

Scenario load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_scenario: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    try {
        return scenario_from_json(ss.str());
    } catch (const json::exception& e) {
        throw std::runtime_error("load_scenario: " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------- IQ files

namespace {

constexpr char kMagic[8] = {'O', 'F', 'M', 'T', 'I', 'Q', '1', '\0'};

template <class T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto b = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(b.begin(), b.end());
        return std::bit_cast<T>(b);
    }
    return v;
}

}  // namespace

void iq_write(const ComplexSignal& signal, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("iq_write: cannot open " + path);
    f.write(kMagic, 8);
    const std::uint64_t n = to_le(static_cast<std::uint64_t>(signal.size()));
    f.write(reinterpret_cast<const char*>(&n), 8);
    std::vector<float> buf;
    buf.reserve(2 * signal.size());
    for (const auto& v : signal.samples) {
        buf.push_back(to_le(static_cast<float>(v.real())));
        buf.push_back(to_le(static_cast<float>(v.imag())));
    }
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("iq_write: write failed for " + path);

    std::ofstream meta(path + ".json");
    if (!meta) throw std::runtime_error("iq_write: cannot open " + path + ".json");
    meta << json{{"sample_rate_hz", signal.sample_rate_hz}, {"count", signal.size()}}.dump() << '\n';
}

ComplexSignal iq_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("iq_read: cannot open " + path);
    char magic[8];
    std::uint64_t n = 0;
    if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("iq_read: malformed header in " + path);
    if (!f.read(reinterpret_cast<char*>(&n), 8)) throw std::runtime_error("iq_read: malformed header in " + path);
    n = to_le(n);
    f.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::uint64_t>(f.tellg());
    if (n > (bytes - 16) / 8 || bytes - 16 != 8 * n)
        throw std::runtime_error("iq_read: payload size does not match header count in " + path);
    f.seekg(16);
    std::vector<float> buf(static_cast<std::size_t>(2 * n));
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("iq_read: truncated payload in " + path);
    ComplexSignal s;
    s.samples.resize(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < s.samples.size(); ++i) s.samples[i] = {to_le(buf[2 * i]), to_le(buf[2 * i + 1])};
    std::ifstream meta(path + ".json");
    if (meta) {
        std::stringstream ss;
        ss << meta.rdbuf();
        const json j = json::parse(ss.str(), nullptr, false);
        if (j.is_discarded()) throw std::runtime_error("iq_read: malformed sidecar " + path + ".json");
        if (j.contains("sample_rate_hz")) s.sample_rate_hz = j["sample_rate_hz"].get<double>();
    }
    return s;
}

}  // namespace ofmtss
