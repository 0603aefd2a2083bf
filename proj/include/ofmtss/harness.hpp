#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ofmtss/channel.hpp"
#include "ofmtss/channelizer.hpp"
#include "ofmtss/detector.hpp"
#include "ofmtss/numerics.hpp"
#include "ofmtss/waveform.hpp"

namespace ofmtss {

enum class RadioMode { SRB, MRB };
// aligned: evaluate the single window that starts on the true preamble
// (known timing). scan: search window starts within p + L of the truth and
// score the maximum.
enum class TimingMode { aligned, scan };

struct WaveformParams {
    int L = 64;
    int N = 32;
    double symbol_duration_s = 128e-9;
    WaveformOptions options;
    int r = 2;
};

struct CfoConfig {
    bool enabled = false;
    double range_hz = 0.0;
    int J = 1;
};

struct Scenario {
    std::string name = "custom";
    WaveformParams waveform;
    DelaySpreadProfile channel_profile;  // decay_constant_ns == 0: flat
    InterferenceConfig interference;
    std::vector<double> snr_sweep_db;
    CfoConfig cfo;
    DetectionConfig detector;
    int trials_per_point = 1000;
    int noise_trials_per_point = -1;  // < 0: same as trials_per_point
    std::uint64_t root_seed = 1;
    RadioMode mode = RadioMode::SRB;
    TimingMode timing = TimingMode::aligned;
    int threads = 0;  // 0: hardware concurrency

    void validate() const;
};

struct CurvePoint {
    double eta_db = 0.0;
    double p_d_empirical = 0.0;
    double p_d_theory = 0.0;
    double p_fa_empirical = 0.0;
    int trials = 0;
    std::pair<double, double> wilson_ci{0.0, 0.0};
};

std::pair<double, double> wilson_interval(long successes, long n, double z = 1.959963984540054);
std::pair<double, double> clopper_pearson(long successes, long n, double confidence = 0.95);

Scenario preset(const std::string& name);
std::vector<std::string> preset_names();

// Built once per scenario and shared across trials.
struct ScenarioContext {
    Scenario scenario;
    WaveformConfig waveform;
    ComplexSignal preamble;
    cvec rho;
    ChannelizerConfig channelizer;
    double threshold = 0.0;
    std::vector<double> cfo_grid;
};
ScenarioContext make_context(const Scenario& s);

struct TrialOutcome {
    bool detected = false;
    double statistic = 0.0;
    long index_error = 0;
};
// One trial. signal = false gives a noise-only trial on the same stream layout.
TrialOutcome run_trial(const ScenarioContext& ctx, double eta_db, std::uint64_t seed, bool signal);

CurvePoint run_point(const Scenario& scenario, double eta_db, int point_index = 0);
CurvePoint run_point(const ScenarioContext& ctx, double eta_db, int point_index = 0);

// Maps run_point over the sweep. When csv_path is non-empty, completed points
// go to csv_path + ".partial" as they finish and are reused on restart.
std::vector<CurvePoint> run_curve(const Scenario& scenario, const std::string& csv_path = "",
                                  const std::function<void(const CurvePoint&)>& progress = {});

// Empirical false-alarm rate over `windows` noise-only windows of one long
// white-noise stream, spaced far enough apart to be nearly independent.
struct FalseAlarmResult {
    long windows = 0;
    long alarms = 0;
    double rate() const { return windows ? static_cast<double>(alarms) / windows : 0.0; }
};
FalseAlarmResult run_false_alarm(const Scenario& scenario, long windows, std::uint64_t seed);

void write_curve_csv(const std::vector<CurvePoint>& pts, const std::string& path);
std::string curve_csv_header();
std::string curve_csv_row(const CurvePoint& p);

void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

// IQ file: "OFMTIQ1\0", u64 LE count, then float32 LE (re, im) pairs. The
// sample rate goes in a one-line JSON sidecar at path + ".json".
void iq_write(const ComplexSignal& signal, const std::string& path);
ComplexSignal iq_read(const std::string& path);

}  // namespace ofmtss
