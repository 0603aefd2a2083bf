#pragma once

#include <Eigen/Dense>

#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ofmtss/numerics.hpp"
#include "ofmtss/waveform.hpp"

namespace ofmtss {

struct ChannelizerConfig {
    int L = 0;
    int r = 2;
    PrototypeFilter prototype;
    SpreadingCode code;
    cvec preamble_symbols;
    int p = 1;
    // Radio bands for the parallel (MRB) arrangement; 1 = single wideband chain.
    int M = 1;
    // Synthesis interpolator: half-length in symbols and Kaiser beta.
    int interp_half_symbols = 3;
    double interp_beta = 6.0;
    double power_floor_ratio = 1e-6;
    // Freeze the per-band PSD (length L, full-rate units) instead of estimating it.
    std::optional<std::vector<double>> fixed_power;

    int hop() const { return L / r; }
    int N() const { return static_cast<int>(preamble_symbols.size()); }
    int K() const { return L / M; }
    int q() const { return p / M; }
    int pulse_delay() const { return prototype.half_length(); }
    void validate() const;
};

ChannelizerConfig make_channelizer_config(const WaveformConfig& w, int p, int M = 1, int r = 2);

struct SubbandFrame {
    int bands = 0;
    double band_rate_hz = 0.0;
    long first_hop = 0;
    std::vector<cvec> columns;  // columns[m][k]: band k at hop first_hop + m
    std::size_t length() const { return columns.size(); }
};

struct BandPowerEstimate {
    std::vector<double> phi_hat;
};

class FifoHistory {
public:
    FifoHistory(int bands, int capacity);
    void push(const cvec& column);
    bool full() const { return count_ == capacity_; }
    bool empty() const { return count_ == 0; }
    int bands() const { return bands_; }
    int capacity() const { return capacity_; }
    int count() const { return count_; }
    // Mean |v_k|^2 over the stored samples.
    std::vector<double> mean_power() const;

private:
    int bands_;
    int capacity_;
    int count_ = 0;
    int head_ = 0;
    long pushes_ = 0;
    std::vector<cvec> ring_;
    std::vector<double> sums_;
};

BandPowerEstimate estimate_band_power(const FifoHistory& history, double psd_scale, double floor_ratio = 1e-6);
BandPowerEstimate floor_power(std::vector<double> phi, double floor_ratio);

// Hop m consumes input through index m*D and yields band k evaluated at the
// prototype center, time t_m = m*D - S.
class AnalysisFilterBank {
public:
    AnalysisFilterBank(const PrototypeFilter& prototype, int r, double input_rate_hz = 1.0);
    SubbandFrame process(const cvec& input);
    long hops() const { return hop_; }
    int bands() const { return L_; }
    int hop_size() const { return D_; }

private:
    int L_, D_, S_;
    double rate_;
    int Lh_;
    std::vector<double> h_;
    cvec ring_;  // doubled ring of modulated input
    int pos_ = 0;
    long n_ = 0;
    long hop_ = 0;
    cvec u_;
};

// Reassembles K bands into a stream at 1/out_decim of the input rate. The
// caller passes the group's K weighted band values per hop; output sample o
// sits at input time o*out_decim and is mixed so the group is centered at 0 Hz.
class SynthesisFilterBank {
public:
    SynthesisFilterBank(int D, int S, int K, int out_decim, int interp_half, double beta);
    void push_hop(const cvec& a, cvec& out);
    long emitted() const { return acc_base_; }

private:
    int D_, S_, K_, dec_, Sf_;
    std::vector<double> f_;
    cvec phase_;  // e^{-j pi (K+1) o / K}, period 2K
    cvec b_;
    std::deque<cplx> acc_;
    long acc_base_ = 0;  // output index of acc_.front()
    long hop_ = 0;
};

// Whiten with gamma_k^* / phi_k and resynthesize (single wideband chain).
ComplexSignal whiten_and_synthesize(const SubbandFrame& frame, const BandPowerEstimate& power,
                                    const ChannelizerConfig& cfg, SynthesisFilterBank& state);
SynthesisFilterBank make_synthesis_bank(const ChannelizerConfig& cfg);

// branches(l, m) = sum_n s*[n] y'[m + l + nL], for every m with a complete window.
Eigen::MatrixXcd matched_filter_bank(const ComplexSignal& yprime, const ChannelizerConfig& cfg);

std::vector<double> srb_statistic_stream(const Eigen::MatrixXcd& branches, double beta);

struct StatisticSample {
    long index;  // window start on the synthesized stream (input sample time)
    double value;
};

struct DetectionEvent {
    long index;  // estimated first sample of the preamble in the input
    double statistic;
};

struct DetectionResult {
    std::vector<DetectionEvent> events;
    std::optional<DetectionEvent> argmax;
};

// Full streaming pipeline: AFB, FIFO power estimate, whitening, SFB per radio
// group, matched filter and the combined Rao statistic at every window start.
class StreamDetector {
public:
    explicit StreamDetector(const ChannelizerConfig& cfg);

    // Statistics start once the power history is full (unless the PSD is frozen).
    long warm_up() const { return warm_; }
    // Restrict statistic evaluation to window starts in [lo, hi] (input time).
    void set_eval_range(long lo, long hi);
    void push(const cvec& input, std::vector<StatisticSample>& out);
    void push(const cplx* input, std::size_t n, std::vector<StatisticSample>& out);

    const std::vector<double>& current_phi() const { return phi_full_; }
    double current_beta(int group = 0) const { return groups_[static_cast<std::size_t>(group)].beta; }
    const ChannelizerConfig& config() const { return cfg_; }
    // Optional capture of the synthesized streams (for tests).
    void capture_yprime(bool on) { capture_ = on; }
    const cvec& yprime(int group = 0) const { return groups_[static_cast<std::size_t>(group)].captured; }
    // Optional capture of AFB output columns.
    void capture_subbands(bool on) { capture_sub_ = on; }
    const std::vector<cvec>& subbands() const { return sub_; }

private:
    struct Group {
        int k0 = 0;
        int K = 0;
        int dec = 1;
        int taps = 1;  // matched-filter lags (p or q)
        double psd_scale = 1.0;
        double beta = 1.0;
        SynthesisFilterBank sfb;
        cvec y;  // radio-rate samples; y[0] has index y_base
        long y_base = 0;
        cvec z;  // correlator outputs; z[0] has index z_base
        long z_base = 0;
        long next_stat = 0;
        cvec fresh;
        cvec captured;
        std::vector<double> stats;
    };

    void process_hop(const cvec& column, std::vector<StatisticSample>& out);
    void run_group(Group& g, long& first_index);
    bool wanted_z(const Group& g, long t) const;
    bool wanted_stat(const Group& g, long t) const;

    ChannelizerConfig cfg_;
    AnalysisFilterBank afb_;
    FifoHistory fifo_;
    std::vector<Group> groups_;
    std::vector<double> phi_full_;
    cvec conj_code_;
    cvec conj_symbols_;
    long warm_ = std::numeric_limits<long>::min();
    long eval_lo_ = 0;
    long eval_hi_ = -1;
    bool ranged_ = false;
    bool capture_ = false;
    bool capture_sub_ = false;
    std::vector<cvec> sub_;
};

DetectionResult detect_stream(const ComplexSignal& input, const ChannelizerConfig& cfg, double threshold);

// Debug dump: one IQ file per band (prefix_bandKKK.iq).
void dump_subbands(const SubbandFrame& frame, const std::string& prefix);

}  // namespace ofmtss
