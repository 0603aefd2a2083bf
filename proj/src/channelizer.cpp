#include "ofmtss/channelizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ofmtss/harness.hpp"

namespace ofmtss {

namespace {

constexpr double kPi = 3.14159265358979323846;

long floor_div(long a, long b) {
    long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

long ceil_div(long a, long b) { return -floor_div(-a, b); }

template <class V>
void compact(V& v, long& base, long keep_from) {
    const long drop = keep_from - base;
    if (drop <= 0) return;
    if (drop < 4096 && drop * 2 < static_cast<long>(v.size())) return;
    const long n = std::min<long>(drop, static_cast<long>(v.size()));
    v.erase(v.begin(), v.begin() + n);
    base += n;
}

}  // namespace

void ChannelizerConfig::validate() const {
    if (L < 2) throw std::invalid_argument("channelizer: L must be >= 2");
    if (r < 2) throw std::invalid_argument("channelizer: r must be >= 2");
    if (L % r != 0) throw std::invalid_argument("channelizer: L must be divisible by r");
    if (prototype.samples_per_symbol != L) throw std::invalid_argument("channelizer: prototype/L mismatch");
    if (static_cast<int>(code.gains.size()) != L) throw std::invalid_argument("channelizer: code length must be L");
    if (preamble_symbols.empty()) throw std::invalid_argument("channelizer: empty preamble");
    if (p < 1 || p >= L) throw std::invalid_argument("channelizer: need 1 <= p < L");
    if (M < 1 || L % M != 0 || p % M != 0)
        throw std::invalid_argument("channelizer: L and p must be divisible by M");
    if (M > 1 && ((L / r) % M != 0 || prototype.half_length() % M != 0))
        throw std::invalid_argument("channelizer: hop and pulse delay must be multiples of M");
    if (fixed_power && static_cast<int>(fixed_power->size()) != L)
        throw std::invalid_argument("channelizer: fixed power must have L entries");
}

ChannelizerConfig make_channelizer_config(const WaveformConfig& w, int p, int M, int r) {
    ChannelizerConfig c;
    c.L = w.L;
    c.r = r;
    c.prototype = w.prototype;
    c.code = w.code;
    c.preamble_symbols = w.preamble_symbols;
    c.p = p;
    c.M = M;
    c.validate();
    return c;
}

// ---------------------------------------------------------------- FIFO

FifoHistory::FifoHistory(int bands, int capacity)
    : bands_(bands), capacity_(capacity),
      ring_(static_cast<std::size_t>(capacity), cvec(static_cast<std::size_t>(bands))),
      sums_(static_cast<std::size_t>(bands), 0.0) {
    if (bands < 1 || capacity < 1) throw std::invalid_argument("FifoHistory: bands and capacity must be >= 1");
}

void FifoHistory::push(const cvec& column) {
    if (static_cast<int>(column.size()) != bands_) throw std::invalid_argument("FifoHistory: band count mismatch");
    cvec& slot = ring_[static_cast<std::size_t>(head_)];
    for (int k = 0; k < bands_; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        if (count_ == capacity_) sums_[ks] -= std::norm(slot[ks]);
        sums_[ks] += std::norm(column[ks]);
        slot[ks] = column[ks];
    }
    head_ = (head_ + 1) % capacity_;
    if (count_ < capacity_) ++count_;
    // Re-sum periodically so the running sums cannot drift.
    if (++pushes_ % capacity_ == 0) {
        std::fill(sums_.begin(), sums_.end(), 0.0);
        for (int i = 0; i < count_; ++i)
            for (int k = 0; k < bands_; ++k)
                sums_[static_cast<std::size_t>(k)] += std::norm(ring_[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
    }
}

std::vector<double> FifoHistory::mean_power() const {
    if (count_ == 0) throw std::logic_error("FifoHistory: empty history");
    std::vector<double> out(sums_);
    for (auto& v : out) v = std::max(0.0, v) / count_;
    return out;
}

BandPowerEstimate floor_power(std::vector<double> phi, double floor_ratio) {
    if (phi.empty()) throw std::invalid_argument("floor_power: empty estimate");
    std::vector<double> tmp(phi);
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<long>(tmp.size() / 2), tmp.end());
    const double floor = std::max(floor_ratio * tmp[tmp.size() / 2], 1e-300);
    for (auto& v : phi) v = std::max(v, floor);
    return BandPowerEstimate{std::move(phi)};
}

BandPowerEstimate estimate_band_power(const FifoHistory& history, double psd_scale, double floor_ratio) {
    if (history.empty()) throw std::invalid_argument("estimate_band_power: empty history");
    std::vector<double> phi = history.mean_power();
    for (auto& v : phi) v *= psd_scale;
    return floor_power(std::move(phi), floor_ratio);
}

// ---------------------------------------------------------------- AFB

AnalysisFilterBank::AnalysisFilterBank(const PrototypeFilter& prototype, int r, double input_rate_hz)
    : L_(prototype.samples_per_symbol), D_(0), S_(prototype.half_length()), rate_(input_rate_hz),
      Lh_(static_cast<int>(prototype.taps.size())), h_(prototype.taps) {
    if (r < 2) throw std::invalid_argument("afb: r must be >= 2");
    if (L_ < 2 || L_ % r != 0) throw std::invalid_argument("afb: L must be divisible by r");
    D_ = L_ / r;
    ring_.assign(static_cast<std::size_t>(2 * Lh_), cplx{});
    u_.assign(static_cast<std::size_t>(L_), cplx{});
}

SubbandFrame AnalysisFilterBank::process(const cvec& input) {
    SubbandFrame frame;
    frame.bands = L_;
    frame.first_hop = hop_;
    frame.band_rate_hz = rate_ / D_;
    const long two_l = 2L * L_;
    for (const cplx x : input) {
        // x'[n] = x[n] e^{j pi (L+1) n / L}
        const long r = ((L_ + 1L) * (n_ % two_l)) % two_l;
        const cplx xm = x * std::polar(1.0, kPi * static_cast<double>(r) / L_);
        ring_[static_cast<std::size_t>(pos_)] = xm;
        ring_[static_cast<std::size_t>(pos_ + Lh_)] = xm;
        if (n_ % D_ == 0) {
            // u[rho] = sum_{i: (n - i) mod L = rho} h[i] x'[n - i]; newest at pos_ + Lh_.
            std::fill(u_.begin(), u_.end(), cplx{});
            const cplx* newest = &ring_[static_cast<std::size_t>(pos_ + Lh_)];
            int rho = static_cast<int>(n_ % L_);
            for (int i = 0; i < Lh_; ++i) {
                u_[static_cast<std::size_t>(rho)] += h_[static_cast<std::size_t>(i)] * *(newest - i);
                if (--rho < 0) rho += L_;
            }
            cvec col = u_;
            fft_unscaled(col, false);
            frame.columns.push_back(std::move(col));
            ++hop_;
        }
        pos_ = (pos_ + 1) % Lh_;
        ++n_;
    }
    return frame;
}

// ---------------------------------------------------------------- SFB

SynthesisFilterBank::SynthesisFilterBank(int D, int S, int K, int out_decim, int interp_half, double beta)
    : D_(D), S_(S), K_(K), dec_(out_decim), Sf_(interp_half) {
    if (D < 1 || K < 1 || out_decim < 1 || interp_half < D)
        throw std::invalid_argument("sfb: invalid geometry");
    f_.resize(static_cast<std::size_t>(2 * Sf_ + 1));
    const double i0b = std::cyl_bessel_i(0.0, beta);
    for (int d = -Sf_; d <= Sf_; ++d) {
        const double x = static_cast<double>(d) / D_;
        const double sinc = d == 0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
        const double w = static_cast<double>(d) / Sf_;
        const double win = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - w * w))) / i0b;
        f_[static_cast<std::size_t>(d + Sf_)] = sinc * win;
    }
    phase_.resize(static_cast<std::size_t>(2 * K_));
    for (int o = 0; o < 2 * K_; ++o) {
        const long r = ((K_ + 1L) * o) % (2L * K_);
        phase_[static_cast<std::size_t>(o)] = std::polar(1.0, -kPi * static_cast<double>(r) / K_);
    }
}

void SynthesisFilterBank::push_hop(const cvec& a, cvec& out) {
    if (static_cast<int>(a.size()) != K_) throw std::invalid_argument("sfb: band count mismatch");
    b_ = a;
    fft_unscaled(b_, true);
    const long tm = hop_ * D_ - S_;
    const long t_hi = tm + Sf_;
    if (t_hi >= 0) {
        const long o_lo = ceil_div(std::max(0L, tm - Sf_), dec_);
        const long o_hi = floor_div(t_hi, dec_);
        while (acc_base_ + static_cast<long>(acc_.size()) <= o_hi) acc_.push_back(cplx{});
        for (long o = std::max(o_lo, acc_base_); o <= o_hi; ++o) {
            const long d = o * dec_ - tm;
            const cplx v = phase_[static_cast<std::size_t>(o % (2L * K_))] * b_[static_cast<std::size_t>(o % K_)];
            acc_[static_cast<std::size_t>(o - acc_base_)] += f_[static_cast<std::size_t>(d + Sf_)] * v;
        }
    }
    ++hop_;
    // Later hops only reach outputs at t >= t_{m+1} - Sf.
    const long limit = hop_ * D_ - S_ - Sf_;
    while (acc_base_ * dec_ < limit) {
        if (acc_.empty()) {
            out.push_back(cplx{});
        } else {
            out.push_back(acc_.front());
            acc_.pop_front();
        }
        ++acc_base_;
    }
}

SynthesisFilterBank make_synthesis_bank(const ChannelizerConfig& cfg) {
    cfg.validate();
    return SynthesisFilterBank(cfg.hop(), cfg.pulse_delay(), cfg.L, 1, cfg.interp_half_symbols * cfg.L,
                               cfg.interp_beta);
}

ComplexSignal whiten_and_synthesize(const SubbandFrame& frame, const BandPowerEstimate& power,
                                    const ChannelizerConfig& cfg, SynthesisFilterBank& state) {
    if (frame.bands != cfg.L || static_cast<int>(power.phi_hat.size()) != cfg.L)
        throw std::invalid_argument("whiten_and_synthesize: band count mismatch");
    ComplexSignal out;
    out.sample_rate_hz = frame.band_rate_hz * cfg.L / cfg.r;
    cvec a(static_cast<std::size_t>(cfg.L));
    for (const auto& col : frame.columns) {
        if (static_cast<int>(col.size()) != cfg.L) throw std::invalid_argument("whiten_and_synthesize: ragged frame");
        for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::conj(cfg.code.gains[k]) * col[k] / power.phi_hat[k];
        state.push_hop(a, out.samples);
    }
    return out;
}

// ---------------------------------------------------------------- matched filter

Eigen::MatrixXcd matched_filter_bank(const ComplexSignal& yprime, const ChannelizerConfig& cfg) {
    const long N = cfg.N(), L = cfg.L, p = cfg.p;
    const long len = static_cast<long>(yprime.size());
    const long cols = len - (N - 1) * L - (p - 1);
    if (cols <= 0) return Eigen::MatrixXcd(p, 0);
    // z[t] for t < cols + p - 1.
    const long nz = cols + p - 1;
    cvec z(static_cast<std::size_t>(nz));
    for (long t = 0; t < nz; ++t) {
        cplx acc{};
        for (long n = 0; n < N; ++n) acc += std::conj(cfg.preamble_symbols[static_cast<std::size_t>(n)]) * yprime.samples[static_cast<std::size_t>(t + n * L)];
        z[static_cast<std::size_t>(t)] = acc;
    }
    Eigen::MatrixXcd B(p, cols);
    for (long m = 0; m < cols; ++m)
        for (long l = 0; l < p; ++l) B(l, m) = z[static_cast<std::size_t>(m + l)];
    return B;
}

std::vector<double> srb_statistic_stream(const Eigen::MatrixXcd& branches, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("srb_statistic_stream: beta must be positive");
    std::vector<double> T(static_cast<std::size_t>(branches.cols()));
    for (Eigen::Index m = 0; m < branches.cols(); ++m) T[static_cast<std::size_t>(m)] = 2.0 / beta * branches.col(m).squaredNorm();
    return T;
}

// ---------------------------------------------------------------- stream detector

StreamDetector::StreamDetector(const ChannelizerConfig& cfg)
    : cfg_(cfg), afb_(cfg.prototype, cfg.r), fifo_(cfg.L, cfg.r * cfg.N()) {
    cfg_.validate();
    const int K = cfg_.K();
    for (int m = 0; m < cfg_.M; ++m) {
        Group g{m * K,
                K,
                cfg_.M,
                cfg_.M == 1 ? cfg_.p : cfg_.q(),
                static_cast<double>(K),
                1.0,
                SynthesisFilterBank(cfg_.hop(), cfg_.pulse_delay(), K, cfg_.M, cfg_.interp_half_symbols * cfg_.L,
                                    cfg_.interp_beta),
                {}, 0, {}, 0, 0, {}, {}, {}};
        groups_.push_back(std::move(g));
    }
    conj_code_.resize(cfg_.code.gains.size());
    for (std::size_t k = 0; k < conj_code_.size(); ++k) conj_code_[k] = std::conj(cfg_.code.gains[k]);
    conj_symbols_.resize(cfg_.preamble_symbols.size());
    for (std::size_t n = 0; n < conj_symbols_.size(); ++n) conj_symbols_[n] = std::conj(cfg_.preamble_symbols[n]);
    phi_full_.assign(static_cast<std::size_t>(cfg_.L), 1.0);
    // First window whose synthesized samples all come from hops with a full FIFO.
    if (!cfg_.fixed_power)
        warm_ = (static_cast<long>(cfg_.r) * cfg_.N() - 1) * cfg_.hop() - cfg_.pulse_delay() +
                static_cast<long>(cfg_.interp_half_symbols) * cfg_.L;
}

void StreamDetector::set_eval_range(long lo, long hi) {
    eval_lo_ = lo;
    eval_hi_ = hi;
    ranged_ = true;
}

bool StreamDetector::wanted_stat(const Group& g, long t) const {
    if (t * g.dec < warm_) return false;
    if (!ranged_) return true;
    return t * g.dec >= eval_lo_ && t * g.dec <= eval_hi_;
}

bool StreamDetector::wanted_z(const Group& g, long t) const {
    if (!ranged_) return true;
    return t * g.dec >= eval_lo_ && (t - g.taps + 1) * g.dec <= eval_hi_;
}

void StreamDetector::push(const cvec& input, std::vector<StatisticSample>& out) {
    push(input.data(), input.size(), out);
}

void StreamDetector::push(const cplx* input, std::size_t n, std::vector<StatisticSample>& out) {
    // Feed the AFB one hop at a time so whitening uses the power estimate of that hop.
    const std::size_t D = static_cast<std::size_t>(cfg_.hop());
    cvec chunk;
    std::size_t i = 0;
    while (i < n) {
        const std::size_t take = std::min(D, n - i);
        chunk.assign(input + i, input + i + take);
        i += take;
        SubbandFrame f = afb_.process(chunk);
        for (auto& col : f.columns) process_hop(col, out);
    }
}

void StreamDetector::process_hop(const cvec& column, std::vector<StatisticSample>& out) {
    if (capture_sub_) sub_.push_back(column);
    fifo_.push(column);
    if (cfg_.fixed_power) {
        phi_full_ = *cfg_.fixed_power;
    } else {
        phi_full_ = fifo_.mean_power();
    }

    long first = 0;
    for (auto& g : groups_) {
        // Per-group PSD in the group's own units, floored over the group.
        std::vector<double> phi(phi_full_.begin() + g.k0, phi_full_.begin() + g.k0 + g.K);
        if (!cfg_.fixed_power) {
            for (auto& v : phi) v *= g.psd_scale;
        } else {
            for (auto& v : phi) v *= g.psd_scale / cfg_.L;
        }
        phi = floor_power(std::move(phi), cfg_.power_floor_ratio).phi_hat;
        double inv_sum = 0.0;
        for (double v : phi) inv_sum += 1.0 / v;
        g.beta = static_cast<double>(cfg_.N()) / g.K * inv_sum;

        cvec a(static_cast<std::size_t>(g.K));
        for (int k = 0; k < g.K; ++k) {
            const auto kk = static_cast<std::size_t>(g.k0 + k);
            a[static_cast<std::size_t>(k)] = conj_code_[kk] * column[kk] / phi[static_cast<std::size_t>(k)];
        }
        g.fresh.clear();
        g.sfb.push_hop(a, g.fresh);
        if (capture_) g.captured.insert(g.captured.end(), g.fresh.begin(), g.fresh.end());
        g.y.insert(g.y.end(), g.fresh.begin(), g.fresh.end());
        run_group(g, first);
    }

    const std::size_t count = groups_.front().stats.size();
    for (std::size_t i = 0; i < count; ++i) {
        double v = 0.0;
        for (const auto& g : groups_) v += g.stats[i];
        out.push_back(StatisticSample{(first + static_cast<long>(i)) * groups_.front().dec, v});
    }
}

void StreamDetector::run_group(Group& g, long& first_index) {
    const long N = cfg_.N();
    const long K = g.K;
    const long y_end = g.y_base + static_cast<long>(g.y.size());
    long z_end = g.z_base + static_cast<long>(g.z.size());
    while (z_end + (N - 1) * K < y_end) {
        cplx acc{};
        if (wanted_z(g, z_end)) {
            const cplx* yp = g.y.data() + (z_end - g.y_base);
            for (long n = 0; n < N; ++n) acc += conj_symbols_[static_cast<std::size_t>(n)] * yp[n * K];
        }
        g.z.push_back(acc);
        ++z_end;
    }

    g.stats.clear();
    bool first_set = false;
    const double scale = 2.0 / g.beta;
    while (g.next_stat + g.taps - 1 < z_end) {
        const long t = g.next_stat++;
        if (!wanted_stat(g, t)) continue;
        double s = 0.0;
        const cplx* zp = g.z.data() + (t - g.z_base);
        for (int l = 0; l < g.taps; ++l) s += std::norm(zp[l]);
        if (!first_set) {
            first_index = t;
            first_set = true;
        }
        g.stats.push_back(scale * s);
    }
    compact(g.y, g.y_base, z_end);
    compact(g.z, g.z_base, g.next_stat);
}

DetectionResult detect_stream(const ComplexSignal& input, const ChannelizerConfig& cfg, double threshold) {
    DetectionResult res;
    if (input.empty()) return res;
    StreamDetector det(cfg);
    std::vector<StatisticSample> stats;
    det.push(input.samples, stats);
    // Flush so every window inside the input is finalized.
    const long tail = cfg.pulse_delay() + cfg.interp_half_symbols * cfg.L + 2L * cfg.hop();
    det.push(cvec(static_cast<std::size_t>(tail), cplx{}), stats);
    const long S = cfg.pulse_delay();
    const long last = static_cast<long>(input.size()) - 1;
    for (const auto& s : stats) {
        if (s.index > last) break;
        const DetectionEvent ev{s.index - S, s.value};
        if (s.value > threshold) res.events.push_back(ev);
        if (!res.argmax || s.value > res.argmax->statistic) res.argmax = ev;
    }
    return res;
}

void dump_subbands(const SubbandFrame& frame, const std::string& prefix) {
    for (int k = 0; k < frame.bands; ++k) {
        ComplexSignal s;
        s.sample_rate_hz = frame.band_rate_hz > 0.0 ? frame.band_rate_hz : 1.0;
        for (const auto& col : frame.columns) s.samples.push_back(col[static_cast<std::size_t>(k)]);
        char name[32];
        std::snprintf(name, sizeof(name), "_band%03d.iq", k);
        iq_write(s, prefix + name);
    }
}

}  // namespace ofmtss
