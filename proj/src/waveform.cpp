#include "ofmtss/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ofmtss {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Symmetric Toeplitz operator (1-c)x + c*(lowpass * x), applied by FFT.
// Shrinks the stopband part of a correction so refinement steps stay in band.
class StopbandMetric {
public:
    StopbandMetric(std::size_t n, double fs, double c) : n_(n), c_(c) {
        std::size_t P = 1;
        while (P < 2 * n) P <<= 1;
        P_ = P;
        cvec k(P, 0.0);
        for (std::size_t d = 0; d < n; ++d) {
            const double x = 2.0 * fs * d;
            const double v = 2.0 * fs * (d == 0 ? 1.0 : std::sin(kPi * x) / (kPi * x));
            k[d] = v;
            if (d > 0) k[P - d] = v;
        }
        fft_unscaled(k, false);
        spectrum_ = std::move(k);
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        cvec buf(P_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) buf[i] = x[static_cast<Eigen::Index>(i)];
        fft_unscaled(buf, false);
        for (std::size_t i = 0; i < P_; ++i) buf[i] *= spectrum_[i];
        fft_unscaled(buf, true);
        Eigen::VectorXd out(static_cast<Eigen::Index>(n_));
        const double s = c_ / static_cast<double>(P_);
        for (std::size_t i = 0; i < n_; ++i) {
            const auto ei = static_cast<Eigen::Index>(i);
            out[ei] = (1.0 - c_) * x[ei] + s * buf[i].real();
        }
        return out;
    }

private:
    std::size_t n_;
    std::size_t P_;
    double c_;
    cvec spectrum_;
};

}  // namespace

std::vector<double> rrc_taps(int L, int span, double a) {
    const int S = L * span / 2;
    std::vector<double> h(static_cast<std::size_t>(2 * S + 1));
    for (int n = -S; n <= S; ++n) {
        const double t = static_cast<double>(n) / L;
        double v;
        if (n == 0) {
            v = 1.0 - a + 4.0 * a / kPi;
        } else if (std::abs(std::abs(4.0 * a * t) - 1.0) < 1e-12) {
            v = a / std::sqrt(2.0) *
                ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * a)) +
                 (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * a)));
        } else {
            v = (std::sin(kPi * t * (1.0 - a)) + 4.0 * a * t * std::cos(kPi * t * (1.0 + a))) /
                (kPi * t * (1.0 - 16.0 * a * a * t * t));
        }
        h[static_cast<std::size_t>(n + S)] = v;
    }
    double e = 0.0;
    for (double v : h) e += v * v;
    const double s = 1.0 / std::sqrt(e);
    for (double& v : h) v *= s;
    return h;
}

PrototypeFilter design_prototype_filter(int L, int span, double rolloff) {
    if (L < 2) throw std::invalid_argument("design_prototype_filter: L must be >= 2");
    if (span < 4) throw std::invalid_argument("design_prototype_filter: span must be >= 4");
    if (!(rolloff > 0.0 && rolloff <= 1.0))
        throw std::invalid_argument("design_prototype_filter: rolloff must be in (0,1]");
    if ((L * span) % 2 != 0)
        throw std::invalid_argument("design_prototype_filter: L*span must be even");

    std::vector<double> h = rrc_taps(L, span, rolloff);
    const int S = L * span / 2;
    const auto Nt = static_cast<Eigen::Index>(h.size());

    // Gauss-Newton projection onto: unit energy, h*h = 0 at lags kL, and the
    // polyphase energies sum_{n = m mod L} h[n]^2 containing no harmonic above
    // the first (this makes energy(g) = L exact for j^k-spread gains).
    // Harmonic constraints cost O(L^2 * taps) per step; skipped for L > 1024.
    const int max_harm = L <= 1024 ? L / 2 : 1;
    const int m = 1 + (span - 1) + std::max(0, max_harm - 1);
    const StopbandMetric metric(h.size(), 1.2 * (1.0 + rolloff) / (2.0 * L), 0.99);

    std::vector<double> best = h;
    double best_res = 1e300;
    Eigen::VectorXd hv = Eigen::Map<const Eigen::VectorXd>(h.data(), Nt);
    for (int it = 0; it < 40; ++it) {
        Eigen::MatrixXd J(m, Nt);
        Eigen::VectorXd c(m);
        int row = 0;
        J.row(row) = 2.0 * hv.transpose();
        c[row++] = hv.squaredNorm() - 1.0;
        for (int k = 1; k < span; ++k) {
            const Eigen::Index lag = static_cast<Eigen::Index>(k) * L;
            const Eigen::Index len = Nt - lag;
            J.row(row).setZero();
            J.row(row).head(len) += hv.tail(len).transpose();
            J.row(row).tail(len) += hv.head(len).transpose();
            c[row++] = hv.head(len).dot(hv.tail(len));
        }
        for (int d = 2; d <= max_harm; ++d) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < Nt; ++i) {
                const long n = static_cast<long>(i) - S;
                const long r = ((d * n) % L + L) % L;
                const double cs = std::cos(2.0 * kPi * static_cast<double>(r) / L);
                J(row, i) = 2.0 * hv[i] * cs;
                acc += hv[i] * hv[i] * cs;
            }
            c[row++] = acc;
        }
        const double res = c.cwiseAbs().maxCoeff();
        if (res < best_res) {
            best_res = res;
            best.assign(hv.data(), hv.data() + Nt);
        }
        if (res < 1e-15) break;

        Eigen::MatrixXd MJt(Nt, m);
        for (int j = 0; j < m; ++j) MJt.col(j) = metric.apply(J.row(j).transpose());
        const Eigen::MatrixXd A = J * MJt;
        const Eigen::VectorXd lam = A.ldlt().solve(c);
        hv -= MJt * lam;
    }

    // Exact symmetry.
    for (std::size_t i = 0; i < best.size() / 2; ++i) {
        const double v = 0.5 * (best[i] + best[best.size() - 1 - i]);
        best[i] = best[best.size() - 1 - i] = v;
    }

    PrototypeFilter f;
    f.taps = std::move(best);
    f.samples_per_symbol = L;
    f.span_symbols = span;
    f.rolloff = rolloff;
    f.design_residual = best_res;
    return f;
}

SpreadingCode spreading_code_from_signs(const std::vector<int>& signs) {
    if (signs.size() < 2) throw std::invalid_argument("spreading code: L must be >= 2");
    static const cplx jpow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    SpreadingCode code;
    code.signs = signs;
    code.gains.resize(signs.size());
    for (std::size_t k = 0; k < signs.size(); ++k) {
        if (signs[k] != 1 && signs[k] != -1)
            throw std::invalid_argument("spreading code: signs must be +1 or -1");
        code.gains[k] = jpow[k % 4] * static_cast<double>(signs[k]);
    }
    return code;
}

SpreadingCode make_spreading_code(int L, std::uint64_t sign_seed) {
    if (L < 2) throw std::invalid_argument("make_spreading_code: L must be >= 2");
    std::mt19937_64 rng(sign_seed);
    std::vector<int> signs(static_cast<std::size_t>(L));
    for (auto& s : signs) s = (rng() >> 63) ? 1 : -1;
    return spreading_code_from_signs(signs);
}

cvec make_preamble_symbols(int N, std::uint64_t seed) {
    if (N < 1) throw std::invalid_argument("make_preamble_symbols: N must be >= 1");
    std::mt19937_64 rng(seed);
    const cplx base = std::polar(1.0, kPi / 4.0);
    static const cplx jpow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    cvec s(static_cast<std::size_t>(N));
    for (auto& v : s) v = base * jpow[rng() >> 62];
    return s;
}

WaveformConfig make_waveform(int L, int N, double symbol_duration, const WaveformOptions& opt) {
    if (N < 1) throw std::invalid_argument("make_waveform: N must be >= 1");
    if (!(symbol_duration > 0.0)) throw std::invalid_argument("make_waveform: T_b must be positive");
    WaveformConfig w;
    w.L = L;
    w.N = N;
    w.symbol_duration = symbol_duration;
    w.prototype = design_prototype_filter(L, opt.span_symbols, opt.rolloff);
    w.code = make_spreading_code(L, opt.code_seed);
    w.preamble_symbols = make_preamble_symbols(N, opt.symbol_seed);
    return w;
}

cvec synthesize_pulse(const PrototypeFilter& h, const cvec& gains) {
    const int L = h.samples_per_symbol;
    if (static_cast<int>(gains.size()) != L)
        throw std::invalid_argument("synthesize_pulse: gain count must equal L");
    const int S = h.half_length();

    // sum_k gamma_k e^{j2pi k m / L}, periodic in m.
    cvec W = gains;
    fft_unscaled(W, true);

    const long two_l = 2 * static_cast<long>(L);
    cvec g(h.taps.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const long n = static_cast<long>(i) - S;
        const long m = ((n % L) + L) % L;
        // e^{-j pi (L+1) n / L}, reduced mod 2L for accuracy.
        const long r = (((L + 1) * n) % two_l + two_l) % two_l;
        const cplx ph = std::polar(1.0, -kPi * static_cast<double>(r) / L);
        g[i] = h.taps[i] * ph * W[static_cast<std::size_t>(m)];
    }
    return g;
}

ComplexSignal synthesize_pulse(const WaveformConfig& config) {
    return ComplexSignal{synthesize_pulse(config.prototype, config.code.gains), config.sample_rate()};
}

cvec autocorrelation(const cvec& g) {
    if (g.empty()) return {};
    const std::size_t n = g.size();
    std::size_t P = 1;
    while (P < 2 * n) P <<= 1;
    cvec G(P, 0.0);
    std::copy(g.begin(), g.end(), G.begin());
    fft_unscaled(G, false);
    for (auto& v : G) v = std::norm(v);
    fft_unscaled(G, true);
    cvec rho(2 * n - 1);
    const double s = 1.0 / static_cast<double>(P);
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const long l = static_cast<long>(i) - static_cast<long>(n - 1);
        rho[i] = G[static_cast<std::size_t>((l + static_cast<long>(P)) % static_cast<long>(P))] * s;
    }
    rho[n - 1] = energy(g);
    return rho;
}

ComplexSignal composite_pulse(const WaveformConfig& config) {
    return ComplexSignal{autocorrelation(synthesize_pulse(config).samples), config.sample_rate()};
}

ComplexSignal generate_preamble(const WaveformConfig& config) {
    const cvec g = synthesize_pulse(config).samples;
    const auto& s = config.preamble_symbols;
    if (static_cast<int>(s.size()) != config.N)
        throw std::invalid_argument("generate_preamble: symbol count must equal N");
    const std::size_t L = static_cast<std::size_t>(config.L);
    cvec out((s.size() - 1) * L + g.size(), 0.0);
    for (std::size_t n = 0; n < s.size(); ++n)
        for (std::size_t i = 0; i < g.size(); ++i) out[n * L + i] += s[n] * g[i];
    return ComplexSignal{std::move(out), config.sample_rate()};
}

Eigen::MatrixXcd build_data_matrix(const LinearModelSpec& spec) {
    if (spec.p < 1) throw std::invalid_argument("build_data_matrix: p must be >= 1");
    if (spec.p >= spec.L) throw std::invalid_argument("build_data_matrix: p must be < L");
    const auto N = static_cast<Eigen::Index>(spec.preamble_symbols.size());
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(N * spec.L, spec.p);
    for (Eigen::Index n = 0; n < N; ++n)
        for (int l = 0; l < spec.p; ++l) H(n * spec.L + l, l) = spec.preamble_symbols[static_cast<std::size_t>(n)];
    return H;
}

}  // namespace ofmtss
