#include "ofmtss/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace ofmtss {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

}  // namespace

void DetectionConfig::validate(int L) const {
    if (p < 1) throw std::invalid_argument("DetectionConfig: p must be >= 1");
    if (!(P_FA > 0.0 && P_FA < 1.0)) throw std::invalid_argument("DetectionConfig: P_FA must be in (0,1)");
    if (J < 1) throw std::invalid_argument("DetectionConfig: J must be >= 1");
    if (M < 1 || L % M != 0 || p % M != 0)
        throw std::invalid_argument("DetectionConfig: L and p must be divisible by M");
}

double compute_beta(const std::vector<double>& phi_hat, int N, int L) {
    if (N < 1 || L < 1) throw std::invalid_argument("compute_beta: N and L must be positive");
    if (static_cast<int>(phi_hat.size()) != L) throw std::invalid_argument("compute_beta: expected L estimates");
    double s = 0.0;
    for (double v : phi_hat) {
        if (!(v > 0.0)) throw std::invalid_argument("compute_beta: non-positive PSD estimate");
        s += 1.0 / v;
    }
    return static_cast<double>(N) / L * s;
}

double per_candidate_pfa(double P_FA, int J) {
    if (!(P_FA > 0.0 && P_FA < 1.0)) throw std::invalid_argument("threshold: P_FA must be in (0,1)");
    if (J < 1) throw std::invalid_argument("threshold: J must be >= 1");
    if (J == 1) return P_FA;
    if (P_FA < 1e-3) return P_FA / J;
    return -std::expm1(std::log1p(-P_FA) / J);
}

double threshold(double P_FA, int p, int J) {
    if (p < 1) throw std::invalid_argument("threshold: p must be >= 1");
    return chi2_tail_inv(2 * p, per_candidate_pfa(P_FA, J));
}

double rao_exact(const Eigen::VectorXcd& y, const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& C) {
    if (C.rows() != C.cols() || C.rows() != y.size() || H.rows() != y.size())
        throw std::invalid_argument("rao_exact: dimension mismatch");
    Eigen::LLT<Eigen::MatrixXcd> llt(C);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("rao_exact: covariance not positive definite");
    const Eigen::MatrixXcd CiH = llt.solve(H);
    const Eigen::VectorXcd u = CiH.adjoint() * y;
    const Eigen::MatrixXcd F = H.adjoint() * CiH;
    Eigen::LLT<Eigen::MatrixXcd> fl(F);
    if (fl.info() != Eigen::Success) throw std::invalid_argument("rao_exact: singular Fisher information");
    return 2.0 * std::real(u.dot(fl.solve(u)));
}

int band_of_bin(long j, int N, int L) {
    const long NL = static_cast<long>(N) * L;
    j = ((j % NL) + NL) % NL;
    const long k = (2 * j + static_cast<long>(N) * (L + 2)) / (2L * N);
    return static_cast<int>(k % L);
}

double rao_low_complexity(const Eigen::VectorXcd& y, const Eigen::MatrixXcd& H, const std::vector<double>& phi_hat,
                          double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("rao_low_complexity: beta must be positive");
    const int L = static_cast<int>(phi_hat.size());
    const long NL = y.size();
    if (L < 1 || NL % L != 0 || H.rows() != NL) throw std::invalid_argument("rao_low_complexity: dimension mismatch");
    const int N = static_cast<int>(NL / L);
    cvec Y(y.data(), y.data() + NL);
    Y = dft(Y);
    for (long j = 0; j < NL; ++j) Y[static_cast<std::size_t>(j)] /= phi_hat[static_cast<std::size_t>(band_of_bin(j, N, L))];
    Y = dft(Y, true);
    const Eigen::VectorXcd yw = Eigen::Map<const Eigen::VectorXcd>(Y.data(), NL);
    return 2.0 / beta * (H.adjoint() * yw).squaredNorm();
}

Eigen::MatrixXcd per_band_covariance(const std::vector<double>& phi, int N, int L) {
    if (static_cast<int>(phi.size()) != L) throw std::invalid_argument("per_band_covariance: expected L entries");
    const long NL = static_cast<long>(N) * L;
    cvec lam(static_cast<std::size_t>(NL));
    for (long j = 0; j < NL; ++j) lam[static_cast<std::size_t>(j)] = phi[static_cast<std::size_t>(band_of_bin(j, N, L))];
    fft_unscaled(lam, true);
    Eigen::MatrixXcd C(NL, NL);
    for (long a = 0; a < NL; ++a)
        for (long b = 0; b < NL; ++b) C(a, b) = lam[static_cast<std::size_t>(((a - b) % NL + NL) % NL)] / static_cast<double>(NL);
    return C;
}

double mrb_combine(const std::vector<double>& per_band_statistics) {
    if (per_band_statistics.empty()) throw std::invalid_argument("mrb_combine: empty list");
    double s = 0.0;
    for (double v : per_band_statistics) s += v;
    return s;
}

double noncentrality_srb(const cvec& theta, const std::vector<double>& phi, int N, int L) {
    if (theta.empty()) throw std::invalid_argument("noncentrality_srb: empty theta");
    double inv = 0.0;
    for (double v : phi) {
        if (!(v > 0.0)) throw std::invalid_argument("noncentrality_srb: non-positive PSD");
        inv += 1.0 / v;
    }
    return 2.0 * N / L * energy(theta) * inv;
}

double noncentrality_mrb(const std::vector<cvec>& theta_m, const std::vector<std::vector<double>>& phi_m, int N,
                         int K) {
    if (theta_m.size() != phi_m.size() || theta_m.empty())
        throw std::invalid_argument("noncentrality_mrb: inconsistent radio counts");
    double acc = 0.0;
    for (std::size_t m = 0; m < theta_m.size(); ++m) {
        double inv = 0.0;
        for (double v : phi_m[m]) {
            if (!(v > 0.0)) throw std::invalid_argument("noncentrality_mrb: non-positive PSD");
            inv += 1.0 / v;
        }
        acc += energy(theta_m[m]) * inv;
    }
    return 2.0 * N / K * acc;
}

double theory_pd(double P_FA, int p, double lambda, int J) {
    return noncentral_chi2_tail(2 * p, lambda, threshold(P_FA, p, J));
}

double deflection_pd(double P_FA, double d2) {
    if (d2 < 0.0) throw std::invalid_argument("deflection_pd: d2 must be non-negative");
    return gaussian_q(gaussian_q_inv(P_FA) - std::sqrt(d2));
}

double required_snr_db(double P_FA, double P_D, int p, int N, int L) {
    const double d = gaussian_q_inv(P_FA) - gaussian_q_inv(P_D);
    if (!(d > 0.0)) throw std::invalid_argument("required_snr_db: need P_D > P_FA");
    // d^2 = (N L eta)^2 / p
    return 10.0 * std::log10(d * std::sqrt(static_cast<double>(p)) / (static_cast<double>(N) * L));
}

double required_snr_chi2_db(double P_FA, double P_D, int p, int N, int L, int J) {
    const double pfa_c = per_candidate_pfa(P_FA, J);
    if (!(P_D > pfa_c && P_D < 1.0)) throw std::invalid_argument("required_snr_chi2_db: need P_FA < P_D < 1");
    const double gamma = threshold(P_FA, p, J);
    double lo = 0.0, hi = 1.0;
    while (noncentral_chi2_tail(2 * p, hi, gamma) < P_D) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (noncentral_chi2_tail(2 * p, mid, gamma) < P_D) lo = mid; else hi = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    return 10.0 * std::log10(lambda / (2.0 * N * L));
}

double scalloping_loss_db(double offset_hz, double duration_s) {
    const double s = std::abs(sinc(offset_hz * duration_s));
    return -20.0 * std::log10(std::max(s, 1e-300));
}

int cfo_grid_size(double range_hz, double duration_s, double max_loss_db) {
    if (!(range_hz >= 0.0) || !(duration_s > 0.0) || !(max_loss_db > 0.0))
        throw std::invalid_argument("cfo_grid_size: invalid arguments");
    if (range_hz == 0.0) return 1;
    // Largest x = offset*T with loss <= max_loss (sinc is monotone on [0, 1)).
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (scalloping_loss_db(mid, 1.0) <= max_loss_db) lo = mid; else hi = mid;
    }
    const double spacing = 2.0 * lo / duration_s;
    return static_cast<int>(std::ceil(2.0 * range_hz / spacing)) + 1;
}

std::vector<double> cfo_grid(double range_hz, int J) {
    if (J < 1) throw std::invalid_argument("cfo_grid: J must be >= 1");
    if (J == 1) return {0.0};
    std::vector<double> g(static_cast<std::size_t>(J));
    for (int i = 0; i < J; ++i) g[static_cast<std::size_t>(i)] = -range_hz + 2.0 * range_hz * i / (J - 1);
    return g;
}

TestStatistic cfo_grid_search(const ComplexSignal& stream, const ChannelizerConfig& cfg,
                              const std::vector<double>& grid, long eval_lo, long eval_hi) {
    if (grid.empty()) throw std::invalid_argument("cfo_grid_search: empty grid");
    TestStatistic best;
    bool have = false;
    const long tail = cfg.pulse_delay() + cfg.interp_half_symbols * cfg.L + 2L * cfg.hop();
    const long last = static_cast<long>(stream.size()) - 1;
    const cvec pad(static_cast<std::size_t>(tail), cplx{});
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const ComplexSignal x = apply_cfo(stream, -grid[i]);
        StreamDetector det(cfg);
        if (eval_hi >= eval_lo) det.set_eval_range(eval_lo, eval_hi);
        std::vector<StatisticSample> stats;
        det.push(x.samples, stats);
        det.push(pad, stats);
        for (const auto& s : stats) {
            if (s.index > last) break;
            if (!have || s.value > best.value) {
                best = TestStatistic{s.value, static_cast<int>(i), s.index};
                have = true;
            }
        }
    }
    return best;
}

Eigen::MatrixXcd fim_matrix(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& C) {
    if (C.rows() != C.cols() || C.rows() != H.rows()) throw std::invalid_argument("fim_matrix: dimension mismatch");
    Eigen::LLT<Eigen::MatrixXcd> llt(C);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("fim_matrix: covariance not positive definite");
    return H.adjoint() * llt.solve(H);
}

namespace {

// Per-band PSD of a covariance: diagonal of F C F^H averaged over each band's bins.
std::vector<double> band_psd_of(const Eigen::MatrixXcd& C, int N, int L) {
    const long NL = C.rows();
    cvec s(static_cast<std::size_t>(NL), cplx{});
    for (long a = 0; a < NL; ++a)
        for (long b = 0; b < NL; ++b) s[static_cast<std::size_t>(((a - b) % NL + NL) % NL)] += C(a, b);
    fft_unscaled(s, false);
    std::vector<double> phi(static_cast<std::size_t>(L), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(L), 0);
    for (long j = 0; j < NL; ++j) {
        const auto k = static_cast<std::size_t>(band_of_bin(j, N, L));
        phi[k] += s[static_cast<std::size_t>(j)].real() / static_cast<double>(NL);
        ++cnt[k];
    }
    for (std::size_t k = 0; k < phi.size(); ++k) phi[k] /= std::max(1, cnt[k]);
    return phi;
}

FimReport report_from(const Eigen::MatrixXcd& F, double beta) {
    FimReport r;
    r.beta = beta;
    for (Eigen::Index i = 0; i < F.rows(); ++i)
        for (Eigen::Index j = 0; j < F.cols(); ++j) {
            if (i == j) r.max_diag_deviation = std::max(r.max_diag_deviation, std::abs(F(i, i).real() - beta) / beta);
            else r.max_offdiag_ratio = std::max(r.max_offdiag_ratio, std::abs(F(i, j)) / beta);
        }
    return r;
}

}  // namespace

FimReport fim_approx_report(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& C, int N, int L) {
    if (static_cast<long>(N) * L != C.rows()) throw std::invalid_argument("fim_approx_report: NL must match C");
    const Eigen::MatrixXcd F = fim_matrix(H, C);
    return report_from(F, compute_beta(band_psd_of(C, N, L), N, L));
}

MrbFimReport fim_mrb_report(const std::vector<Eigen::MatrixXcd>& H_m, const std::vector<Eigen::MatrixXcd>& C_m,
                            int N, int K) {
    if (H_m.size() != C_m.size() || H_m.empty()) throw std::invalid_argument("fim_mrb_report: inconsistent inputs");
    MrbFimReport out;
    Eigen::Index total = 0;
    for (const auto& H : H_m) total += H.cols();
    Eigen::MatrixXcd big = Eigen::MatrixXcd::Zero(total, total);
    std::vector<double> inv_beta;
    Eigen::Index off = 0;
    for (std::size_t m = 0; m < H_m.size(); ++m) {
        const Eigen::MatrixXcd F = fim_matrix(H_m[m], C_m[m]);
        const double beta = compute_beta(band_psd_of(C_m[m], N, K), N, K);
        out.blocks.push_back(report_from(F, beta));
        big.block(off, off, F.rows(), F.cols()) = F;
        for (Eigen::Index i = 0; i < F.rows(); ++i) inv_beta.push_back(1.0 / beta);
        off += F.rows();
    }
    const Eigen::MatrixXcd inv = big.inverse();
    for (Eigen::Index i = 0; i < total; ++i)
        for (Eigen::Index j = 0; j < total; ++j) {
            const double ref = i == j ? inv_beta[static_cast<std::size_t>(i)] : 0.0;
            out.max_inverse_deviation =
                std::max(out.max_inverse_deviation, std::abs(inv(i, j) - ref) / inv_beta[static_cast<std::size_t>(i)]);
        }
    // Cross-block entries of the assembled information (zero for independent radios).
    off = 0;
    for (const auto& H : H_m) {
        for (Eigen::Index i = off; i < off + H.cols(); ++i)
            for (Eigen::Index j = 0; j < total; ++j)
                if (j < off || j >= off + H.cols()) out.max_cross_block = std::max(out.max_cross_block, std::abs(big(i, j)));
        off += H.cols();
    }
    return out;
}

std::vector<TheoryRow> theory_curve(const std::vector<double>& eta_db, int p, int N, int L, double P_FA, int J) {
    std::vector<TheoryRow> rows;
    const double pfa_c = per_candidate_pfa(P_FA, J);
    for (double e : eta_db) {
        const double eta = std::pow(10.0, e / 10.0);
        const double lambda = 2.0 * N * L * eta;
        const double d2 = std::pow(static_cast<double>(N) * L * eta, 2) / p;
        rows.push_back(TheoryRow{e, lambda, p, P_FA, J, theory_pd(P_FA, p, lambda, J), deflection_pd(pfa_c, d2)});
    }
    return rows;
}

void write_theory_csv(const std::vector<TheoryRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_theory_csv: cannot open " + path);
    f << "eta_db,lambda,p,P_FA,J,P_D_theory_chi2,P_D_theory_deflection\n";
    f.precision(10);
    for (const auto& r : rows)
        f << r.eta_db << ',' << r.lambda << ',' << r.p << ',' << r.P_FA << ',' << r.J << ',' << r.pd_chi2 << ','
          << r.pd_deflection << '\n';
    if (!f) throw std::runtime_error("write_theory_csv: write failed for " + path);
}

}  // namespace ofmtss
