#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "ofmtss/detector.hpp"

using namespace ofmtss;

namespace {

Eigen::VectorXcd random_vec(long n, std::uint64_t seed, double var = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, std::sqrt(var / 2.0));
    Eigen::VectorXcd v(n);
    for (long i = 0; i < n; ++i) v(i) = cplx(nd(rng), nd(rng));
    return v;
}

cvec to_cvec(const Eigen::VectorXcd& v) { return cvec(v.data(), v.data() + v.size()); }

// Content of y restricted to the bins of one band (unitary DFT domain).
Eigen::VectorXcd band_limited(const Eigen::VectorXcd& y, int band, int N, int L) {
    cvec Y = dft(to_cvec(y));
    for (std::size_t j = 0; j < Y.size(); ++j)
        if (band_of_bin(static_cast<long>(j), N, L) != band) Y[j] = 0.0;
    const cvec b = dft(Y, true);
    return Eigen::Map<const Eigen::VectorXcd>(b.data(), static_cast<long>(b.size()));
}

// Statistic at the aligned window for a preamble of amplitude a in unit-N0 noise.
struct AlignedTrial {
    double srb, mrb;
};

AlignedTrial aligned_trial(const WaveformConfig& w, int p, int M, double a, double scale, std::uint64_t seed) {
    const long L = w.L, S = w.pulse_delay();
    const long lead = 3 * w.N * L;
    const cvec pre = generate_preamble(w).samples;
    const Eigen::VectorXcd n = random_vec(lead + static_cast<long>(pre.size()) + 2 * L, seed, 1.0 / L);
    cvec x = to_cvec(n);
    for (std::size_t i = 0; i < pre.size(); ++i) x[static_cast<std::size_t>(lead) + i] += a * pre[i];
    for (auto& v : x) v *= scale;
    AlignedTrial out{};
    for (int m : {1, M}) {
        StreamDetector det(make_channelizer_config(w, p, m));
        det.set_eval_range(lead + S, lead + S);
        std::vector<StatisticSample> st;
        det.push(x, st);
        det.push(cvec(static_cast<std::size_t>(S + 8 * L)), st);
        REQUIRE(st.size() == 1);
        (m == 1 ? out.srb : out.mrb) = st[0].value;
    }
    return out;
}

}  // namespace

TEST_CASE("detection config validation") {
    DetectionConfig d;
    d.p = 8;
    d.M = 4;
    CHECK_NOTHROW(d.validate(64));
    CHECK(d.K(64) == 16);
    CHECK(d.q() == 2);
    d.p = 6;
    CHECK_THROWS_AS(d.validate(64), std::invalid_argument);
    d = DetectionConfig{};
    d.P_FA = 1.0;
    CHECK_THROWS_AS(d.validate(64), std::invalid_argument);
    d = DetectionConfig{};
    d.J = 0;
    CHECK_THROWS_AS(d.validate(64), std::invalid_argument);
}

TEST_CASE("compute_beta") {
    CHECK(compute_beta(std::vector<double>{1, 1, 2, 2}, 32, 4) == doctest::Approx(24.0));
    CHECK(compute_beta(std::vector<double>(64, 0.25), 32, 64) == doctest::Approx(32.0 / 0.25));
    CHECK(compute_beta(std::vector<double>{1, 1, 1, 1e300}, 8, 4) == doctest::Approx(6.0));
    CHECK_THROWS_AS(compute_beta(std::vector<double>{1, 0, 1, 1}, 8, 4), std::invalid_argument);
    CHECK_THROWS_AS(compute_beta(std::vector<double>{1, -1, 1, 1}, 8, 4), std::invalid_argument);
    CHECK_THROWS_AS(compute_beta(std::vector<double>{1, 1}, 8, 4), std::invalid_argument);
    CHECK(compute_beta(BandPowerEstimate{{2.0, 2.0}}, 4, 2) == doctest::Approx(2.0));
}

TEST_CASE("threshold") {
    CHECK(threshold(1e-3, 1) == doctest::Approx(13.8155).epsilon(1e-5));
    CHECK(std::abs(threshold(1e-3, 1) + 2.0 * std::log(1e-3)) < 1e-9);
    CHECK(threshold(1e-3, 4) == doctest::Approx(26.1245).epsilon(1e-5));
    // Independent-candidate form vs the small-P_FA form for J = 79.
    const double exact = 36.77395358058481, approx = 36.77512097369127;
    CHECK(threshold(1e-3, 4, 79) == doctest::Approx(exact).epsilon(1e-10));
    CHECK(chi2_tail_inv(8, 1e-3 / 79) == doctest::Approx(approx).epsilon(1e-10));
    CHECK(std::abs(approx - exact) / exact < 1e-3);
    CHECK(threshold(1e-4, 4, 79) == doctest::Approx(chi2_tail_inv(8, 1e-4 / 79)).epsilon(1e-12));
    CHECK(per_candidate_pfa(1e-2, 1) == doctest::Approx(1e-2).epsilon(1e-14));
    CHECK(per_candidate_pfa(1e-2, 10) == doctest::Approx(1.0 - std::pow(0.99, 0.1)).epsilon(1e-12));
    CHECK(threshold(1e-2, 4, 10) > threshold(1e-2, 4, 1));
    CHECK_THROWS_AS(threshold(0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(threshold(1.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(threshold(1e-3, 0), std::invalid_argument);
    CHECK_THROWS_AS(threshold(1e-3, 4, 0), std::invalid_argument);
}

TEST_CASE("threshold: sampled chi-square false-alarm rate") {
    const int p = 4;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (double pfa : {1e-2, 1e-3}) {
        const double g = threshold(pfa, p);
        const long n = 1000000;
        long hits = 0;
        for (long i = 0; i < n; ++i) {
            double s = 0.0;
            for (int d = 0; d < 2 * p; ++d) {
                const double v = nd(rng);
                s += v * v;
            }
            hits += s > g;
        }
        const double sd = std::sqrt(pfa * (1 - pfa) / n);
        CHECK(std::abs(static_cast<double>(hits) / n - pfa) < 3.0 * sd);
    }
}

TEST_CASE("rao_exact and rao_low_complexity agree for white noise") {
    const int N = 8, L = 64, p = 4;
    const Eigen::MatrixXcd H = build_data_matrix({make_preamble_symbols(N, 3), L, p});
    const double N0 = 0.7;
    const Eigen::MatrixXcd C = N0 * Eigen::MatrixXcd::Identity(N * L, N * L);
    const std::vector<double> phi(L, N0);
    const double beta = compute_beta(phi, N, L);
    CHECK(beta == doctest::Approx(N / N0));
    for (std::uint64_t s = 1; s <= 5; ++s) {
        const Eigen::VectorXcd y = random_vec(N * L, s);
        const double te = rao_exact(y, H, C), tl = rao_low_complexity(y, H, phi, beta);
        CHECK(tl == doctest::Approx(te).epsilon(1e-9));
    }
    // Column l of H: only that branch responds, T = 2 N / N0.
    const Eigen::VectorXcd col = H.col(2);
    CHECK(rao_exact(col, H, C) == doctest::Approx(2.0 * N / N0).epsilon(1e-12));
    CHECK(rao_low_complexity(col, H, phi, beta) == doctest::Approx(2.0 * N / N0).epsilon(1e-9));

    const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(N * L);
    CHECK(rao_exact(zero, H, C) == 0.0);
    CHECK(rao_low_complexity(zero, H, phi, beta) == 0.0);
}

TEST_CASE("rao_exact: quadratic scaling and invalid covariance") {
    const int N = 4, L = 16, p = 3;
    const Eigen::MatrixXcd H = build_data_matrix({make_preamble_symbols(N, 4), L, p});
    const Eigen::VectorXcd d = random_vec(N * L, 9).cwiseAbs2().real().cast<cplx>();
    Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(N * L, N * L);
    for (int i = 0; i < N * L; ++i) C(i, i) = 0.5 + d(i);
    const Eigen::VectorXcd y = random_vec(N * L, 10);
    const cplx c{1.5, -2.0};
    CHECK(rao_exact(c * y, H, C) == doctest::Approx(std::norm(c) * rao_exact(y, H, C)).epsilon(1e-12));
    CHECK(rao_exact(y, H, C) >= 0.0);

    Eigen::MatrixXcd bad = C;
    bad(3, 3) = -1.0;
    CHECK_THROWS_AS(rao_exact(y, H, bad), std::invalid_argument);
    CHECK_THROWS_AS(rao_exact(y, H, Eigen::MatrixXcd::Zero(N * L, N * L)), std::invalid_argument);
}

TEST_CASE("rao_low_complexity: a band with 100x PSD is suppressed by 1e4") {
    const int N = 8, L = 32, p = 4;
    const Eigen::MatrixXcd H = build_data_matrix({make_preamble_symbols(N, 6), L, p});
    const int k0 = 11;
    const Eigen::VectorXcd y = band_limited(random_vec(N * L, 12), k0, N, L);
    std::vector<double> flat(L, 1.0), hot(L, 1.0);
    hot[k0] = 100.0;
    // Compare the quadratic form (beta/2) T with beta removed.
    const double qf_flat = rao_low_complexity(y, H, flat, 2.0), qf_hot = rao_low_complexity(y, H, hot, 2.0);
    CHECK(qf_hot / qf_flat == doctest::Approx(1e-4).epsilon(1e-9));
    // Content outside the hot band is unaffected.
    const Eigen::VectorXcd z = band_limited(random_vec(N * L, 13), k0 + 3, N, L);
    CHECK(rao_low_complexity(z, H, hot, 2.0) == doctest::Approx(rao_low_complexity(z, H, flat, 2.0)).epsilon(1e-12));
}

TEST_CASE("band_of_bin and per_band_covariance") {
    const int N = 4, L = 8;
    std::vector<int> count(L, 0);
    for (long j = 0; j < N * L; ++j) ++count[static_cast<std::size_t>(band_of_bin(j, N, L))];
    for (int c : count) CHECK(c == N);
    // Band k spans [k - L/2 - 1, k - L/2) subcarrier spacings, so DC opens band L/2 + 1
    // and band 0 wraps around Nyquist.
    CHECK(band_of_bin(0, N, L) == L / 2 + 1);
    CHECK(band_of_bin(N * L - 1, N, L) == L / 2);
    CHECK(band_of_bin(N * L / 2, N, L) == 1);
    CHECK(band_of_bin(N * L / 2 - 1, N, L) == 0);

    std::vector<double> phi(L);
    for (int k = 0; k < L; ++k) phi[static_cast<std::size_t>(k)] = 1.0 + k;
    const Eigen::MatrixXcd C = per_band_covariance(phi, N, L);
    CHECK((C - C.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    for (long j = 0; j < N * L; ++j) {
        Eigen::VectorXcd e(N * L);
        for (long n = 0; n < N * L; ++n) e(n) = std::polar(1.0, 2.0 * M_PI * j * n / (N * L));
        const double lam = phi[static_cast<std::size_t>(band_of_bin(j, N, L))];
        CHECK((C * e - lam * e).norm() < 1e-9 * e.norm());
    }
}

TEST_CASE("mrb_combine") {
    CHECK(mrb_combine({3.5}) == 3.5);
    CHECK(mrb_combine({1.0, 2.0, 4.5}) == doctest::Approx(7.5));
    CHECK_THROWS_AS(mrb_combine({}), std::invalid_argument);
}

TEST_CASE("noncentrality") {
    // N=32, L=64, eta=0.01 with N0 = 1: theta^H theta = eta L N0.
    const double N0 = 1.0;
    const cvec theta{cplx(std::sqrt(0.64), 0.0)};
    CHECK(noncentrality_srb(theta, std::vector<double>(64, N0), 32, 64) == doctest::Approx(40.96).epsilon(1e-12));
    CHECK(noncentrality_srb(cvec{0.0, 0.0}, std::vector<double>(64, N0), 32, 64) == 0.0);

    const cvec th{cplx(0.3, 0.1), cplx(-0.2, 0.5), cplx(0.05, 0.0), cplx(0.1, -0.1)};
    double e = 0.0;
    for (auto v : th) e += std::norm(v);
    const double N0b = 0.4;
    const double eta = e / (64 * N0b);
    CHECK(noncentrality_srb(th, std::vector<double>(64, N0b), 16, 64) == doctest::Approx(2.0 * 16 * 64 * eta).epsilon(1e-12));

    // White noise: MRB equals SRB for any split of the energy.
    const std::vector<cvec> parts{{th[0]}, {th[1]}, {th[2]}, {th[3]}};
    const std::vector<std::vector<double>> white(4, std::vector<double>(16, N0b));
    CHECK(noncentrality_mrb(parts, white, 16, 16) == doctest::Approx(noncentrality_srb(th, std::vector<double>(64, N0b), 16, 64)).epsilon(1e-12));

    // Equal per-band energy: equal for any PSD.
    std::vector<double> phi(64);
    std::vector<std::vector<double>> phi_m(4);
    for (int k = 0; k < 64; ++k) {
        phi[static_cast<std::size_t>(k)] = 0.5 + 0.1 * (k % 9) + (k > 40 ? 5.0 : 0.0);
        phi_m[static_cast<std::size_t>(k / 16)].push_back(phi[static_cast<std::size_t>(k)]);
    }
    const cplx t0{0.2, 0.3};
    const std::vector<cvec> eq{{t0}, {t0 * cplx(0, 1)}, {-t0}, {std::conj(t0)}};
    CHECK(noncentrality_mrb(eq, phi_m, 16, 16) == doctest::Approx(noncentrality_srb(cvec{2.0 * t0}, phi, 16, 64)).epsilon(1e-12));

    // One band: the MRB formula is the SRB formula.
    CHECK(noncentrality_mrb({th}, {phi}, 16, 64) == doctest::Approx(noncentrality_srb(th, phi, 16, 64)).epsilon(1e-14));
}

TEST_CASE("theory_pd and deflection_pd") {
    for (int p : {1, 4, 40})
        for (double pfa : {1e-2, 1e-8}) CHECK(theory_pd(pfa, p, 0.0) == doctest::Approx(pfa).epsilon(1e-8));
    CHECK(theory_pd(1e-3, 4, 1e4) > 1.0 - 1e-12);
    CHECK(theory_pd(1e-3, 4, 40.96, 79) < theory_pd(1e-3, 4, 40.96, 1));
    double prev = 0.0;
    for (double lam = 0.0; lam < 200.0; lam += 5.0) {
        const double pd = theory_pd(1e-6, 8, lam);
        CHECK(pd >= prev);
        prev = pd;
    }

    CHECK(deflection_pd(1e-3, 0.0) == doctest::Approx(1e-3).epsilon(1e-9));
    CHECK(deflection_pd(1e-3, 1e4) > 1.0 - 1e-12);
    CHECK_THROWS_AS(deflection_pd(1e-3, -1.0), std::invalid_argument);

    // Doubling p costs 10 log10(sqrt 2) dB.
    const double d = required_snr_db(1e-8, 0.9, 80, 977, 4096) - required_snr_db(1e-8, 0.9, 40, 977, 4096);
    CHECK(d == doctest::Approx(5.0 * std::log10(2.0)).epsilon(1e-12));
    CHECK(d == doctest::Approx(1.505).epsilon(1e-3));
    CHECK_THROWS_AS(required_snr_db(0.5, 0.1, 4, 32, 64), std::invalid_argument);

    // Known-signal matched filter (d^2 = 2 beta theta^H theta = lambda) beats the
    // unknown-channel chi-square detector at the same SNR.
    for (int p : {1, 4, 40})
        for (double lam = 1.0; lam < 400.0; lam *= 1.5) CHECK(deflection_pd(1e-6, lam) >= theory_pd(1e-6, p, lam) - 1e-12);
}

TEST_CASE("required_snr_chi2_db inverts theory_pd") {
    for (int J : {1, 79}) {
        const double eta_db = required_snr_chi2_db(1e-8, 0.5, 40, 977, 4096, J);
        const double lam = 2.0 * 977 * 4096 * std::pow(10.0, eta_db / 10.0);
        CHECK(theory_pd(1e-8, 40, lam, J) == doctest::Approx(0.5).epsilon(1e-8));
    }
    CHECK_THROWS_AS(required_snr_chi2_db(1e-2, 1e-3, 4, 32, 64), std::invalid_argument);
}

TEST_CASE("cfo grid sizing") {
    CHECK(scalloping_loss_db(0.0, 2e-3) == 0.0);
    CHECK(scalloping_loss_db(250.0, 2e-3) == doctest::Approx(-20.0 * std::log10(std::sin(M_PI * 0.5) / (M_PI * 0.5))).epsilon(1e-12));
    const double range = 7000.0, T = 2e-3;
    const int J = cfo_grid_size(range, T);
    CHECK(J == 55);
    const auto worst = [&](int j) { return scalloping_loss_db(range / (j - 1), T); };
    CHECK(worst(J) <= 1.0);
    CHECK(worst(J - 1) > 1.0);
    // 79 bins over +-7 kHz are finer than the 1 dB budget needs.
    CHECK(worst(79) < 1.0);
    CHECK(worst(79) == doctest::Approx(0.465).epsilon(0.01));
    CHECK(cfo_grid_size(0.0, T) == 1);
    CHECK_THROWS_AS(cfo_grid_size(7000.0, 0.0), std::invalid_argument);

    const auto g = cfo_grid(range, 79);
    REQUIRE(g.size() == 79);
    CHECK(g.front() == doctest::Approx(-range));
    CHECK(g.back() == doctest::Approx(range));
    CHECK(std::abs(g[39]) < 1e-9);
    CHECK(cfo_grid(range, 1) == std::vector<double>{0.0});
    CHECK_THROWS_AS(cfo_grid(range, 0), std::invalid_argument);
}

TEST_CASE("cfo_grid_search") {
    const WaveformConfig w = make_waveform(64, 16, 128e-9);
    const ChannelizerConfig cfg = make_channelizer_config(w, 4);
    const cvec pre = generate_preamble(w).samples;
    const long lead = 2500;
    const Eigen::VectorXcd n = random_vec(lead + static_cast<long>(pre.size()) + 500, 17, 1.0 / 64);
    cvec x = to_cvec(n);
    for (std::size_t i = 0; i < pre.size(); ++i) x[static_cast<std::size_t>(lead) + i] += 0.02 * pre[i];
    const ComplexSignal s{x, w.sample_rate()};

    CHECK_THROWS_AS(cfo_grid_search(s, cfg, {}), std::invalid_argument);

    const TestStatistic zero = cfo_grid_search(s, cfg, {0.0});
    const DetectionResult plain = detect_stream(s, cfg, 1e300);
    REQUIRE(plain.argmax.has_value());
    CHECK(zero.cfo_bin == 0);
    CHECK(zero.value == plain.argmax->statistic);
    CHECK(zero.window_index - w.pulse_delay() == plain.argmax->index);

    const double f = 200e3;  // large against 1/T = 500 kHz
    const ComplexSignal shifted = apply_cfo(s, f);
    const TestStatistic on = cfo_grid_search(shifted, cfg, {f});
    CHECK(on.value == doctest::Approx(zero.value).epsilon(1e-9));
    CHECK(on.window_index == zero.window_index);

    const TestStatistic grid = cfo_grid_search(shifted, cfg, {-f, 0.0, f});
    CHECK(grid.cfo_bin == 2);
    CHECK(grid.value == doctest::Approx(zero.value).epsilon(1e-9));

    // Ties go to the lowest bin.
    const TestStatistic tie = cfo_grid_search(s, cfg, {0.0, 0.0});
    CHECK(tie.cfo_bin == 0);

    const long lo = lead + w.pulse_delay() - 10, hi = lead + w.pulse_delay() + 10;
    const TestStatistic ranged = cfo_grid_search(s, cfg, {0.0}, lo, hi);
    CHECK(ranged.window_index >= lo);
    CHECK(ranged.window_index <= hi);
    CHECK(ranged.value == zero.value);
}

TEST_CASE("fim: white noise is exactly (N/N0) I") {
    const int N = 8, L = 16, p = 4;
    const Eigen::MatrixXcd H = build_data_matrix({make_preamble_symbols(N, 2), L, p});
    const double N0 = 0.25;
    const Eigen::MatrixXcd I = fim_matrix(H, N0 * Eigen::MatrixXcd::Identity(N * L, N * L));
    CHECK((I - (N / N0) * Eigen::MatrixXcd::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-12);
    const FimReport r = fim_approx_report(H, N0 * Eigen::MatrixXcd::Identity(N * L, N * L), N, L);
    CHECK(r.beta == doctest::Approx(N / N0));
    CHECK(r.max_offdiag_ratio < 1e-12);
    CHECK(r.max_diag_deviation < 1e-12);
    CHECK_THROWS_AS(fim_matrix(H, Eigen::MatrixXcd::Zero(N * L, N * L)), std::invalid_argument);
    CHECK_THROWS_AS(fim_matrix(H, Eigen::MatrixXcd::Identity(3, 3)), std::invalid_argument);
}

TEST_CASE("fim: matches the frequency-domain form and is Hermitian PSD") {
    const int N = 16, L = 16, p = 4;
    const Eigen::MatrixXcd H = build_data_matrix({make_preamble_symbols(N, 8), L, p});
    std::vector<double> phi(L);
    for (int k = 0; k < L; ++k) phi[static_cast<std::size_t>(k)] = 1.0 + 9.0 * k / (L - 1.0);
    const Eigen::MatrixXcd I = fim_matrix(H, per_band_covariance(phi, N, L));
    // I_lm = sum_j conj(H_l[j]) H_m[j] / phi(band j), unitary DFT of the columns.
    std::vector<cvec> Hf;
    for (int l = 0; l < p; ++l) Hf.push_back(dft(to_cvec(H.col(l))));
    double err = 0.0;
    for (int l = 0; l < p; ++l)
        for (int m = 0; m < p; ++m) {
            cplx ref{};
            for (long j = 0; j < N * L; ++j)
                ref += std::conj(Hf[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)]) * Hf[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] /
                       phi[static_cast<std::size_t>(band_of_bin(j, N, L))];
            err = std::max(err, std::abs(I(l, m) - ref));
        }
    CHECK(err < 1e-9);
    CHECK((I - I.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(I);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("fim: narrow 10:1 band keeps the beta I approximation") {
    const int N = 64, L = 64, p = 8;
    const Eigen::MatrixXcd H = build_data_matrix({make_preamble_symbols(N, 1), L, p});
    std::vector<double> phi(L, 1.0);
    phi[20] = 10.0;
    const FimReport r = fim_approx_report(H, per_band_covariance(phi, N, L), N, L);
    CHECK(r.beta == doctest::Approx(compute_beta(phi, N, L)).epsilon(1e-12));
    CHECK(r.max_offdiag_ratio < 0.05);
    CHECK(r.max_diag_deviation < 0.05);
}

TEST_CASE("fim: broad coloring breaks the approximation") {
    // Off-diagonals track the Fourier coefficients of 1/Phi at lags below p,
    // so wide 10:1 blocks are far from beta I.
    const int N = 32, L = 32, p = 8;
    const Eigen::MatrixXcd H = build_data_matrix({make_preamble_symbols(N, 1), L, p});
    std::vector<double> phi(L);
    for (int k = 0; k < L; ++k) phi[static_cast<std::size_t>(k)] = (k / 4) % 2 ? 10.0 : 1.0;
    const FimReport r = fim_approx_report(H, per_band_covariance(phi, N, L), N, L);
    CHECK(r.max_diag_deviation < 0.05);
    CHECK(r.max_offdiag_ratio > 0.3);
}

TEST_CASE("fim: MRB block structure") {
    const int N = 32, K = 16, q = 2, M = 4;
    const cvec s = make_preamble_symbols(N, 3);
    std::vector<Eigen::MatrixXcd> Hm, Cm;
    for (int m = 0; m < M; ++m) {
        std::vector<double> phi(K);
        for (int k = 0; k < K; ++k) phi[static_cast<std::size_t>(k)] = (1.0 + m) * (1.0 + 0.2 * std::sin(0.7 * k + m));
        Hm.push_back(build_data_matrix({s, K, q}));
        Cm.push_back(per_band_covariance(phi, N, K));
    }
    const MrbFimReport r = fim_mrb_report(Hm, Cm, N, K);
    REQUIRE(r.blocks.size() == static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) CHECK(r.blocks[static_cast<std::size_t>(m)].beta == doctest::Approx(N / (1.0 + m)).epsilon(0.05));
    CHECK(r.max_inverse_deviation < 0.05);
    CHECK(r.max_cross_block == 0.0);
}

TEST_CASE("theory curve and CSV") {
    const auto rows = theory_curve({-30.0, -25.0, -20.0}, 4, 32, 64, 1e-2, 1);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        CHECK(r.lambda == doctest::Approx(2.0 * 32 * 64 * std::pow(10.0, r.eta_db / 10.0)).epsilon(1e-12));
        CHECK(r.pd_chi2 == doctest::Approx(theory_pd(1e-2, 4, r.lambda)).epsilon(1e-12));
        CHECK(r.pd_deflection == doctest::Approx(deflection_pd(1e-2, std::pow(32.0 * 64 * std::pow(10.0, r.eta_db / 10.0), 2) / 4)).epsilon(1e-12));
    }
    CHECK(rows[0].pd_chi2 < rows[1].pd_chi2);
    const std::string path = "theory_test.csv";
    write_theory_csv(rows, path);
    std::ifstream f(path);
    std::string header, line;
    std::getline(f, header);
    CHECK(header == "eta_db,lambda,p,P_FA,J,P_D_theory_chi2,P_D_theory_deflection");
    int n = 0;
    while (std::getline(f, line)) ++n;
    CHECK(n == 3);
    std::remove(path.c_str());
}

TEST_CASE("channelizer statistic: scale invariance") {
    const WaveformConfig w = make_waveform(64, 16, 128e-9);
    for (double a : {0.0, 0.01}) {
        const double ref = aligned_trial(w, 4, 4, a, 1.0, 3).srb;
        for (double c : {1e-3, 7.5, 1e4}) {
            const AlignedTrial t = aligned_trial(w, 4, 4, a, c, 3);
            CHECK(t.srb == doctest::Approx(ref).epsilon(1e-6));
        }
    }
}

TEST_CASE("channelizer statistic: moments under both hypotheses, SRB and MRB") {
    const int L = 64, N = 32, p = 4, M = 4;
    const WaveformConfig w = make_waveform(L, N, 128e-9);
    // Peak of the matched filter is a L s[n], so lambda = 2 N L^2 a^2 / N0.
    const double lambda = 40.0;
    const double a = std::sqrt(lambda / (2.0 * N * L * L));
    const int trials = 400;
    double h0_srb = 0.0, h0_mrb = 0.0, h1_srb = 0.0, h1_mrb = 0.0;
    for (int i = 0; i < trials; ++i) {
        const AlignedTrial n = aligned_trial(w, p, M, 0.0, 1.0, seed_hash(91, i, 0));
        const AlignedTrial s = aligned_trial(w, p, M, a, 1.0, seed_hash(91, i, 1));
        h0_srb += n.srb / trials;
        h0_mrb += n.mrb / trials;
        h1_srb += s.srb / trials;
        h1_mrb += s.mrb / trials;
    }
    MESSAGE("H0 mean SRB " << h0_srb << " MRB " << h0_mrb << "; H1 mean SRB " << h1_srb << " MRB " << h1_mrb);
    // Standard errors: about 0.2 under H0 and 0.6 under H1. The plug-in 1/phi
    // adds roughly 1/N to the null mean.
    CHECK(h0_srb == doctest::Approx(2.0 * p).epsilon(0.05));
    CHECK(h0_mrb == doctest::Approx(2.0 * p).epsilon(0.05));
    CHECK(h1_srb == doctest::Approx(2.0 * p + lambda).epsilon(0.03));
    CHECK(h1_mrb == doctest::Approx(2.0 * p + lambda).epsilon(0.03));
}
