#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "ofmtss/channel.hpp"
#include "ofmtss/channelizer.hpp"
#include "ofmtss/numerics.hpp"

namespace ofmtss {

struct DetectionConfig {
    int p = 1;
    double P_FA = 1e-3;
    int J = 1;
    int M = 1;
    int K(int L) const { return L / M; }
    int q() const { return p / M; }
    void validate(int L) const;
};

struct TestStatistic {
    double value = 0.0;
    int cfo_bin = 0;
    long window_index = 0;
};

struct TheoryPoint {
    double eta_db = 0.0;
    double lambda = 0.0;
    double P_D = 0.0;
};

struct FimReport {
    double beta = 0.0;
    double max_offdiag_ratio = 0.0;
    double max_diag_deviation = 0.0;  // max |I_ll - beta| / beta
};

struct MrbFimReport {
    std::vector<FimReport> blocks;
    double max_inverse_deviation = 0.0;  // max |(I^-1) - diag(1/beta_m)| relative to 1/beta_m
    double max_cross_block = 0.0;        // largest entry outside the diagonal blocks
};

double compute_beta(const std::vector<double>& phi_hat, int N, int L);
inline double compute_beta(const BandPowerEstimate& phi_hat, int N, int L) { return compute_beta(phi_hat.phi_hat, N, L); }

// Per-window threshold for J candidate statistics with overall false-alarm P_FA.
double per_candidate_pfa(double P_FA, int J);
double threshold(double P_FA, int p, int J = 1);

double rao_exact(const Eigen::VectorXcd& y, const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& C);
double rao_low_complexity(const Eigen::VectorXcd& y, const Eigen::MatrixXcd& H, const std::vector<double>& phi_hat,
                          double beta);

// Band index of NL-point DFT bin j (bands centered at (k - (L+1)/2)/T_b).
int band_of_bin(long j, int N, int L);
// Circulant covariance that is flat at phi[k] over the bins of band k.
Eigen::MatrixXcd per_band_covariance(const std::vector<double>& phi, int N, int L);

double mrb_combine(const std::vector<double>& per_band_statistics);

double noncentrality_srb(const cvec& theta, const std::vector<double>& phi, int N, int L);
double noncentrality_mrb(const std::vector<cvec>& theta_m, const std::vector<std::vector<double>>& phi_m, int N,
                         int K);

double theory_pd(double P_FA, int p, double lambda, int J = 1);
double deflection_pd(double P_FA, double d2);
// Chip SNR (dB) at which the Gaussian-approximation Rao detector reaches P_D.
double required_snr_db(double P_FA, double P_D, int p, int N, int L);
// Chip SNR (dB) at which the chi-squared theory reaches P_D.
double required_snr_chi2_db(double P_FA, double P_D, int p, int N, int L, int J = 1);

// CFO grid: uniform over [-range, range], size chosen so the worst straddle
// loss on the coherent preamble of duration T is at most max_loss_db.
double scalloping_loss_db(double offset_hz, double duration_s);
int cfo_grid_size(double range_hz, double duration_s, double max_loss_db = 1.0);
std::vector<double> cfo_grid(double range_hz, int J);

// Max statistic over CFO candidates. Ties go to the lowest bin, then the
// earliest window. eval_lo/hi restrict window starts (input time); hi < lo means all.
TestStatistic cfo_grid_search(const ComplexSignal& stream, const ChannelizerConfig& cfg,
                              const std::vector<double>& grid, long eval_lo = 0, long eval_hi = -1);

Eigen::MatrixXcd fim_matrix(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& C);
FimReport fim_approx_report(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& C, int N, int L);
MrbFimReport fim_mrb_report(const std::vector<Eigen::MatrixXcd>& H_m, const std::vector<Eigen::MatrixXcd>& C_m,
                            int N, int K);

struct TheoryRow {
    double eta_db, lambda;
    int p;
    double P_FA;
    int J;
    double pd_chi2, pd_deflection;
};
std::vector<TheoryRow> theory_curve(const std::vector<double>& eta_db, int p, int N, int L, double P_FA, int J);
void write_theory_csv(const std::vector<TheoryRow>& rows, const std::string& path);

}  // namespace ofmtss
