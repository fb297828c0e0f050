#pragma once

// Checkable forms of the distributional properties the estimators rely on:
// the limiting variance of the coefficients, consistency of the exchangeable
// variance estimator, dominance of the dyad-clustered estimator's bias over
// the exchangeable estimator's (with exact closed forms in the single-slope
// case), and the rank bound on the dyad-clustered meat matrix.

#include "dyadnet/array_exch.hpp"
#include "dyadnet/estimators.hpp"
#include "dyadnet/rng.hpp"
#include "dyadnet/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace dyadnet {

struct TheoremReport {
  std::string id;
  std::vector<double> grid;   // the n values (or draw labels) examined
  std::vector<double> stats;  // one headline statistic per grid point
  std::vector<double> extra;  // auxiliary statistics (documented per check)
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline void moments(const std::vector<double>& v, double& skew,
                    double& exkurt) {
  const double m = static_cast<double>(v.size());
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= m;
  double s2 = 0.0, s3 = 0.0, s4 = 0.0;
  for (double x : v) {
    const double c = x - mu;
    s2 += c * c;
    s3 += c * c * c;
    s4 += c * c * c * c;
  }
  s2 /= m;
  s3 /= m;
  s4 /= m;
  skew = s3 / std::pow(s2, 1.5);
  exkurt = s4 / (s2 * s2) - 3.0;
}

}  // namespace detail

// The scaled coefficient sqrt(n)(beta_hat - beta) has limiting variance
// (phi_cr + phi_cs + 2 phi_sr) * (pooled second moment of the covariates)^-1.
// The check runs the pure-mean regression (a lone intercept column), the one
// design for which that target is the exact limit of the sampling variance:
// with a non-degenerate dyad-level covariate, the dominant shared-actor terms
// of the sampling variance carry the covariate mean's outer product rather
// than the raw second moment, and the two differ unless the covariate has
// zero spread. The intercept column has zero spread by construction, its
// pooled second moment is identically one, and the comparison reduces to the
// scalar variance of the grand mean against the pooled shared-actor moments.
//
// Requires at least one nonzero shared-actor covariance (common sender,
// common receiver, or sender-receiver); violating parameters are reported in
// the result, never thrown. stats[g] is the relative deviation of the Monte
// Carlo variance of sqrt(n) beta_hat from the estimated target at grid[g];
// extra holds (skew, excess kurtosis) of the coefficient draws at the largest
// n. Passing requires the deviation at the last grid point to undercut the
// first and the largest-n draws to look Gaussian.
inline TheoremReport check_limiting_variance(
    std::uint64_t seed, std::vector<int> ns = {20, 40, 80}, int reps = 10000,
    const BilinearParams& params = BilinearParams{}) {
  TheoremReport rep;
  rep.id = "limiting-variance";

  const auto moms = params.slot_moments();
  if (moms[kSlotCommonSender] == 0.0 && moms[kSlotCommonReceiver] == 0.0 &&
      moms[kSlotSenderReceiver] == 0.0) {
    rep.detail =
        "precondition violated: common-sender, common-receiver, and "
        "sender-receiver covariances are all zero";
    rep.pass = false;
    return rep;
  }

  std::ostringstream detail;
  std::vector<double> last_draws;  // coefficient draws at the largest n
  for (int g = 0; g < static_cast<int>(ns.size()); ++g) {
    const int n = ns[g];
    const int d = num_dyads(n);
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(d, 1);
    const double exx = X.col(0).squaredNorm() / static_cast<double>(d);
    std::vector<double> bhat(reps);
    double scale = 0.0;  // pooled phi_cr + phi_cs + 2 phi_sr estimate
    for (int k = 0; k < reps; ++k) {
      Rng er(seed, 4, static_cast<std::uint64_t>(n),
             static_cast<std::uint64_t>(k));
      const Eigen::VectorXd y =
          X.col(0) + from_square(gen_errors_bilinear(n, params, er));
      const OlsFit fit = ols_fit(X, y);
      bhat[k] = fit.beta[0];
      const ExchParams ph = estimate_exch_params(to_square(fit.residuals, n));
      scale += ph.phi_b + ph.phi_c + 2.0 * ph.phi_d;
    }
    scale /= static_cast<double>(reps);
    double mu = 0.0;
    for (double b : bhat) mu += b;
    mu /= static_cast<double>(reps);
    double ss = 0.0;
    for (double b : bhat) ss += (b - mu) * (b - mu);
    const double emp = static_cast<double>(n) * ss / (reps - 1.0);
    const double pred = scale / exx;
    rep.grid.push_back(n);
    rep.stats.push_back(std::abs(emp - pred) / pred);
    if (g + 1 == static_cast<int>(ns.size())) last_draws = bhat;
  }

  const bool decreasing =
      rep.stats.size() >= 2 && rep.stats.back() < rep.stats.front();

  double skew = 0.0, exkurt = 0.0;
  detail::moments(last_draws, skew, exkurt);
  rep.extra = {skew, exkurt};
  const bool gaussian_ok = std::abs(skew) < 0.2 && std::abs(exkurt) < 0.5;
  detail << "relative deviations:";
  for (double s : rep.stats) detail << " " << s;
  detail << "; skew " << skew << ", excess kurtosis " << exkurt;
  rep.detail = detail.str();
  rep.pass = decreasing && gaussian_ok;
  return rep;
}

// Consistency of the exchangeable variance estimator: for a fixed design,
// stats[g] is the median over replicates of the max-abs entry of
// n (Vhat_E - V_MC) at grid[g]; it must shrink from the small n to the large.
inline TheoremReport check_consistency(std::uint64_t seed,
                                       std::vector<int> ns = {20, 80},
                                       int reps = 300) {
  TheoremReport rep;
  rep.id = "consistency";
  const BilinearParams bil;
  for (int n : ns) {
    Rng xr(seed, 5, static_cast<std::uint64_t>(n), 0);
    const Eigen::MatrixXd X = gen_covariates(n, xr);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    const PairSums ps = pair_sums(X, n);
    const int p = 4;
    Eigen::MatrixXd betas(p, reps);
    std::vector<Eigen::MatrixXd> vhat(reps);
    const Eigen::VectorXd mean = X * Eigen::Vector4d::Ones();
    for (int k = 0; k < reps; ++k) {
      Rng er(seed, 6, static_cast<std::uint64_t>(n),
             static_cast<std::uint64_t>(k));
      const Eigen::VectorXd y =
          mean + from_square(gen_errors_bilinear(n, bil, er));
      const Eigen::VectorXd b = qr.solve(y);
      betas.col(k) = b;
      const Eigen::VectorXd e = y - X * b;
      vhat[k] = sandwich_vcov(
          X, combine_pair_sums(ps, estimate_exch_params(to_square(e, n)).slots()));
    }
    const Eigen::VectorXd mu = betas.rowwise().mean();
    Eigen::MatrixXd centered = betas.colwise() - mu;
    const Eigen::MatrixXd vmc = centered * centered.transpose() / (reps - 1.0);
    std::vector<double> gaps(reps);
    for (int k = 0; k < reps; ++k)
      gaps[k] = n * (vhat[k] - vmc).cwiseAbs().maxCoeff();
    rep.grid.push_back(n);
    rep.stats.push_back(median_of(gaps));
  }
  rep.pass = true;
  for (size_t g = 1; g < rep.stats.size(); ++g)
    if (!(rep.stats[g] < rep.stats[g - 1])) rep.pass = false;
  std::ostringstream detail;
  detail << "median |n (Vhat_E - V_MC)|:";
  for (double s : rep.stats) detail << " " << s;
  rep.detail = detail.str();
  return rep;
}

// Exact finite-sample biases in the single-slope case with a fixed centered
// covariate z and known error covariance slots phi:
//   V*            = (z'z)^{-2} sum_t phi_t S_t(z, z)
//   Bias(V_DC)    = -V* (z'z)^{-2} sum_t S_t(z^2, z^2)
//   Bias(V_E)     = -V* (z'z)^{-2} sum_t S_t(z, z)^2 / count_t
// with t ranging over the five overlapping configurations (same included).
struct BiasClosedForms {
  double v_star = 0.0;
  double bias_dc = 0.0;
  double bias_e = 0.0;
};

inline BiasClosedForms bias_closed_forms(const Eigen::VectorXd& z,
                                         const std::array<double, 6>& phi,
                                         int n) {
  const Eigen::MatrixXd Z = to_square(z, n);
  const Eigen::MatrixXd Z2 = Z.cwiseProduct(Z);
  const auto sz = scalar_pair_sums(Z, Z);
  const auto sz2 = scalar_pair_sums(Z2, Z2);
  const auto counts = config_counts(n);
  const double ztz = z.squaredNorm();
  BiasClosedForms out;
  double sum_dc = 0.0, sum_e = 0.0;
  for (int t = 0; t < 5; ++t) {
    out.v_star += phi[t] * sz[t];
    sum_dc += sz2[t];
    sum_e += sz[t] * sz[t] / static_cast<double>(counts[t]);
  }
  out.v_star /= ztz * ztz;
  out.bias_dc = -out.v_star * sum_dc / (ztz * ztz);
  out.bias_e = -out.v_star * sum_e / (ztz * ztz);
  return out;
}

// Monte Carlo confirmation of the closed-form biases and of the dominance
// |Bias(V_DC)| >= |Bias(V_E)|. stats = {ratio_mc, ratio_closed};
// extra = {bias_dc_mc, bias_dc_closed, se_dc, bias_e_mc, bias_e_closed, se_e}.
inline TheoremReport check_bias_dominance(std::uint64_t seed, int n = 20,
                                          int reps = 10000) {
  TheoremReport rep;
  rep.id = "bias-dominance";
  const BilinearParams bil;
  const auto phi = bil.slot_moments();

  Rng zr(seed, 7, 0, 0);
  const int d = num_dyads(n);
  Eigen::VectorXd z(d);
  for (int k = 0; k < d; ++k) z[k] = zr.normal();
  z.array() -= z.mean();
  const double ztz = z.squaredNorm();
  const Eigen::MatrixXd Zsq = to_square(z, n);
  const auto sz = scalar_pair_sums(Zsq, Zsq);
  const BiasClosedForms cf = bias_closed_forms(z, phi, n);

  std::vector<double> vdc(reps), ve(reps);
  for (int k = 0; k < reps; ++k) {
    Rng er(seed, 8, 0, static_cast<std::uint64_t>(k));
    const Eigen::VectorXd xi = from_square(gen_errors_bilinear(n, bil, er));
    const Eigen::VectorXd y = z + xi;  // slope 1
    const double bhat = z.dot(y) / ztz;
    const Eigen::VectorXd e = y - bhat * z;
    // Dyad-clustered: sum over overlapping pairs of z_j z_k e_j e_k.
    const Eigen::MatrixXd We = to_square(z.cwiseProduct(e), n);
    const auto swe = scalar_pair_sums(We, We);
    double dc = 0.0;
    for (int t = 0; t < 5; ++t) dc += swe[t];
    vdc[k] = dc / (ztz * ztz);
    // Exchangeable: estimated slot moments against the fixed design sums.
    const auto slots = estimate_exch_params(to_square(e, n)).slots();
    double ex = 0.0;
    for (int t = 0; t < 5; ++t) ex += slots[t] * sz[t];
    ve[k] = ex / (ztz * ztz);
  }

  const auto mean_sd = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair<double, double>(
        m, std::sqrt(s / (static_cast<double>(v.size()) - 1.0)));
  };
  const auto [mdc, sdc] = mean_sd(vdc);
  const auto [me, se] = mean_sd(ve);
  const double se_dc = sdc / std::sqrt(static_cast<double>(reps));
  const double se_e = se / std::sqrt(static_cast<double>(reps));
  const double bias_dc_mc = mdc - cf.v_star;
  const double bias_e_mc = me - cf.v_star;

  rep.grid = {static_cast<double>(n)};
  rep.stats = {std::abs(bias_dc_mc) / std::abs(bias_e_mc),
               std::abs(cf.bias_dc) / std::abs(cf.bias_e)};
  rep.extra = {bias_dc_mc, cf.bias_dc, se_dc, bias_e_mc, cf.bias_e, se_e};
  rep.tolerance = 0.95;
  const bool match_dc = std::abs(bias_dc_mc - cf.bias_dc) <= 3.0 * se_dc;
  const bool match_e = std::abs(bias_e_mc - cf.bias_e) <= 3.0 * se_e;
  rep.pass = rep.stats[0] >= rep.tolerance && match_dc && match_e;
  std::ostringstream detail;
  detail << "bias_dc mc=" << bias_dc_mc << " closed=" << cf.bias_dc
         << " (se " << se_dc << "); bias_e mc=" << bias_e_mc
         << " closed=" << cf.bias_e << " (se " << se_e
         << "); ratio mc=" << rep.stats[0] << " closed=" << rep.stats[1];
  rep.detail = detail.str();
  return rep;
}

inline int matrix_rank(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double tol =
      sv[0] * 1e-10 * static_cast<double>(std::max(M.rows(), M.cols()));
  int r = 0;
  for (int k = 0; k < sv.size(); ++k)
    if (sv[k] > tol) ++r;
  return r;
}

// Rank of the dyad-clustered meat never exceeds n(n-1)/2 for directed data,
// whatever the residuals; checked on random designs wide enough for the
// bound to bind. stats[g] = max rank observed at grid[g].
inline TheoremReport check_dc_rank(std::uint64_t seed,
                                   std::vector<int> ns = {4, 5, 6, 7, 8},
                                   int draws = 20) {
  TheoremReport rep;
  rep.id = "dc-rank";
  rep.pass = true;
  std::ostringstream detail;
  for (int n : ns) {
    const int d = num_dyads(n);
    const int bound = n * (n - 1) / 2;
    const int p = std::min(d, bound + 2);
    int worst = 0;
    for (int k = 0; k < draws; ++k) {
      Rng rng(seed, 9, static_cast<std::uint64_t>(n),
              static_cast<std::uint64_t>(k));
      Eigen::MatrixXd X(d, p);
      Eigen::VectorXd e(d);
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < p; ++c) X(r, c) = rng.normal();
        e[r] = rng.normal();
      }
      const int rank = matrix_rank(dc_meat(X, e, n));
      worst = std::max(worst, rank);
      if (rank > bound) rep.pass = false;
    }
    rep.grid.push_back(n);
    rep.stats.push_back(worst);
    detail << "n=" << n << " max rank " << worst << " (bound " << bound
           << "); ";
  }
  rep.detail = detail.str();
  return rep;
}

}  // namespace dyadnet
