#pragma once

// Monte Carlo study harness: covariate and error generators for the three
// error regimes (iid, bilinear mixed effects, block heterogeneity), and a
// coverage experiment that holds each covariate draw fixed while replicating
// errors. Replicates are distributed over worker threads with slot-written
// results, so output is independent of thread count.

#include "dyadnet/estimators.hpp"
#include "dyadnet/relational.hpp"
#include "dyadnet/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dyadnet {

// ---- threading --------------------------------------------------------------

inline int max_threads() {
  if (const char* env = std::getenv("DYADNET_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Run fn(i) for i in [0, total) on up to max_threads() workers. fn must write
// only to its own slot i.
template <typename Fn>
inline void parallel_for(int total, Fn&& fn) {
  const int workers = std::min(max_threads(), total);
  if (workers <= 1) {
    for (int i = 0; i < total; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < total; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

// ---- normal quantile --------------------------------------------------------

// Inverse standard normal CDF (Wichura's double-precision rational
// approximation; |error| < 1e-15 over (0, 1)).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw InvalidArgumentError("normal_quantile: p must be in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

// ---- generators -------------------------------------------------------------

enum class ErrorModel { IID, Bilinear, NonExch };

inline const char* error_model_name(ErrorModel m) {
  switch (m) {
    case ErrorModel::IID: return "iid";
    case ErrorModel::Bilinear: return "bilinear";
    case ErrorModel::NonExch: return "nonexch";
  }
  return "?";
}

// Bilinear mixed-effects error components: correlated sender/receiver
// effects, latent-position inner product, symmetric dyad effect, iid noise.
struct BilinearParams {
  double sigma_eps = 0.866;
  double sigma_a = 0.957;
  double sigma_b = 0.677;
  double sigma_gamma = 0.677;
  double sigma_z = 0.677;
  int z_dim = 2;
  double rho_ab = 0.5;

  double var_total() const {
    return sigma_a * sigma_a + sigma_b * sigma_b +
           z_dim * std::pow(sigma_z, 4) + sigma_gamma * sigma_gamma +
           sigma_eps * sigma_eps;
  }
  // Population covariances by pair configuration (slot order, disjoint 0).
  std::array<double, 6> slot_moments() const {
    std::array<double, 6> m{};
    m[kSlotSame] = var_total();
    m[kSlotRecip] = 2.0 * rho_ab * sigma_a * sigma_b +
                    z_dim * std::pow(sigma_z, 4) + sigma_gamma * sigma_gamma;
    m[kSlotCommonSender] = sigma_a * sigma_a;
    m[kSlotCommonReceiver] = sigma_b * sigma_b;
    m[kSlotSenderReceiver] = rho_ab * sigma_a * sigma_b;
    m[kSlotDisjoint] = 0.0;
    return m;
  }
};

// Covariate design over ordered dyads: intercept, a binary product
// x2_i * x2_j, an absolute difference |x3_i - x3_j|, and an iid dyadic
// covariate. The binary actor variable is resampled one random entry at a
// time until at least two actors carry a one and at least one carries a zero,
// so the product column is neither all-zero nor collinear with the intercept.
inline Eigen::MatrixXd gen_covariates(int n, Rng& rng) {
  std::vector<double> x2(n);
  for (auto& v : x2) v = rng.bernoulli() ? 1.0 : 0.0;
  for (;;) {
    const int ones = static_cast<int>(
        std::count(x2.begin(), x2.end(), 1.0));
    if (ones >= 2 && ones < n) break;
    x2[static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)))] =
        rng.bernoulli() ? 1.0 : 0.0;
  }
  std::vector<double> x3(n);
  for (auto& v : x3) v = rng.normal();

  const int d = num_dyads(n);
  Eigen::MatrixXd X(d, 4);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int pos = dyad_pos(i, j, n);
      X(pos, 0) = 1.0;
      X(pos, 1) = x2[i] * x2[j];
      X(pos, 2) = std::abs(x3[i] - x3[j]);
      X(pos, 3) = rng.normal();
    }
  return X;
}

// iid N(0, 3) errors.
inline Eigen::MatrixXd gen_errors_iid(int n, Rng& rng) {
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
  const double sd = std::sqrt(3.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) E(i, j) = sd * rng.normal();
  return E;
}

inline Eigen::MatrixXd gen_errors_bilinear(int n, const BilinearParams& prm,
                                           Rng& rng) {
  Eigen::VectorXd a(n), b(n);
  const double rc = std::sqrt(1.0 - prm.rho_ab * prm.rho_ab);
  for (int i = 0; i < n; ++i) {
    const double g1 = rng.normal(), g2 = rng.normal();
    a[i] = prm.sigma_a * g1;
    b[i] = prm.sigma_b * (prm.rho_ab * g1 + rc * g2);
  }
  Eigen::MatrixXd Z(n, prm.z_dim);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < prm.z_dim; ++k) Z(i, k) = prm.sigma_z * rng.normal();
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double gamma = prm.sigma_gamma * rng.normal();
      const double zz = Z.row(i).dot(Z.row(j));
      E(i, j) = a[i] + b[j] + zz + gamma + prm.sigma_eps * rng.normal();
      E(j, i) = a[j] + b[i] + zz + gamma + prm.sigma_eps * rng.normal();
    }
  return E;
}

// Block heterogeneity: one shared random shift on dyads inside the first
// half of the actors, plus iid noise; scaled so the total variance matches
// the iid regime on average.
inline Eigen::MatrixXd gen_errors_nonexch(int n, Rng& rng) {
  const int h = n / 2;
  const double tau =
      std::sqrt(9.0 * n / (4.0 * h)) * rng.normal();
  const double sd = std::sqrt(0.75);
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      E(i, j) = sd * rng.normal() + (i < h && j < h ? tau : 0.0);
    }
  return E;
}

inline Eigen::MatrixXd gen_errors(ErrorModel model, int n,
                                  const BilinearParams& prm, Rng& rng) {
  switch (model) {
    case ErrorModel::IID: return gen_errors_iid(n, rng);
    case ErrorModel::Bilinear: return gen_errors_bilinear(n, prm, rng);
    case ErrorModel::NonExch: return gen_errors_nonexch(n, rng);
  }
  throw InvalidArgumentError("gen_errors: unknown model");
}

// ---- coverage experiment ----------------------------------------------------

struct SimDesign {
  int n = 40;
  int num_designs = 50;      // independent covariate draws
  int reps_per_design = 200; // error replicates per covariate draw
  ErrorModel errors = ErrorModel::Bilinear;
  BilinearParams bilinear;
  double ci_level = 0.95;
  std::uint64_t seed = 20260800;
  std::vector<SeKind> estimators = {SeKind::HC, SeKind::DC, SeKind::EXCH};
  Eigen::Vector4d beta = Eigen::Vector4d::Ones();
};

struct CoverageReport {
  SimDesign design;
  // Indexed [estimator][coefficient][design draw].
  std::vector<std::vector<std::vector<double>>> coverage;
  std::vector<std::vector<std::vector<double>>> mean_se;
  std::vector<std::vector<std::vector<double>>> sd_se;
  // True sampling sd of each coefficient within each design draw.
  std::vector<std::vector<double>> mc_sd;  // [coefficient][design draw]
  std::vector<long> failures;              // per estimator, across all reps
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw InvalidArgumentError("median_of: empty");
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Linear-interpolation quantile of a sample (q in [0,1]).
inline double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgumentError("quantile_of: empty");
  if (!(q >= 0.0 && q <= 1.0))
    throw InvalidArgumentError("quantile_of: q outside [0,1]");
  std::sort(v.begin(), v.end());
  const double h = q * (static_cast<double>(v.size()) - 1.0);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Coverage study: per covariate draw, replicate errors, fit least squares,
// and record per-estimator interval coverage of the true coefficients along
// with the mean and sd of the standard errors; the draw's Monte Carlo
// coefficient sd is the benchmark. Draw d uses covariate stream (seed,1,d,0)
// and error streams (seed,2,d,k), so results do not depend on scheduling.
inline CoverageReport run_coverage(const SimDesign& design) {
  const int n = design.n, p = 4;
  if (n < 4) throw InvalidArgumentError("run_coverage: need n >= 4");
  const int ne = static_cast<int>(design.estimators.size());
  const int nd = design.num_designs, nr = design.reps_per_design;
  if (ne == 0 || nd < 1 || nr < 2)
    throw InvalidArgumentError("run_coverage: degenerate design");
  const double z = normal_quantile(0.5 + design.ci_level / 2.0);

  CoverageReport rep;
  rep.design = design;
  rep.coverage.assign(ne, std::vector<std::vector<double>>(
                              p, std::vector<double>(nd, 0.0)));
  rep.mean_se = rep.coverage;
  rep.sd_se = rep.coverage;
  rep.mc_sd.assign(p, std::vector<double>(nd, 0.0));
  rep.failures.assign(ne, 0);
  std::vector<std::vector<long>> fail_slots(nd, std::vector<long>(ne, 0));

  parallel_for(nd, [&](int draw) {
    Rng xr(design.seed, 1, static_cast<std::uint64_t>(draw), 0);
    const Eigen::MatrixXd X = gen_covariates(n, xr);
    const Eigen::VectorXd mean = X * design.beta;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    const bool design_ok = qr.rank() == p;
    // Configuration sums of the fixed design: the exchangeable meat for any
    // parameter values combines these six matrices, so compute them once.
    const PairSums ps = design_ok ? pair_sums(X, n) : PairSums{};

    Eigen::MatrixXd betas(p, nr);
    std::vector<std::vector<std::vector<double>>> ses(
        ne, std::vector<std::vector<double>>(p));
    std::vector<std::vector<long>> covered(ne, std::vector<long>(p, 0));
    std::vector<long> ok_reps(ne, 0);

    for (int k = 0; k < nr; ++k) {
      Rng er(design.seed, 2, static_cast<std::uint64_t>(draw),
             static_cast<std::uint64_t>(k));
      const Eigen::MatrixXd E = gen_errors(design.errors, n, design.bilinear, er);
      const Eigen::VectorXd y = mean + from_square(E);
      if (!design_ok) {
        for (int s = 0; s < ne; ++s) ++fail_slots[draw][s];
        betas.col(k).setZero();
        continue;
      }
      const Eigen::VectorXd beta_hat = qr.solve(y);
      betas.col(k) = beta_hat;
      const Eigen::VectorXd e = y - X * beta_hat;

      for (int s = 0; s < ne; ++s) {
        try {
          Eigen::MatrixXd meat;
          switch (design.estimators[s]) {
            case SeKind::HC: meat = hc_meat(X, e); break;
            case SeKind::DC: meat = dc_meat(X, e, n); break;
            case SeKind::EXCH:
              meat = combine_pair_sums(
                  ps, estimate_exch_params(to_square(e, n)).slots());
              break;
          }
          const Eigen::MatrixXd vcov = sandwich_vcov(X, meat);
          ++ok_reps[s];
          for (int c = 0; c < p; ++c) {
            const double se = std::sqrt(std::max(0.0, vcov(c, c)));
            ses[s][c].push_back(se);
            if (std::abs(beta_hat[c] - design.beta[c]) <= z * se)
              ++covered[s][c];
          }
        } catch (const Error&) {
          ++fail_slots[draw][s];
        }
      }
    }

    for (int c = 0; c < p; ++c) {
      const double mu = betas.row(c).mean();
      rep.mc_sd[c][draw] = std::sqrt(
          (betas.row(c).array() - mu).square().sum() / (nr - 1));
    }
    for (int s = 0; s < ne; ++s) {
      const double denom = std::max<long>(1, ok_reps[s]);
      for (int c = 0; c < p; ++c) {
        rep.coverage[s][c][draw] = covered[s][c] / denom;
        if (!ses[s][c].empty()) {
          double m = 0.0;
          for (double v : ses[s][c]) m += v;
          m /= static_cast<double>(ses[s][c].size());
          double sq = 0.0;
          for (double v : ses[s][c]) sq += (v - m) * (v - m);
          rep.mean_se[s][c][draw] = m;
          rep.sd_se[s][c][draw] =
              ses[s][c].size() > 1
                  ? std::sqrt(sq / (static_cast<double>(ses[s][c].size()) - 1.0))
                  : 0.0;
        }
      }
    }
  });

  for (int draw = 0; draw < nd; ++draw)
    for (int s = 0; s < ne; ++s) rep.failures[s] += fail_slots[draw][s];
  return rep;
}

}  // namespace dyadnet
