#pragma once

// Iteratively reweighted least squares with exchangeable working covariance:
// alternate moment estimation of the covariance parameters from residuals
// with weighted least squares using the structured inverse. Weighted solves
// never materialize the covariance; each weighting is an O(n^2) pattern
// application per column.

#include "dyadnet/array_exch.hpp"
#include "dyadnet/estimators.hpp"
#include "dyadnet/inversion.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

namespace dyadnet {

struct GeeConfig {
  int max_iter = 100;
  double tol = 1e-8;  // relative max-norm change in coefficients
  SeKind se_kind = SeKind::EXCH;
  // When set, the working covariance is held fixed instead of re-estimated
  // from residuals each iteration (single-layer data only).
  std::optional<ExchParams> fixed_params;
};

struct GeeResult {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd vcov;
  Eigen::VectorXd residuals;
  int iterations = 0;
  bool converged = false;
  int shrink_events = 0;  // PD enforcement shrink steps across all iterations
  SeKind se_kind = SeKind::EXCH;
  // Working parameters used at each iteration (single-layer fits).
  std::vector<ExchParams> param_trajectory;
  // Multi-layer fits: within slots 0..5 then cross slots 6..11 per iteration.
  std::vector<std::array<double, 12>> array_param_trajectory;
  std::optional<ExchParams> params;             // final working parameters
  std::optional<ArrayExchParams> array_params;  // final (multi-layer)
};

namespace detail {

inline bool variance_degenerate(double sigma2, const Eigen::VectorXd& y) {
  const double scale =
      std::max(1.0, y.squaredNorm() / std::max<Eigen::Index>(1, y.size()));
  return !(sigma2 > 1e-13 * scale);
}

// Weighted stack: block-diagonal application for R = 1; for the two-block
// multi-layer inverse (p1 diagonal, p2 off-diagonal) use
// (Wv)_r = (p1 - p2) v_r + p2 sum_s v_s.
inline Eigen::VectorXd apply_weights(const SixParams& p1, const SixParams& p2,
                                     const Eigen::VectorXd& v, int n, int R) {
  const int d = num_dyads(n);
  if (R == 1) return apply_pattern(p1, v, n);
  SixParams diff;
  for (int t = 0; t < 6; ++t) diff[t] = p1[t] - p2[t];
  Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
  for (int r = 0; r < R; ++r) total += v.segment(r * d, d);
  const Eigen::VectorXd shared = apply_pattern(p2, total, n);
  Eigen::VectorXd out(v.size());
  for (int r = 0; r < R; ++r)
    out.segment(r * d, d) = apply_pattern(diff, v.segment(r * d, d), n) + shared;
  return out;
}

inline Eigen::MatrixXd apply_weights_columns(const SixParams& p1,
                                             const SixParams& p2,
                                             const Eigen::MatrixXd& M, int n,
                                             int R) {
  Eigen::MatrixXd out(M.rows(), M.cols());
  for (int c = 0; c < M.cols(); ++c)
    out.col(c) = apply_weights(p1, p2, M.col(c), n, R);
  return out;
}

}  // namespace detail

// Generalized estimating-equation fit for directed data. Multi-layer data use
// the full-exch block structure for the working covariance.
inline GeeResult gee_fit(const RelationalDataset& ds, const GeeConfig& cfg) {
  ds.validate();
  if (!ds.directed)
    throw InvalidArgumentError(
        "gee_fit: weighted estimation is available for directed data only");
  if (ds.n < 3) throw InvalidArgumentError("gee_fit: need n >= 3");
  if (cfg.fixed_params && ds.R > 1)
    throw InvalidArgumentError(
        "gee_fit: fixed working parameters require single-layer data");
  const int n = ds.n, R = ds.R;
  const Eigen::MatrixXd& X = ds.X;
  const Eigen::VectorXd& y = ds.y;

  GeeResult out;
  out.se_kind = cfg.se_kind;
  Eigen::VectorXd beta = ols_fit(X, y).beta;

  SixParams p1, p2;  // current inverse-pattern blocks
  double step = 1.0;
  double prev_delta = std::numeric_limits<double>::infinity();
  int rising = 0;

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    out.iterations = iter;
    const Eigen::VectorXd e = y - X * beta;

    if (R == 1) {
      ExchParams prm = cfg.fixed_params
                           ? *cfg.fixed_params
                           : estimate_exch_params(to_square(e, n));
      if (detail::variance_degenerate(prm.sigma2, y)) {
        // Degenerate (near-zero) residual variance: fall back to identity
        // weights, under which the update is exactly least squares.
        p1 = SixParams{{1, 0, 0, 0, 0, 0}};
        p2 = SixParams{};
        out.param_trajectory.push_back(prm);
      } else {
        prm = enforce_pd(prm, n, out.shrink_events);
        out.param_trajectory.push_back(prm);
        p1 = invert_pattern(six_from_exch(prm), n);
        p2 = SixParams{};
      }
    } else {
      const ArrayExchParams prm = estimate_array_params(
          residual_layers(e, n, R), ArrayStructure::FullExch);
      SixParams w, c;
      for (int t = 0; t < 6; ++t) {
        w[t] = prm.blocks[0][t];
        c[t] = prm.blocks[1][t];
      }
      std::array<double, 12> row{};
      if (detail::variance_degenerate(w[kSlotSame], y)) {
        p1 = SixParams{{1, 0, 0, 0, 0, 0}};
        p2 = SixParams{};
        for (int t = 0; t < 6; ++t) {
          row[t] = w[t];
          row[6 + t] = c[t];
        }
      } else {
        auto [we, ce] = enforce_pd_array(w, c, n, R, out.shrink_events);
        for (int t = 0; t < 6; ++t) {
          row[t] = we[t];
          row[6 + t] = ce[t];
        }
        std::tie(p1, p2) = invert_array_pattern(we, ce, n, R);
      }
      out.array_param_trajectory.push_back(row);
    }

    const Eigen::MatrixXd WX = detail::apply_weights_columns(p1, p2, X, n, R);
    const Eigen::VectorXd Wy = detail::apply_weights(p1, p2, y, n, R);
    const Eigen::MatrixXd A = X.transpose() * WX;
    const Eigen::VectorXd target = A.ldlt().solve(X.transpose() * Wy);

    const Eigen::VectorXd delta = target - beta;
    const double dn = delta.norm();
    if (dn > prev_delta) {
      if (++rising >= 3) {
        step *= 0.5;
        rising = 0;
      }
    } else {
      rising = 0;
    }
    prev_delta = dn;

    const Eigen::VectorXd beta_new = beta + step * delta;
    const double rel = (beta_new - beta).cwiseAbs().maxCoeff() /
                       std::max(1.0, beta.cwiseAbs().maxCoeff());
    beta = beta_new;
    if (rel < cfg.tol) {
      out.converged = true;
      break;
    }
  }

  // Final weights and sandwich from the converged coefficients' residuals.
  const Eigen::VectorXd e = y - X * beta;
  out.beta_hat = beta;
  out.residuals = e;

  if (R == 1) {
    ExchParams prm = cfg.fixed_params ? *cfg.fixed_params
                                      : estimate_exch_params(to_square(e, n));
    out.params = prm;
    if (detail::variance_degenerate(prm.sigma2, y)) {
      p1 = SixParams{{1, 0, 0, 0, 0, 0}};
      p2 = SixParams{};
    } else {
      const ExchParams pd = enforce_pd(prm, n, out.shrink_events);
      p1 = invert_pattern(six_from_exch(pd), n);
      p2 = SixParams{};
    }
    const Eigen::MatrixXd WX = detail::apply_weights_columns(p1, p2, X, n, R);
    const Eigen::MatrixXd A = X.transpose() * WX;
    Eigen::MatrixXd meat;
    switch (cfg.se_kind) {
      case SeKind::HC: meat = hc_meat(WX, e); break;
      case SeKind::DC: meat = dc_meat(WX, e, n); break;
      case SeKind::EXCH: meat = exch_meat(WX, prm, n); break;
    }
    const Eigen::MatrixXd Ainv = A.fullPivLu().inverse();
    Eigen::MatrixXd v = Ainv * meat * Ainv.transpose();
    out.vcov = 0.5 * (v + v.transpose());
  } else {
    const ArrayExchParams prm = estimate_array_params(
        residual_layers(e, n, R), ArrayStructure::FullExch);
    out.array_params = prm;
    SixParams w, c;
    for (int t = 0; t < 6; ++t) {
      w[t] = prm.blocks[0][t];
      c[t] = prm.blocks[1][t];
    }
    if (detail::variance_degenerate(w[kSlotSame], y)) {
      p1 = SixParams{{1, 0, 0, 0, 0, 0}};
      p2 = SixParams{};
    } else {
      int scratch = 0;
      auto [we, ce] = enforce_pd_array(w, c, n, R, scratch);
      std::tie(p1, p2) = invert_array_pattern(we, ce, n, R);
    }
    const Eigen::MatrixXd WX = detail::apply_weights_columns(p1, p2, X, n, R);
    const Eigen::MatrixXd A = X.transpose() * WX;
    Eigen::MatrixXd meat;
    switch (cfg.se_kind) {
      case SeKind::HC: meat = hc_meat(WX, e); break;
      case SeKind::DC: meat = array_dc_meat(WX, e, n, R); break;
      case SeKind::EXCH: meat = array_exch_meat(WX, prm, n); break;
    }
    const Eigen::MatrixXd Ainv = A.fullPivLu().inverse();
    Eigen::MatrixXd v = Ainv * meat * Ainv.transpose();
    out.vcov = 0.5 * (v + v.transpose());
  }
  return out;
}

}  // namespace dyadnet
