#pragma once

// OLS fitting, exchangeable parameter estimation from residuals, and the
// HC / DC / EXCH sandwich variance estimators for a single relation matrix,
// directed or undirected. All quadratic forms against structured covariance
// patterns are computed without materializing the n(n-1) x n(n-1) matrix:
// everything reduces to per-actor row/column aggregates in O(n^2 p + n p^2).

#include "dyadnet/relational.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dyadnet {

// The five exchangeable covariance parameters. phi_a pairs reciprocal dyads,
// phi_b dyads with a common receiver, phi_c dyads with a common sender, and
// phi_d dyads joined by one actor acting in opposite roles.
struct ExchParams {
  double sigma2 = 0.0;
  double phi_a = 0.0;
  double phi_b = 0.0;
  double phi_c = 0.0;
  double phi_d = 0.0;

  // Canonical six-slot form (same, recip, common-sender, common-receiver,
  // sender-receiver, disjoint).
  std::array<double, 6> slots() const {
    return {sigma2, phi_a, phi_c, phi_b, phi_d, 0.0};
  }
  static ExchParams from_slots(const std::array<double, 6>& s) {
    return {s[kSlotSame], s[kSlotRecip], s[kSlotCommonReceiver],
            s[kSlotCommonSender], s[kSlotSenderReceiver]};
  }
};

struct UndirectedParams {
  double theta = 0.0;  // variance
  double phi = 0.0;    // covariance of dyads sharing an actor
};

enum class SeKind { HC, DC, EXCH };

inline const char* se_kind_name(SeKind k) {
  switch (k) {
    case SeKind::HC: return "hc";
    case SeKind::DC: return "dc";
    case SeKind::EXCH: return "exch";
  }
  return "?";
}

struct OlsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd residuals;
};

struct FitResult {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd vcov;
  SeKind se_kind = SeKind::EXCH;
  Eigen::VectorXd residuals;
  std::optional<ExchParams> exch_params;
  std::optional<UndirectedParams> undirected_params;
};

inline OlsFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size())
    throw DimensionError("ols_fit: X rows != y length");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  const int p = static_cast<int>(X.cols());
  if (qr.rank() < p) {
    std::vector<int> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (int k = qr.rank(); k < p; ++k) dependent.push_back(perm[k]);
    throw RankDeficientError(
        "ols_fit: design is rank deficient (rank " +
            std::to_string(qr.rank()) + " of " + std::to_string(p) + ")",
        dependent);
  }
  OlsFit fit;
  fit.beta = qr.solve(y);
  fit.residuals = y - X * fit.beta;
  return fit;
}

inline OlsFit ols_fit(const RelationalDataset& ds) {
  ds.validate();
  return ols_fit(ds.X, ds.y);
}

// Residual-product averages over each configuration class, O(n^2) through
// row/column sums of the residual matrix.
inline ExchParams estimate_exch_params(const Eigen::MatrixXd& E) {
  const int n = static_cast<int>(E.rows());
  if (E.cols() != n) throw DimensionError("estimate_exch_params: not square");
  if (n < 3)
    throw InvalidArgumentError("estimate_exch_params: need n >= 3");
  const double m = static_cast<double>(n) * (n - 1);
  const double m2 = m * (n - 2);
  const Eigen::VectorXd re = E.rowwise().sum();  // re_i = sum_j e_ij
  const Eigen::VectorXd ce = E.colwise().sum();  // ce_j = sum_i e_ij
  const double ss = E.squaredNorm();
  const double tr2 = E.cwiseProduct(E.transpose()).sum();  // sum e_ij e_ji
  ExchParams prm;
  prm.sigma2 = ss / m;
  prm.phi_a = tr2 / m;
  prm.phi_b = (ce.squaredNorm() - ss) / m2;
  prm.phi_c = (re.squaredNorm() - ss) / m2;
  prm.phi_d = (re.dot(ce) - tr2) / m2;
  return prm;
}

inline ExchParams estimate_exch_params(const Eigen::VectorXd& residuals,
                                       int n) {
  return estimate_exch_params(to_square(residuals, n));
}

// ---- matrix-free pair sums ------------------------------------------------
// For row blocks A (n(n-1) x pa) and B (n(n-1) x pb) in canonical order,
// m[t] = sum over ordered dyad pairs ((i,j),(k,l)) in configuration t of
// a_ij b_kl^T. Everything follows from per-actor aggregates:
//   sum over common-sender pairs  = sum_i RA_i RB_i^T - sum_ij a_ij b_ij^T
//   sum over common-receiver pairs= sum_j CA_j CB_j^T - sum_ij a_ij b_ij^T
//   sum over sender-receiver pairs= sum_i (RA_i CB_i^T + CA_i RB_i^T)
//                                   - 2 sum_ij a_ij b_ji^T
// and the disjoint class is the total outer product minus the overlap classes.
struct PairSums {
  std::array<Eigen::MatrixXd, 6> m;
};

inline PairSums pair_sums(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                          int n) {
  const int d = num_dyads(n);
  if (A.rows() != d || B.rows() != d)
    throw DimensionError("pair_sums: row count != n(n-1)");
  const int pa = static_cast<int>(A.cols());
  const int pb = static_cast<int>(B.cols());

  Eigen::MatrixXd same = A.transpose() * B;
  // Reciprocal term as a single product against the row-swapped copy of B.
  Eigen::MatrixXd Bswap(d, pb);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) Bswap.row(dyad_pos(i, j, n)) = B.row(dyad_pos(j, i, n));
  Eigen::MatrixXd recip = A.transpose() * Bswap;
  // Sender aggregates: rows of a fixed sender are contiguous.
  Eigen::MatrixXd RA(pa, n), RB(pb, n);
  Eigen::MatrixXd CA = Eigen::MatrixXd::Zero(pa, n);
  Eigen::MatrixXd CB = Eigen::MatrixXd::Zero(pb, n);
  for (int i = 0; i < n; ++i) {
    RA.col(i) = A.middleRows(i * (n - 1), n - 1).colwise().sum().transpose();
    RB.col(i) = B.middleRows(i * (n - 1), n - 1).colwise().sum().transpose();
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int pos = dyad_pos(i, j, n);
      CA.col(j) += A.row(pos).transpose();
      CB.col(j) += B.row(pos).transpose();
    }
  }
  const Eigen::VectorXd ta = RA.rowwise().sum();
  const Eigen::VectorXd tb = RB.rowwise().sum();

  PairSums out;
  out.m[kSlotSame] = same;
  out.m[kSlotRecip] = recip;
  out.m[kSlotCommonSender] = RA * RB.transpose() - same;
  out.m[kSlotCommonReceiver] = CA * CB.transpose() - same;
  out.m[kSlotSenderReceiver] =
      RA * CB.transpose() + CA * RB.transpose() - 2.0 * recip;
  out.m[kSlotDisjoint] = ta * tb.transpose() + same + recip -
                         (RA + CA) * (RB + CB).transpose();
  return out;
}

inline PairSums pair_sums(const Eigen::MatrixXd& A, int n) {
  return pair_sums(A, A, n);
}

// sum_t q[t] * m[t] over the six configuration sums.
inline Eigen::MatrixXd combine_pair_sums(const PairSums& ps,
                                         const std::array<double, 6>& q) {
  Eigen::MatrixXd out = q[0] * ps.m[0];
  for (int t = 1; t < 6; ++t)
    if (q[t] != 0.0) out += q[t] * ps.m[t];
  return out;
}

// The quadratic form A^T Omega(q) B for a six-slot pattern.
inline Eigen::MatrixXd six_slot_quadform(const Eigen::MatrixXd& A,
                                         const Eigen::MatrixXd& B,
                                         const std::array<double, 6>& q,
                                         int n) {
  return combine_pair_sums(pair_sums(A, B, n), q);
}

// X^T Omega_E X for the exchangeable pattern (disjoint slot zero).
inline Eigen::MatrixXd exch_meat(const Eigen::MatrixXd& X,
                                 const ExchParams& params, int n) {
  return six_slot_quadform(X, X, params.slots(), n);
}

// X^T Omega_DC X: every ordered dyad pair sharing at least one actor
// contributes e_ij e_kl x_ij x_kl^T. Scaling rows by residuals reduces this
// to the overlap classes of pair_sums.
inline Eigen::MatrixXd dc_meat(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& residuals, int n) {
  if (X.rows() != residuals.size())
    throw DimensionError("dc_meat: X rows != residual length");
  const Eigen::MatrixXd W = residuals.asDiagonal() * X;
  const PairSums ps = pair_sums(W, W, n);
  Eigen::MatrixXd out = ps.m[kSlotSame];
  out += ps.m[kSlotRecip];
  out += ps.m[kSlotCommonSender];
  out += ps.m[kSlotCommonReceiver];
  out += ps.m[kSlotSenderReceiver];
  return out;
}

// (X^T X)^-1 meat (X^T X)^-1, symmetrized against roundoff.
inline Eigen::MatrixXd sandwich_vcov(const Eigen::MatrixXd& X,
                                     const Eigen::MatrixXd& meat) {
  const int p = static_cast<int>(X.cols());
  if (meat.rows() != p || meat.cols() != p)
    throw DimensionError("sandwich_vcov: meat dimension != p");
  const Eigen::MatrixXd XtX = X.transpose() * X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(XtX);
  if (qr.rank() < p) {
    std::vector<int> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (int k = qr.rank(); k < p; ++k) dependent.push_back(perm[k]);
    throw RankDeficientError("sandwich_vcov: X^T X is singular", dependent);
  }
  const Eigen::MatrixXd half = qr.solve(meat);
  const Eigen::MatrixXd v = qr.solve(half.transpose()).transpose();
  return 0.5 * (v + v.transpose());
}

// HC0: diagonal meat sum_k e_k^2 x_k x_k^T.
inline Eigen::MatrixXd hc_meat(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& residuals) {
  if (X.rows() != residuals.size())
    throw DimensionError("hc_meat: X rows != residual length");
  return X.transpose() * residuals.array().square().matrix().asDiagonal() * X;
}

inline Eigen::MatrixXd hc_vcov(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& residuals) {
  return sandwich_vcov(X, hc_meat(X, residuals));
}

// ---- undirected ------------------------------------------------------------

// theta = tr(EE)/(n(n-1)); phi = (1'EE1 - tr(EE))/(n(n-1)(n-2)) from a
// symmetric zero-diagonal residual matrix.
inline UndirectedParams estimate_undirected_params(const Eigen::MatrixXd& E) {
  const int n = static_cast<int>(E.rows());
  if (E.cols() != n)
    throw InvalidResidualError("undirected params: matrix not square");
  if (n < 3)
    throw InvalidArgumentError("undirected params: need n >= 3");
  const double scale = E.cwiseAbs().maxCoeff();
  const double tol = 1e-12 * std::max(1.0, scale);
  if (((E - E.transpose()).cwiseAbs().maxCoeff()) > tol)
    throw InvalidResidualError("undirected params: residual matrix asymmetric");
  if (E.diagonal().cwiseAbs().maxCoeff() > tol)
    throw InvalidResidualError("undirected params: nonzero diagonal");
  const double m = static_cast<double>(n) * (n - 1);
  const Eigen::VectorXd s = E.rowwise().sum();
  const double trEE = E.squaredNorm();
  UndirectedParams prm;
  prm.theta = trEE / m;
  prm.phi = (s.squaredNorm() - trEE) / (m * (n - 2));
  return prm;
}

// Per-actor sums over the undirected design (rows in i<j pair order):
// A_i = sum over dyads containing i of x_dyad.
inline Eigen::MatrixXd undirected_actor_sums(const Eigen::MatrixXd& X, int n) {
  const int m = num_dyads(n, false);
  if (X.rows() != m)
    throw DimensionError("undirected_actor_sums: rows != n(n-1)/2");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(X.cols(), n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const auto row = X.row(pair_pos(i, j, n)).transpose();
      A.col(i) += row;
      A.col(j) += row;
    }
  return A;
}

// X^T Omega X for the undirected pattern: variance theta on the diagonal and
// phi for dyad pairs sharing exactly one actor.
inline Eigen::MatrixXd undirected_exch_meat(const Eigen::MatrixXd& X,
                                            const UndirectedParams& prm,
                                            int n) {
  const Eigen::MatrixXd XtX = X.transpose() * X;
  const Eigen::MatrixXd A = undirected_actor_sums(X, n);
  return prm.theta * XtX + prm.phi * (A * A.transpose() - 2.0 * XtX);
}

inline Eigen::MatrixXd undirected_dc_meat(const Eigen::MatrixXd& X,
                                          const Eigen::VectorXd& residuals,
                                          int n) {
  if (X.rows() != residuals.size())
    throw DimensionError("undirected_dc_meat: X rows != residual length");
  const Eigen::MatrixXd W = residuals.asDiagonal() * X;
  const Eigen::MatrixXd B = undirected_actor_sums(W, n);
  return B * B.transpose() - W.transpose() * W;
}

// Fit with a chosen SE estimator (single layer; directed or undirected).
inline FitResult fit_dataset(const RelationalDataset& ds, SeKind kind) {
  ds.validate();
  if (ds.R != 1)
    throw InvalidArgumentError("fit_dataset: R > 1 needs the array module");
  FitResult out;
  out.se_kind = kind;
  const OlsFit fit = ols_fit(ds.X, ds.y);
  out.beta_hat = fit.beta;
  out.residuals = fit.residuals;
  if (ds.directed) {
    switch (kind) {
      case SeKind::HC:
        out.vcov = hc_vcov(ds.X, fit.residuals);
        break;
      case SeKind::DC:
        out.vcov = sandwich_vcov(ds.X, dc_meat(ds.X, fit.residuals, ds.n));
        break;
      case SeKind::EXCH: {
        const ExchParams prm = estimate_exch_params(fit.residuals, ds.n);
        out.exch_params = prm;
        out.vcov = sandwich_vcov(ds.X, exch_meat(ds.X, prm, ds.n));
        break;
      }
    }
    if (kind != SeKind::EXCH && ds.n >= 3)
      out.exch_params = estimate_exch_params(fit.residuals, ds.n);
  } else {
    const Eigen::MatrixXd E = to_square_symmetric(fit.residuals, ds.n);
    const UndirectedParams uprm = estimate_undirected_params(E);
    out.undirected_params = uprm;
    switch (kind) {
      case SeKind::HC:
        out.vcov = hc_vcov(ds.X, fit.residuals);
        break;
      case SeKind::DC:
        out.vcov = sandwich_vcov(
            ds.X, undirected_dc_meat(ds.X, fit.residuals, ds.n));
        break;
      case SeKind::EXCH:
        out.vcov =
            sandwich_vcov(ds.X, undirected_exch_meat(ds.X, uprm, ds.n));
        break;
    }
  }
  return out;
}

}  // namespace dyadnet
