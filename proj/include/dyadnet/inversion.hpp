#pragma once

// Constant-cost inversion of exchangeable covariance patterns. A six-slot
// pattern (same, reciprocal, common-sender, common-receiver, sender-receiver,
// disjoint) stays closed under inversion, so the inverse parameters solve a
// 6x6 linear system whose coefficients depend only on the slot values and n.
// Multi-layer covariances with one within block and one cross block reduce to
// a 12x12 system the same way. Also holds the closed-form eigenvalue screens
// used for positive-definiteness checks.

#include "dyadnet/estimators.hpp"

#include <array>
#include <cmath>
#include <utility>
#include <vector>

namespace dyadnet {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

// Six pattern values in canonical slot order. For a covariance the disjoint
// slot is zero; its inverse generally carries all six nonzero.
struct SixParams {
  std::array<double, 6> v{};

  double operator[](int t) const { return v[t]; }
  double& operator[](int t) { return v[t]; }
};

inline SixParams six_from_exch(const ExchParams& p) {
  return SixParams{p.slots()};
}

// Dense pattern matrix over the n(n-1) ordered dyads (tests, small n).
inline Eigen::MatrixXd materialize_pattern(const SixParams& q, int n) {
  const int d = num_dyads(n);
  Eigen::MatrixXd M(d, d);
  for (int a = 0; a < d; ++a) {
    const auto [i, j] = dyad_at(a, n);
    for (int b = 0; b < d; ++b) {
      const auto [k, l] = dyad_at(b, n);
      M(a, b) = q[slot_of(classify_pair(i, j, k, l))];
    }
  }
  return M;
}

// Coefficient matrix of the inverse-pattern linear system, transcribed from
// the six-equation display; row t states the t-th unique value of the product
// of two patterns as a linear function of the second pattern's slots.
inline Matrix6d build_c_matrix(const SixParams& f, int n) {
  const double n2 = n - 2, n3 = n - 3, n4 = n - 4, n5 = n - 5;
  Matrix6d C;
  C << f[0], f[1], n2 * f[2], n2 * f[3], 2 * n2 * f[4], n2 * n3 * f[5],
      f[1], f[0], n2 * f[4], n2 * f[4], n2 * (f[2] + f[3]), n2 * n3 * f[5],
      f[2], f[4], f[0] + n3 * f[2], f[4] + n3 * f[5],
      f[1] + f[3] + n3 * (f[4] + f[5]), n3 * (f[3] + f[4] + n4 * f[5]),
      f[3], f[4], f[4] + n3 * f[5], f[0] + n3 * f[3],
      f[1] + f[2] + n3 * (f[4] + f[5]), n3 * (f[2] + f[4] + n4 * f[5]),
      f[4], f[3], f[1] + n3 * f[4], f[2] + n3 * f[5],
      f[0] + f[4] + n3 * (f[3] + f[5]), n3 * (f[2] + f[4] + n4 * f[5]),
      f[5], f[5], f[3] + f[4] + n4 * f[5], f[2] + f[4] + n4 * f[5],
      f[2] + f[3] + 2 * f[4] + 2 * n4 * f[5],
      f[0] + f[1] + n4 * (f[2] + f[3] + 2 * f[4] + n5 * f[5]);
  return C;
}

namespace detail {

// Representative dyad-pair positions for each slot (slot -> (row, col) in the
// dense pattern). Disjoint needs n >= 4.
inline std::array<std::pair<int, int>, 6> slot_positions(int n) {
  std::array<std::pair<int, int>, 6> pos{};
  pos[kSlotSame] = {dyad_pos(0, 1, n), dyad_pos(0, 1, n)};
  pos[kSlotRecip] = {dyad_pos(0, 1, n), dyad_pos(1, 0, n)};
  pos[kSlotCommonSender] = {dyad_pos(0, 1, n), dyad_pos(0, 2, n)};
  pos[kSlotCommonReceiver] = {dyad_pos(0, 2, n), dyad_pos(1, 2, n)};
  pos[kSlotSenderReceiver] = {dyad_pos(0, 1, n), dyad_pos(1, 2, n)};
  pos[kSlotDisjoint] = n >= 4 ? std::make_pair(dyad_pos(0, 1, n), dyad_pos(2, 3, n))
                              : std::make_pair(0, 0);
  return pos;
}

inline SixParams extract_pattern(const Eigen::MatrixXd& M, int n) {
  SixParams out;
  const auto pos = slot_positions(n);
  for (int t = 0; t < 6; ++t)
    out[t] = (t == kSlotDisjoint && n < 4) ? 0.0 : M(pos[t].first, pos[t].second);
  return out;
}

}  // namespace detail

// Inverse pattern p with Omega(f) * Omega(p) = I. Closed form (6x6 solve) for
// n >= 6; for n in {3,4,5} the materialized matrix is tiny and inverted
// densely instead, since the system's coefficients degenerate there.
inline SixParams invert_pattern(const SixParams& f, int n) {
  if (n < 3) throw InvalidArgumentError("invert_pattern: need n >= 3");
  if (n < 6) {
    const Eigen::MatrixXd M = materialize_pattern(f, n);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible())
      throw NotInvertibleError("invert_pattern: pattern matrix is singular");
    return detail::extract_pattern(lu.inverse(), n);
  }
  const Matrix6d C = build_c_matrix(f, n);
  Eigen::FullPivLU<Matrix6d> lu(C);
  if (!lu.isInvertible())
    throw NotInvertibleError("invert_pattern: linear system is singular");
  const Vector6d p = lu.solve(Vector6d::Unit(0));
  SixParams out;
  for (int t = 0; t < 6; ++t) out[t] = p[t];
  return out;
}

inline SixParams invert_exch(const ExchParams& params, int n) {
  return invert_pattern(six_from_exch(params), n);
}

// Inverse of the two-block multi-layer pattern (within block f1 on the
// diagonal, cross block f2 elsewhere): diagonal/off-diagonal inverse blocks
// (p1, p2) solve
//   C(f1,n) p1 + (R-1) C(f2,n) p2 = e1
//   C(f2,n) p1 + C(f1,n) p2 + (R-2) C(f2,n) p2 = 0.
inline std::pair<SixParams, SixParams> invert_array_pattern(const SixParams& f1,
                                                            const SixParams& f2,
                                                            int n, int R) {
  if (R < 2) throw InvalidArgumentError("invert_array_pattern: need R >= 2");
  if (n < 4) {
    // dense bypass: invert one (2 n(n-1))-dim two-layer block matrix; the
    // inverse blocks depend on R through the same pattern algebra, so solve
    // the R-layer matrix directly at this tiny size.
    const int d = num_dyads(n);
    const Eigen::MatrixXd B1 = materialize_pattern(f1, n);
    const Eigen::MatrixXd B2 = materialize_pattern(f2, n);
    Eigen::MatrixXd M(R * d, R * d);
    for (int r = 0; r < R; ++r)
      for (int s = 0; s < R; ++s) M.block(r * d, s * d, d, d) = r == s ? B1 : B2;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible())
      throw NotInvertibleError("invert_array_pattern: matrix is singular");
    const Eigen::MatrixXd Inv = lu.inverse();
    return {detail::extract_pattern(Inv.topLeftCorner(d, d), n),
            detail::extract_pattern(Inv.block(0, d, d, d), n)};
  }
  Eigen::Matrix<double, 12, 12> S;
  const Matrix6d C1 = build_c_matrix(f1, n);
  const Matrix6d C2 = build_c_matrix(f2, n);
  S.topLeftCorner<6, 6>() = C1;
  S.topRightCorner<6, 6>() = (R - 1) * C2;
  S.bottomLeftCorner<6, 6>() = C2;
  S.bottomRightCorner<6, 6>() = C1 + (R - 2) * C2;
  Eigen::FullPivLU<Eigen::Matrix<double, 12, 12>> lu(S);
  if (!lu.isInvertible())
    throw NotInvertibleError("invert_array_pattern: linear system is singular");
  Eigen::Matrix<double, 12, 1> rhs = Eigen::Matrix<double, 12, 1>::Zero();
  rhs[0] = 1.0;
  const Eigen::Matrix<double, 12, 1> p = lu.solve(rhs);
  SixParams p1, p2;
  for (int t = 0; t < 6; ++t) {
    p1[t] = p[t];
    p2[t] = p[6 + t];
  }
  return {p1, p2};
}

// Omega(q) * v in O(n^2) via row sums, column sums and the grand total of the
// square form of v. The same routine applies Omega and Omega^{-1}.
inline Eigen::VectorXd apply_pattern(const SixParams& q,
                                     const Eigen::VectorXd& v, int n) {
  const Eigen::MatrixXd V = to_square(v, n);
  const Eigen::MatrixXd VT = V.transpose();
  const Eigen::VectorXd rv = V.rowwise().sum();
  const Eigen::VectorXd cv = V.colwise().sum();
  const double t = rv.sum();
  const auto brow = [&](const Eigen::VectorXd& x) {
    return x.replicate(1, n);
  };  // (i,j) -> x_i
  const auto bcol = [&](const Eigen::VectorXd& x) {
    return x.transpose().replicate(n, 1);
  };  // (i,j) -> x_j

  Eigen::MatrixXd M = q[kSlotSame] * V + q[kSlotRecip] * VT;
  if (q[kSlotCommonSender] != 0.0)
    M += q[kSlotCommonSender] * (brow(rv) - V);
  if (q[kSlotCommonReceiver] != 0.0)
    M += q[kSlotCommonReceiver] * (bcol(cv) - V);
  if (q[kSlotSenderReceiver] != 0.0)
    M += q[kSlotSenderReceiver] * (brow(cv) + bcol(rv) - 2.0 * VT);
  if (q[kSlotDisjoint] != 0.0)
    M += q[kSlotDisjoint] *
         (Eigen::MatrixXd::Constant(n, n, t) - brow(rv) - brow(cv) -
          bcol(rv) - bcol(cv) + V + VT);
  M.diagonal().setZero();
  return from_square(M);
}

inline Eigen::VectorXd apply_inverse(const SixParams& p,
                                     const Eigen::VectorXd& v, int n) {
  return apply_pattern(p, v, n);
}

inline Eigen::MatrixXd apply_pattern_columns(const SixParams& q,
                                             const Eigen::MatrixXd& M, int n) {
  Eigen::MatrixXd out(M.rows(), M.cols());
  for (int c = 0; c < M.cols(); ++c)
    out.col(c) = apply_pattern(q, M.col(c), n);
  return out;
}

// ---- positive definiteness ------------------------------------------------

struct PdCheck {
  bool pd = false;
  std::vector<std::pair<double, int>> eigenvalues;  // (value, multiplicity)
  bool dense_fallback = false;
};

// Undirected exchangeable correlation (off-diagonal value a for dyad pairs
// sharing an actor): three closed-form eigenvalues; PD iff
// a in (-1/(2(n-2)), 1/2).
inline PdCheck check_pd_undirected(double a, int n) {
  if (n < 4) throw InvalidArgumentError("check_pd_undirected: need n >= 4");
  PdCheck out;
  out.eigenvalues = {{1.0 + 2.0 * (n - 2) * a, 1},
                     {1.0 - 2.0 * a, n * (n - 3) / 2},
                     {1.0 + (n - 4) * a, n - 1}};
  out.pd = true;
  for (const auto& [v, mult] : out.eigenvalues)
    if (mult > 0 && v <= 0.0) out.pd = false;
  return out;
}

// Directed exchangeable correlation with off-diagonal values a (reciprocal),
// b (common receiver), c (common sender), d (sender-receiver): five
// closed-form eigenvalues. A negative discriminant is reported and resolved
// by a dense eigendecomposition.
inline PdCheck check_pd_directed(double a, double b, double c, double d,
                                 int n) {
  if (n < 5) throw InvalidArgumentError("check_pd_directed: need n >= 5");
  PdCheck out;
  const double alpha = (c * c + b * b) * (n * n - 2.0 * n + 1.0) +
                       4.0 * d * d * (n * n - 6.0 * n + 9.0) +
                       2.0 * b * c * (1.0 - n * n + 2.0 * n);
  const double beta = a * d * (8.0 * n - 24.0) +
                      (b + c) * d * (12.0 - 4.0 * n) +
                      4.0 * a * (a - (b + c));
  if (alpha + beta < 0.0) {
    out.dense_fallback = true;
    SixParams q;
    q[kSlotSame] = 1.0;
    q[kSlotRecip] = a;
    q[kSlotCommonReceiver] = b;
    q[kSlotCommonSender] = c;
    q[kSlotSenderReceiver] = d;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        materialize_pattern(q, n), Eigen::EigenvaluesOnly);
    out.pd = es.eigenvalues().minCoeff() > 0.0;
    for (int k = 0; k < es.eigenvalues().size(); ++k)
      out.eigenvalues.emplace_back(es.eigenvalues()[k], 1);
    return out;
  }
  const double half = ((n - 3.0) * (b + c) - 2.0 * d + 2.0) / 2.0;
  const double root = std::sqrt(alpha + beta) / 2.0;
  const int block = (n - 1) * (n - 2) / 2;
  out.eigenvalues = {
      {1.0 + a + (n - 2.0) * (b + c) + 2.0 * (n - 2.0) * d, 1},
      {1.0 + a - (b + c + 2.0 * d), block - 1},
      {1.0 - (a + b + c) + 2.0 * d, block},
      {half + root, n - 1},
      {half - root, n - 1},
  };
  out.pd = true;
  for (const auto& [v, mult] : out.eigenvalues)
    if (mult > 0 && v <= 0.0) out.pd = false;
  return out;
}

// PD decision for a six-slot covariance pattern (zero disjoint slot): fast
// closed-form screen with a dense check whenever the verdict is marginal or
// the closed forms do not apply.
inline bool pattern_is_pd(const SixParams& q, int n) {
  if (!(q[kSlotSame] > 0.0)) return false;
  const double s2 = q[kSlotSame];
  const bool closed_ok = q[kSlotDisjoint] == 0.0 && n >= 5;
  double min_corr_eig = 0.0;
  bool anomalous = true;
  if (closed_ok) {
    const PdCheck chk =
        check_pd_directed(q[kSlotRecip] / s2, q[kSlotCommonReceiver] / s2,
                          q[kSlotCommonSender] / s2,
                          q[kSlotSenderReceiver] / s2, n);
    if (!chk.dense_fallback) {
      anomalous = false;
      min_corr_eig = chk.eigenvalues.front().first;
      for (const auto& [v, mult] : chk.eigenvalues)
        if (mult > 0) min_corr_eig = std::min(min_corr_eig, v);
    }
  }
  if (!anomalous && std::abs(min_corr_eig) > 1e-6)
    return min_corr_eig > 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(materialize_pattern(q, n),
                                                    Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() > 1e-12 * scale;
}

// Shrink the covariance parameters toward independence (halving all phi
// slots, keeping the variance) until the pattern is positive definite.
inline ExchParams enforce_pd(const ExchParams& params, int n,
                             int& shrink_count) {
  ExchParams prm = params;
  if (!(prm.sigma2 > 0.0))
    throw NotInvertibleError("enforce_pd: nonpositive variance estimate");
  for (int iter = 0; iter < 80; ++iter) {
    if (pattern_is_pd(six_from_exch(prm), n)) return prm;
    prm.phi_a *= 0.5;
    prm.phi_b *= 0.5;
    prm.phi_c *= 0.5;
    prm.phi_d *= 0.5;
    ++shrink_count;
  }
  prm.phi_a = prm.phi_b = prm.phi_c = prm.phi_d = 0.0;
  return prm;
}

// Multi-layer two-block pattern: PD iff both eigenblocks w + (R-1)c and w - c
// are PD (block eigenstructure of I (x) (w - c) + J (x) c).
inline bool array_pattern_is_pd(const SixParams& w, const SixParams& c, int n,
                                int R) {
  SixParams sum, diff;
  for (int t = 0; t < 6; ++t) {
    sum[t] = w[t] + (R - 1) * c[t];
    diff[t] = w[t] - c[t];
  }
  return pattern_is_pd(sum, n) && pattern_is_pd(diff, n);
}

inline std::pair<SixParams, SixParams> enforce_pd_array(const SixParams& w,
                                                        const SixParams& c,
                                                        int n, int R,
                                                        int& shrink_count) {
  SixParams ww = w, cc = c;
  if (!(ww[kSlotSame] > 0.0))
    throw NotInvertibleError("enforce_pd_array: nonpositive variance estimate");
  for (int iter = 0; iter < 80; ++iter) {
    if (array_pattern_is_pd(ww, cc, n, R)) return {ww, cc};
    for (int t = 0; t < 6; ++t) {
      if (t != kSlotSame) ww[t] *= 0.5;
      cc[t] *= 0.5;
    }
    ++shrink_count;
  }
  for (int t = 0; t < 6; ++t) {
    if (t != kSlotSame) ww[t] = 0.0;
    cc[t] = 0.0;
  }
  return {ww, cc};
}

}  // namespace dyadnet
