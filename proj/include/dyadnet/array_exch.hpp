#pragma once

// Multi-layer (array) extensions: exchangeable covariance blocks across
// layers, moment estimation of the block parameters, and the matching
// dependence-aware meat matrices. Every layer pair (r, s) gets a six-slot
// pattern block; the structure determines how many distinct blocks exist:
//   full-exch    one within block + one cross block shared by all r != s
//   stationary   blocks indexed by lag |r - s|
//   unrestricted one block per unordered layer pair
//   independent  within block only, cross blocks identically zero

#include "dyadnet/estimators.hpp"
#include "dyadnet/inversion.hpp"

#include <array>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dyadnet {

enum class ArrayStructure { FullExch, Stationary, Unrestricted, LayerIndependent };

inline const char* array_structure_name(ArrayStructure s) {
  switch (s) {
    case ArrayStructure::FullExch: return "full-exch";
    case ArrayStructure::Stationary: return "stationary";
    case ArrayStructure::Unrestricted: return "unrestricted";
    case ArrayStructure::LayerIndependent: return "independent";
  }
  return "?";
}

// Index of unordered layer pair (r, s), r <= s, in row-major upper-triangular
// order including the diagonal.
inline int layer_pair_index(int r, int s, int R) {
  if (r > s) std::swap(r, s);
  return r * R - r * (r - 1) / 2 + (s - r);
}

struct ArrayExchParams {
  ArrayStructure structure = ArrayStructure::FullExch;
  int R = 1;
  // Each block is a six-slot pattern in canonical order; the disjoint slot is
  // structurally zero in every block.
  std::vector<std::array<double, 6>> blocks;
  // Number of free covariance parameters the chosen structure realizes
  // (5 per block), recorded for diagnostics.
  int realized_slot_count = 0;

  const std::array<double, 6>& block_for(int r, int s) const {
    switch (structure) {
      case ArrayStructure::FullExch:
      case ArrayStructure::LayerIndependent:
        return blocks[r == s ? 0 : 1];
      case ArrayStructure::Stationary:
        return blocks[std::abs(r - s)];
      case ArrayStructure::Unrestricted:
        return blocks[layer_pair_index(r, s, R)];
    }
    throw InvalidArgumentError("block_for: unknown structure");
  }

  ExchParams within_exch(int r = 0) const {
    return ExchParams::from_slots(block_for(r, r));
  }
};

// The six pairwise sums S_t(E, F) = sum over dyad pairs in configuration t of
// E_{ij} F_{kl}, computed in O(n^2) from row/column sums. E and F are square
// with zero diagonal. Symmetric in (E, F).
inline std::array<double, 6> scalar_pair_sums(const Eigen::MatrixXd& E,
                                              const Eigen::MatrixXd& F) {
  const Eigen::VectorXd rE = E.rowwise().sum(), cE = E.colwise().sum();
  const Eigen::VectorXd rF = F.rowwise().sum(), cF = F.colwise().sum();
  const double tE = rE.sum(), tF = rF.sum();
  std::array<double, 6> s{};
  s[kSlotSame] = (E.array() * F.array()).sum();
  s[kSlotRecip] = (E.array() * F.transpose().array()).sum();
  s[kSlotCommonSender] = rE.dot(rF) - s[kSlotSame];
  s[kSlotCommonReceiver] = cE.dot(cF) - s[kSlotSame];
  s[kSlotSenderReceiver] = rE.dot(cF) + cE.dot(rF) - 2.0 * s[kSlotRecip];
  s[kSlotDisjoint] = tE * tF + s[kSlotSame] + s[kSlotRecip] -
                     (rE + cE).dot(rF + cF);
  return s;
}

namespace detail {

inline std::array<double, 6> block_from_cross_sums(
    const std::array<double, 6>& sums, const std::array<int64_t, 6>& counts,
    double weight) {
  std::array<double, 6> b{};
  for (int t = 0; t < 5; ++t)
    b[t] = sums[t] / (weight * static_cast<double>(counts[t]));
  b[kSlotDisjoint] = 0.0;
  return b;
}

}  // namespace detail

// Moment estimation of the block parameters from per-layer residual matrices
// (square, zero diagonal). Within-layer slots pool all layers; cross-layer
// slots pool the layer pairs the structure ties together.
inline ArrayExchParams estimate_array_params(
    const std::vector<Eigen::MatrixXd>& E, ArrayStructure structure) {
  const int R = static_cast<int>(E.size());
  if (R < 1) throw InvalidArgumentError("estimate_array_params: no layers");
  const int n = static_cast<int>(E[0].rows());
  if (n < 3)
    throw InvalidArgumentError("estimate_array_params: need n >= 3");
  for (const auto& Er : E)
    if (Er.rows() != n || Er.cols() != n)
      throw DimensionError("estimate_array_params: layer size mismatch");
  const auto counts = config_counts(n);

  ArrayExchParams out;
  out.structure = structure;
  out.R = R;

  std::array<double, 6> within_sums{};
  std::vector<std::array<double, 6>> self(R);
  for (int r = 0; r < R; ++r) {
    self[r] = scalar_pair_sums(E[r], E[r]);
    for (int t = 0; t < 5; ++t) within_sums[t] += self[r][t];
  }
  const auto within =
      detail::block_from_cross_sums(within_sums, counts, static_cast<double>(R));

  switch (structure) {
    case ArrayStructure::LayerIndependent: {
      out.blocks = {within, std::array<double, 6>{}};
      break;
    }
    case ArrayStructure::FullExch: {
      if (R < 2) {
        out.blocks = {within, std::array<double, 6>{}};
        break;
      }
      Eigen::MatrixXd P = E[0];
      for (int r = 1; r < R; ++r) P += E[r];
      const auto pooled = scalar_pair_sums(P, P);
      std::array<double, 6> cross_sums{};
      for (int t = 0; t < 5; ++t) cross_sums[t] = pooled[t] - within_sums[t];
      out.blocks = {within,
                    detail::block_from_cross_sums(
                        cross_sums, counts, static_cast<double>(R) * (R - 1))};
      break;
    }
    case ArrayStructure::Stationary: {
      out.blocks.assign(R, std::array<double, 6>{});
      out.blocks[0] = within;
      for (int lag = 1; lag < R; ++lag) {
        std::array<double, 6> sums{};
        for (int r = 0; r + lag < R; ++r) {
          const auto s = scalar_pair_sums(E[r], E[r + lag]);
          for (int t = 0; t < 5; ++t) sums[t] += s[t];
        }
        out.blocks[lag] = detail::block_from_cross_sums(
            sums, counts, static_cast<double>(R - lag));
      }
      break;
    }
    case ArrayStructure::Unrestricted: {
      out.blocks.assign(R * (R + 1) / 2, std::array<double, 6>{});
      for (int r = 0; r < R; ++r) {
        out.blocks[layer_pair_index(r, r, R)] =
            detail::block_from_cross_sums(self[r], counts, 1.0);
        for (int s = r + 1; s < R; ++s)
          out.blocks[layer_pair_index(r, s, R)] = detail::block_from_cross_sums(
              scalar_pair_sums(E[r], E[s]), counts, 1.0);
      }
      break;
    }
  }
  out.realized_slot_count = 5 * static_cast<int>(out.blocks.size());
  return out;
}

// Residual matrices per layer from a stacked residual vector.
inline std::vector<Eigen::MatrixXd> residual_layers(const Eigen::VectorXd& e,
                                                    int n, int R) {
  const int d = num_dyads(n);
  if (e.size() != static_cast<Eigen::Index>(R) * d)
    throw DimensionError("residual_layers: length mismatch");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(R);
  for (int r = 0; r < R; ++r) out.push_back(to_square(e.segment(r * d, d), n));
  return out;
}

// Meat matrix sum_{r,s} X_r' Omega_{rs} X_s for the estimated block
// structure. X is the stacked (layer-major) design.
inline Eigen::MatrixXd array_exch_meat(const Eigen::MatrixXd& X,
                                       const ArrayExchParams& prm, int n) {
  const int R = prm.R;
  const int d = num_dyads(n);
  if (X.rows() != static_cast<Eigen::Index>(R) * d)
    throw DimensionError("array_exch_meat: design row mismatch");
  const int p = static_cast<int>(X.cols());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(p, p);

  switch (prm.structure) {
    case ArrayStructure::FullExch:
    case ArrayStructure::LayerIndependent: {
      PairSums within;
      for (auto& m : within.m) m = Eigen::MatrixXd::Zero(p, p);
      for (int r = 0; r < R; ++r) {
        const PairSums ps = pair_sums(X.middleRows(r * d, d), n);
        for (int t = 0; t < 6; ++t) within.m[t] += ps.m[t];
      }
      B += combine_pair_sums(within, prm.block_for(0, 0));
      if (R > 1 && prm.structure == ArrayStructure::FullExch) {
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(d, p);
        for (int r = 0; r < R; ++r) P += X.middleRows(r * d, d);
        const PairSums pooled = pair_sums(P, n);
        PairSums cross;
        for (int t = 0; t < 6; ++t) cross.m[t] = pooled.m[t] - within.m[t];
        B += combine_pair_sums(cross, prm.block_for(0, 1));
      }
      break;
    }
    case ArrayStructure::Stationary: {
      for (int r = 0; r < R; ++r) {
        const PairSums ps = pair_sums(X.middleRows(r * d, d), n);
        B += combine_pair_sums(ps, prm.block_for(r, r));
      }
      for (int lag = 1; lag < R; ++lag) {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
        for (int r = 0; r + lag < R; ++r) {
          const PairSums ps = pair_sums(X.middleRows(r * d, d),
                                        X.middleRows((r + lag) * d, d), n);
          G += combine_pair_sums(ps, prm.block_for(r, r + lag));
        }
        B += G + G.transpose();
      }
      break;
    }
    case ArrayStructure::Unrestricted: {
      for (int r = 0; r < R; ++r) {
        const PairSums ps = pair_sums(X.middleRows(r * d, d), n);
        B += combine_pair_sums(ps, prm.block_for(r, r));
        for (int s = r + 1; s < R; ++s) {
          const PairSums cs = pair_sums(X.middleRows(r * d, d),
                                        X.middleRows(s * d, d), n);
          const Eigen::MatrixXd G =
              combine_pair_sums(cs, prm.block_for(r, s));
          B += G + G.transpose();
        }
      }
      break;
    }
  }
  return B;
}

// Dyad-clustered meat for stacked layers: residual-weighted rows are summed
// over layers per dyad first, then all overlapping dyad-pair configurations
// contribute. Reduces to the single-layer dyad-clustered meat at R = 1.
inline Eigen::MatrixXd array_dc_meat(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& e, int n, int R) {
  const int d = num_dyads(n);
  if (X.rows() != static_cast<Eigen::Index>(R) * d || e.size() != X.rows())
    throw DimensionError("array_dc_meat: row mismatch");
  const int p = static_cast<int>(X.cols());
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(d, p);
  for (int r = 0; r < R; ++r)
    V += e.segment(r * d, d).asDiagonal() * X.middleRows(r * d, d);
  const PairSums ps = pair_sums(V, n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(p, p);
  for (int t = 0; t < 5; ++t) B += ps.m[t];
  return B;
}

// ---- undirected multi-layer -----------------------------------------------

struct UndirectedArrayParams {
  double theta_w = 0.0;  // within-layer variance
  double phi_w = 0.0;    // within-layer shared-actor covariance
  double theta_c = 0.0;  // cross-layer same-dyad covariance
  double phi_c = 0.0;    // cross-layer shared-actor covariance
  int R = 1;
};

namespace detail {

// (same-dyad sum over all cells, shared-actor sum) for symmetric zero-diagonal
// E, F; both count ordered pairs, matching divisors n(n-1) and n(n-1)(n-2).
inline std::pair<double, double> undirected_kernels(const Eigen::MatrixXd& E,
                                                    const Eigen::MatrixXd& F) {
  const double same = (E.array() * F.array()).sum();
  const Eigen::VectorXd sE = E.rowwise().sum(), sF = F.rowwise().sum();
  return {same, sE.dot(sF) - same};
}

}  // namespace detail

// Full-exch moment estimates from per-layer symmetric residual matrices.
inline UndirectedArrayParams estimate_undirected_array_params(
    const std::vector<Eigen::MatrixXd>& E) {
  const int R = static_cast<int>(E.size());
  if (R < 1)
    throw InvalidArgumentError("estimate_undirected_array_params: no layers");
  const int n = static_cast<int>(E[0].rows());
  if (n < 3)
    throw InvalidArgumentError("estimate_undirected_array_params: need n >= 3");
  const double d1 = static_cast<double>(n) * (n - 1);
  const double d2 = d1 * (n - 2);
  UndirectedArrayParams out;
  out.R = R;
  double same_w = 0.0, share_w = 0.0;
  for (const auto& Er : E) {
    const auto [same, share] = detail::undirected_kernels(Er, Er);
    same_w += same;
    share_w += share;
  }
  out.theta_w = same_w / (R * d1);
  out.phi_w = share_w / (R * d2);
  if (R > 1) {
    Eigen::MatrixXd P = E[0];
    for (int r = 1; r < R; ++r) P += E[r];
    const auto [same_p, share_p] = detail::undirected_kernels(P, P);
    const double w = static_cast<double>(R) * (R - 1);
    out.theta_c = (same_p - same_w) / (w * d1);
    out.phi_c = (share_p - share_w) / (w * d2);
  }
  return out;
}

namespace detail {

// theta A'B + phi (sum_i A_i B_i' - 2 A'B) for unordered-dyad designs A, B.
inline Eigen::MatrixXd undirected_bilinear(const Eigen::MatrixXd& A,
                                           const Eigen::MatrixXd& B,
                                           double theta, double phi, int n) {
  const Eigen::MatrixXd SA = undirected_actor_sums(A, n);
  const Eigen::MatrixXd SB = undirected_actor_sums(B, n);
  const Eigen::MatrixXd AtB = A.transpose() * B;
  return theta * AtB + phi * (SA * SB.transpose() - 2.0 * AtB);
}

}  // namespace detail

inline Eigen::MatrixXd undirected_array_exch_meat(
    const Eigen::MatrixXd& X, const UndirectedArrayParams& prm, int n) {
  const int R = prm.R;
  const int d = num_dyads(n, /*directed=*/false);
  if (X.rows() != static_cast<Eigen::Index>(R) * d)
    throw DimensionError("undirected_array_exch_meat: design row mismatch");
  const int p = static_cast<int>(X.cols());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(p, p);
  for (int r = 0; r < R; ++r) {
    const Eigen::MatrixXd Xr = X.middleRows(r * d, d);
    B += detail::undirected_bilinear(Xr, Xr, prm.theta_w, prm.phi_w, n);
  }
  if (R > 1 && (prm.theta_c != 0.0 || prm.phi_c != 0.0)) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(d, p);
    for (int r = 0; r < R; ++r) P += X.middleRows(r * d, d);
    B += detail::undirected_bilinear(P, P, prm.theta_c, prm.phi_c, n);
    for (int r = 0; r < R; ++r) {
      const Eigen::MatrixXd Xr = X.middleRows(r * d, d);
      B -= detail::undirected_bilinear(Xr, Xr, prm.theta_c, prm.phi_c, n);
    }
  }
  return B;
}

inline Eigen::MatrixXd undirected_array_dc_meat(const Eigen::MatrixXd& X,
                                                const Eigen::VectorXd& e,
                                                int n, int R) {
  const int d = num_dyads(n, /*directed=*/false);
  if (X.rows() != static_cast<Eigen::Index>(R) * d || e.size() != X.rows())
    throw DimensionError("undirected_array_dc_meat: row mismatch");
  const int p = static_cast<int>(X.cols());
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(d, p);
  for (int r = 0; r < R; ++r)
    V += e.segment(r * d, d).asDiagonal() * X.middleRows(r * d, d);
  const Eigen::MatrixXd SV = undirected_actor_sums(V, n);
  return SV * SV.transpose() - V.transpose() * V;
}

// Per-layer symmetric residual matrices for an undirected stacked dataset.
inline std::vector<Eigen::MatrixXd> residual_layers_undirected(
    const Eigen::VectorXd& e, int n, int R) {
  const int d = num_dyads(n, /*directed=*/false);
  if (e.size() != static_cast<Eigen::Index>(R) * d)
    throw DimensionError("residual_layers_undirected: length mismatch");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(R);
  for (int r = 0; r < R; ++r)
    out.push_back(to_square_symmetric(e.segment(r * d, d), n));
  return out;
}

// ---- array fit --------------------------------------------------------------

struct ArrayFitResult {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd vcov;
  SeKind se_kind = SeKind::EXCH;
  ArrayStructure structure = ArrayStructure::FullExch;
  Eigen::VectorXd residuals;
  std::optional<ArrayExchParams> params;
  std::optional<UndirectedArrayParams> undirected_params;
};

// OLS fit with the requested dependence-aware variance for a stacked
// multi-layer dataset. Undirected data supports the full-exch and independent
// structures only.
inline ArrayFitResult fit_array_dataset(const RelationalDataset& ds,
                                        SeKind kind,
                                        ArrayStructure structure) {
  ds.validate();
  const auto fit = ols_fit(ds.X, ds.y);
  ArrayFitResult out;
  out.beta_hat = fit.beta;
  out.residuals = fit.residuals;
  out.se_kind = kind;
  out.structure = structure;

  if (!ds.directed) {
    if (structure != ArrayStructure::FullExch &&
        structure != ArrayStructure::LayerIndependent)
      throw InvalidArgumentError(
          "undirected multi-layer data supports the full-exch and independent "
          "structures only");
    auto prm = estimate_undirected_array_params(
        residual_layers_undirected(fit.residuals, ds.n, ds.R));
    if (structure == ArrayStructure::LayerIndependent)
      prm.theta_c = prm.phi_c = 0.0;
    out.undirected_params = prm;
    Eigen::MatrixXd meat;
    switch (kind) {
      case SeKind::HC: meat = hc_meat(ds.X, fit.residuals); break;
      case SeKind::DC:
        meat = undirected_array_dc_meat(ds.X, fit.residuals, ds.n, ds.R);
        break;
      case SeKind::EXCH:
        meat = undirected_array_exch_meat(ds.X, prm, ds.n);
        break;
    }
    out.vcov = sandwich_vcov(ds.X, meat);
    return out;
  }

  const ArrayExchParams prm =
      estimate_array_params(residual_layers(fit.residuals, ds.n, ds.R), structure);
  out.params = prm;
  Eigen::MatrixXd meat;
  switch (kind) {
    case SeKind::HC: meat = hc_meat(ds.X, fit.residuals); break;
    case SeKind::DC:
      meat = array_dc_meat(ds.X, fit.residuals, ds.n, ds.R);
      break;
    case SeKind::EXCH: meat = array_exch_meat(ds.X, prm, ds.n); break;
  }
  out.vcov = sandwich_vcov(ds.X, meat);
  return out;
}

}  // namespace dyadnet
