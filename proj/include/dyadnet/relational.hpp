#pragma once

// Data model for relational (dyadic) arrays: canonical vectorization order,
// dyad indexing, and classification of ordered-dyad pairs into the six
// exchangeable configurations.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dyadnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct IncompleteDataError : Error {
  using Error::Error;
};
struct InvalidArgumentError : Error {
  using Error::Error;
};
struct InvalidResidualError : Error {
  using Error::Error;
};
struct NotInvertibleError : Error {
  using Error::Error;
};
struct RankDeficientError : Error {
  RankDeficientError(const std::string& msg, std::vector<int> cols)
      : Error(msg), columns(std::move(cols)) {}
  std::vector<int> columns;  // columns outside the pivoted independent set
};

// Configuration of an ordered pair of ordered dyads (i,j),(k,l) with respect
// to shared actors. CommonSender shares the sender (i=k), CommonReceiver the
// receiver (j=l), SenderReceiver one actor acting in opposite roles.
enum class PairConfig {
  Same,
  Reciprocal,
  CommonReceiver,
  CommonSender,
  SenderReceiver,
  Disjoint,
};

inline constexpr int kNumConfigs = 6;

// Fixed slot order for all six-value covariance patterns (the order used by
// the inverse-pattern linear system): variance first, disjoint last.
inline constexpr int kSlotSame = 0;
inline constexpr int kSlotRecip = 1;
inline constexpr int kSlotCommonSender = 2;
inline constexpr int kSlotCommonReceiver = 3;
inline constexpr int kSlotSenderReceiver = 4;
inline constexpr int kSlotDisjoint = 5;

inline constexpr int slot_of(PairConfig c) {
  switch (c) {
    case PairConfig::Same: return kSlotSame;
    case PairConfig::Reciprocal: return kSlotRecip;
    case PairConfig::CommonSender: return kSlotCommonSender;
    case PairConfig::CommonReceiver: return kSlotCommonReceiver;
    case PairConfig::SenderReceiver: return kSlotSenderReceiver;
    case PairConfig::Disjoint: return kSlotDisjoint;
  }
  return kSlotDisjoint;
}

inline const char* config_name(PairConfig c) {
  switch (c) {
    case PairConfig::Same: return "same";
    case PairConfig::Reciprocal: return "reciprocal";
    case PairConfig::CommonReceiver: return "common_receiver";
    case PairConfig::CommonSender: return "common_sender";
    case PairConfig::SenderReceiver: return "sender_receiver";
    case PairConfig::Disjoint: return "disjoint";
  }
  return "?";
}

struct DyadIndex {
  int i = 0;  // sender
  int j = 0;  // receiver
  int r = 0;  // layer
};

// Total classification of an ordered pair of ordered dyads over one actor set.
inline PairConfig classify_pair(int i, int j, int k, int l) {
  if (i == k && j == l) return PairConfig::Same;
  if (i == l && j == k) return PairConfig::Reciprocal;
  if (i == k) return PairConfig::CommonSender;
  if (j == l) return PairConfig::CommonReceiver;
  if (i == l || j == k) return PairConfig::SenderReceiver;
  return PairConfig::Disjoint;
}

inline PairConfig classify_pair(const DyadIndex& a, const DyadIndex& b) {
  return classify_pair(a.i, a.j, b.i, b.j);
}

// Number of ordered pairs of ordered dyads in each configuration, indexed by
// slot_of. Sums to (n(n-1))^2.
inline std::array<std::int64_t, 6> config_counts(int n) {
  if (n < 2) throw InvalidArgumentError("config_counts: need n >= 2");
  const std::int64_t m = static_cast<std::int64_t>(n) * (n - 1);
  std::array<std::int64_t, 6> c{};
  c[kSlotSame] = m;
  c[kSlotRecip] = m;
  c[kSlotCommonSender] = m * (n - 2);
  c[kSlotCommonReceiver] = m * (n - 2);
  c[kSlotSenderReceiver] = 2 * m * (n - 2);
  c[kSlotDisjoint] = m * (n - 2) * (n - 3);
  return c;
}

inline std::int64_t config_count(int n, PairConfig c) {
  return config_counts(n)[slot_of(c)];
}

// ---- canonical flat ordering -------------------------------------------
// Directed, one layer: lexicographic (i,j), i != j:
//   (0,1),(0,2),...,(0,n-1),(1,0),(1,2),...
// Undirected: lexicographic upper triangle (i<j).
// Multi-layer: layer-major (full layer-0 block, then layer 1, ...).

inline int num_dyads(int n, bool directed = true) {
  return directed ? n * (n - 1) : n * (n - 1) / 2;
}

inline int dyad_pos(int i, int j, int n) {
  return i * (n - 1) + j - (j > i ? 1 : 0);
}

inline std::pair<int, int> dyad_at(int pos, int n) {
  const int i = pos / (n - 1);
  int j = pos % (n - 1);
  if (j >= i) ++j;
  return {i, j};
}

inline int pair_pos(int i, int j, int n) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

inline std::pair<int, int> pair_at(int pos, int n) {
  int i = 0;
  int row = n - 1;  // pairs in row i
  while (pos >= row) {
    pos -= row;
    --row;
    ++i;
  }
  return {i, i + 1 + pos};
}

// Complete relational data set held directly in canonical flat order.
struct RelationalDataset {
  int n = 0;
  int R = 1;
  bool directed = true;
  Eigen::VectorXd y;  // length num_obs()
  Eigen::MatrixXd X;  // num_obs() x p

  int dyads_per_layer() const { return num_dyads(n, directed); }
  int num_obs() const { return R * dyads_per_layer(); }
  int p() const { return static_cast<int>(X.cols()); }

  int position(int i, int j, int r = 0) const {
    return r * dyads_per_layer() +
           (directed ? dyad_pos(i, j, n) : pair_pos(i, j, n));
  }

  DyadIndex dyad_of(int pos) const {
    const int d = dyads_per_layer();
    const int r = pos / d;
    const int off = pos % d;
    auto [i, j] = directed ? dyad_at(off, n) : pair_at(off, n);
    return {i, j, r};
  }

  void validate() const {
    if (n < 2) throw InvalidArgumentError("dataset: need n >= 2");
    if (R < 1) throw InvalidArgumentError("dataset: need R >= 1");
    if (y.size() != num_obs())
      throw IncompleteDataError("dataset: response has " +
                                std::to_string(y.size()) + " entries, expected " +
                                std::to_string(num_obs()));
    if (X.rows() != num_obs())
      throw IncompleteDataError("dataset: design has " +
                                std::to_string(X.rows()) + " rows, expected " +
                                std::to_string(num_obs()));
  }
};

// Flattened view of a complete data set (the canonical bijection is the pair
// position()/dyad_of(); this simply validates and hands out the stacked data).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> vectorize(
    const RelationalDataset& ds) {
  ds.validate();
  return {ds.y, ds.X};
}

// ---- flat vector <-> square matrix helpers (directed, one layer) ---------

inline Eigen::MatrixXd to_square(const Eigen::VectorXd& v, int n) {
  if (v.size() != num_dyads(n))
    throw DimensionError("to_square: length " + std::to_string(v.size()) +
                         " != n(n-1) = " + std::to_string(num_dyads(n)));
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) M(i, j) = v[dyad_pos(i, j, n)];
  return M;
}

inline Eigen::VectorXd from_square(const Eigen::MatrixXd& M) {
  const int n = static_cast<int>(M.rows());
  if (M.cols() != n) throw DimensionError("from_square: matrix not square");
  Eigen::VectorXd v(num_dyads(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) v[dyad_pos(i, j, n)] = M(i, j);
  return v;
}

// Undirected flat vector (i<j order) expanded to a symmetric square matrix.
inline Eigen::MatrixXd to_square_symmetric(const Eigen::VectorXd& v, int n) {
  if (v.size() != num_dyads(n, false))
    throw DimensionError("to_square_symmetric: bad length");
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) M(i, j) = M(j, i) = v[pair_pos(i, j, n)];
  return M;
}

}  // namespace dyadnet
