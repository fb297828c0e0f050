// Pair-configuration classification, canonical orderings, and the data model.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <vector>

#include "dyadnet/relational.hpp"
#include "dyadnet/rng.hpp"
#include "oracle.hpp"

using namespace dyadnet;

TEST_CASE("classify_pair on hand-labelled examples") {
  CHECK(classify_pair(0, 1, 0, 1) == PairConfig::Same);
  CHECK(classify_pair(0, 1, 1, 0) == PairConfig::Reciprocal);
  CHECK(classify_pair(0, 1, 0, 2) == PairConfig::CommonSender);
  CHECK(classify_pair(0, 1, 2, 1) == PairConfig::CommonReceiver);
  CHECK(classify_pair(0, 1, 1, 2) == PairConfig::SenderReceiver);
  CHECK(classify_pair(0, 1, 2, 0) == PairConfig::SenderReceiver);
  CHECK(classify_pair(0, 1, 2, 3) == PairConfig::Disjoint);
}

TEST_CASE("classify_pair matches the set-intersection oracle exhaustively") {
  for (int n = 2; n <= 7; ++n) {
    const auto ds = oracle::dyads(n);
    for (const auto& [i, j] : ds)
      for (const auto& [k, l] : ds)
        REQUIRE(slot_of(classify_pair(i, j, k, l)) == oracle::slot(i, j, k, l));
  }
}

TEST_CASE("classification is symmetric in the two dyads") {
  const auto ds = oracle::dyads(6);
  for (const auto& [i, j] : ds)
    for (const auto& [k, l] : ds)
      REQUIRE(classify_pair(i, j, k, l) == classify_pair(k, l, i, j));
}

TEST_CASE("classification is invariant under relabelling the actors") {
  Rng rng(7, 1);
  for (int n = 3; n <= 6; ++n) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int rep = 0; rep < 5; ++rep) {
      // Fisher-Yates with the test RNG.
      for (int i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
      const auto ds = oracle::dyads(n);
      for (const auto& [i, j] : ds)
        for (const auto& [k, l] : ds)
          REQUIRE(classify_pair(i, j, k, l) ==
                  classify_pair(perm[i], perm[j], perm[k], perm[l]));
    }
  }
}

TEST_CASE("config_counts closed forms") {
  // n=2: only same and reciprocal pairs exist.
  auto c2 = config_counts(2);
  CHECK(c2 == std::array<std::int64_t, 6>{2, 2, 0, 0, 0, 0});
  // n=3: no disjoint pairs yet.
  auto c3 = config_counts(3);
  CHECK(c3 == std::array<std::int64_t, 6>{6, 6, 6, 6, 12, 0});

  // Counts sum to the number of ordered pairs of ordered dyads.
  for (int n = 2; n <= 10; ++n) {
    const auto c = config_counts(n);
    const std::int64_t m = static_cast<std::int64_t>(n) * (n - 1);
    CHECK(std::accumulate(c.begin(), c.end(), std::int64_t{0}) == m * m);
  }

  // Counts match exhaustive enumeration.
  for (int n = 2; n <= 7; ++n) {
    std::array<std::int64_t, 6> tally{};
    const auto ds = oracle::dyads(n);
    for (const auto& [i, j] : ds)
      for (const auto& [k, l] : ds) ++tally[oracle::slot(i, j, k, l)];
    CHECK(tally == config_counts(n));
  }

  CHECK_THROWS_AS(config_counts(1), InvalidArgumentError);
}

TEST_CASE("slot constants and names") {
  CHECK(slot_of(PairConfig::Same) == kSlotSame);
  CHECK(slot_of(PairConfig::Reciprocal) == kSlotRecip);
  CHECK(slot_of(PairConfig::CommonSender) == kSlotCommonSender);
  CHECK(slot_of(PairConfig::CommonReceiver) == kSlotCommonReceiver);
  CHECK(slot_of(PairConfig::SenderReceiver) == kSlotSenderReceiver);
  CHECK(slot_of(PairConfig::Disjoint) == kSlotDisjoint);
  CHECK(std::string(config_name(PairConfig::CommonSender)) == "common_sender");
  CHECK(std::string(config_name(PairConfig::Disjoint)) == "disjoint");
}

TEST_CASE("directed dyad order is lexicographic") {
  // n=3: (0,1),(0,2),(1,0),(1,2),(2,0),(2,1)
  const std::vector<std::pair<int, int>> expect{{0, 1}, {0, 2}, {1, 0},
                                                {1, 2}, {2, 0}, {2, 1}};
  for (int pos = 0; pos < 6; ++pos) {
    CHECK(dyad_at(pos, 3) == expect[pos]);
    CHECK(dyad_pos(expect[pos].first, expect[pos].second, 3) == pos);
  }
  for (int n = 2; n <= 8; ++n) {
    const auto ds = oracle::dyads(n);
    for (int pos = 0; pos < static_cast<int>(ds.size()); ++pos) {
      CHECK(dyad_at(pos, n) == ds[pos]);
      CHECK(dyad_pos(ds[pos].first, ds[pos].second, n) == pos);
    }
  }
}

TEST_CASE("undirected pair order is lexicographic upper triangle") {
  for (int n = 2; n <= 8; ++n) {
    const auto ps = oracle::pairs(n);
    REQUIRE(num_dyads(n, false) == static_cast<int>(ps.size()));
    for (int pos = 0; pos < static_cast<int>(ps.size()); ++pos) {
      CHECK(pair_at(pos, n) == ps[pos]);
      CHECK(pair_pos(ps[pos].first, ps[pos].second, n) == pos);
      CHECK(pair_pos(ps[pos].second, ps[pos].first, n) == pos);
    }
  }
}

TEST_CASE("square <-> flat round trips") {
  Rng rng(7, 2);
  const int n = 5;
  Eigen::VectorXd v = oracle::random_vector(rng, num_dyads(n));
  Eigen::MatrixXd M = to_square(v, n);
  for (int i = 0; i < n; ++i) CHECK(M(i, i) == 0.0);
  CHECK(from_square(M).isApprox(v));

  Eigen::VectorXd u = oracle::random_vector(rng, num_dyads(n, false));
  Eigen::MatrixXd S = to_square_symmetric(u, n);
  CHECK(S.isApprox(S.transpose()));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) CHECK(S(i, j) == u[pair_pos(i, j, n)]);

  CHECK_THROWS_AS(to_square(Eigen::VectorXd::Zero(5), 3), DimensionError);
  CHECK_THROWS_AS(to_square_symmetric(Eigen::VectorXd::Zero(5), 3),
                  DimensionError);
}

TEST_CASE("dataset positions, layer-major stacking, and validation") {
  RelationalDataset ds;
  ds.n = 4;
  ds.R = 2;
  ds.directed = true;
  const int m = ds.dyads_per_layer();
  REQUIRE(m == 12);
  REQUIRE(ds.num_obs() == 24);
  ds.y = Eigen::VectorXd::Zero(24);
  ds.X = Eigen::MatrixXd::Ones(24, 2);
  ds.validate();

  for (int r = 0; r < 2; ++r)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        if (i == j) continue;
        const int pos = ds.position(i, j, r);
        const DyadIndex d = ds.dyad_of(pos);
        CHECK(d.i == i);
        CHECK(d.j == j);
        CHECK(d.r == r);
        CHECK(pos / m == r);
      }

  auto [y, X] = vectorize(ds);
  CHECK(y.size() == 24);
  CHECK(X.rows() == 24);

  RelationalDataset bad = ds;
  bad.y = Eigen::VectorXd::Zero(23);
  CHECK_THROWS_AS(bad.validate(), IncompleteDataError);
  RelationalDataset tiny;
  tiny.n = 1;
  CHECK_THROWS_AS(tiny.validate(), InvalidArgumentError);

  RelationalDataset und;
  und.n = 5;
  und.directed = false;
  und.y = Eigen::VectorXd::Zero(10);
  und.X = Eigen::MatrixXd::Ones(10, 1);
  und.validate();
  CHECK(und.position(1, 3) == pair_pos(1, 3, 5));
  CHECK(und.position(3, 1) == pair_pos(1, 3, 5));
}
