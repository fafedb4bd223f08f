#include <numeric>

#include "doctest.h"

#include "bpl/grounding.hpp"
#include "support.hpp"

using namespace bpl;

namespace {

std::vector<ReorderedScores> identity_passes(const std::vector<MatrixXd>& passes) {
  std::vector<ReorderedScores> out;
  for (const auto& p : passes) {
    std::vector<std::int32_t> id(static_cast<std::size_t>(p.cols()));
    std::iota(id.begin(), id.end(), 0);
    out.push_back(reorder_scores(p, id, p.cols()));
  }
  return out;
}

}  // namespace

TEST_CASE("identity alignment leaves scores unchanged") {
  std::mt19937_64 rng(1);
  const MatrixXd p = test::random_simplex(6, 4, 1.0, rng);
  const auto r = identity_passes({p});
  CHECK((r[0].scores - p).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(std::none_of(r[0].no_alignment.begin(), r[0].no_alignment.end(), [](bool b) { return b; }));
}

TEST_CASE("swapping alignment swaps columns") {
  std::mt19937_64 rng(2);
  const MatrixXd p = test::random_simplex(5, 3, 1.0, rng);
  const auto r = reorder_scores(p, std::vector<std::int32_t>{1, 0, 2}, 3);
  CHECK(r.scores.col(0).isApprox(p.col(1)));
  CHECK(r.scores.col(1).isApprox(p.col(0)));
  CHECK(r.scores.col(2).isApprox(p.col(2)));
}

TEST_CASE("two candidates into three seed slots") {
  MatrixXd p(1, 2);
  p << 0.7, 0.3;
  const auto r = reorder_scores(p, std::vector<std::int32_t>{2, 0}, 3);
  CHECK(r.scores(0, 0) == doctest::Approx(0.3));
  CHECK(r.scores(0, 1) == 0.0);
  CHECK(r.scores(0, 2) == doctest::Approx(0.7));
}

TEST_CASE("unaligned mass is renormalized and empty rows flagged") {
  MatrixXd p(2, 3);
  p << 0.5, 0.25, 0.25, 0.0, 0.0, 1.0;
  const auto r = reorder_scores(p, std::vector<std::int32_t>{0, 1, -1}, 2);
  CHECK(r.scores(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(r.scores(0, 1) == doctest::Approx(1.0 / 3.0));
  CHECK_FALSE(r.no_alignment[0]);
  CHECK(r.no_alignment[1]);
}

TEST_CASE("alignment validation") {
  const MatrixXd p = MatrixXd::Constant(1, 2, 0.5);
  try {
    reorder_scores(p, std::vector<std::int32_t>{1, 1}, 3);
    FAIL("non-injective alignment accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonInjective);
  }
  CHECK_THROWS_AS(reorder_scores(p, std::vector<std::int32_t>{0, 3}, 3), Error);
  CHECK_THROWS_AS(reorder_scores(p, std::vector<std::int32_t>{0}, 3), Error);
}

TEST_CASE("unanimous candidate wins, an 8-1 split is ignored") {
  const Index U = 2, M = 5;
  std::vector<MatrixXd> passes;
  for (int k = 0; k < 9; ++k) {
    MatrixXd p = MatrixXd::Constant(U, M, 0.05);
    p(0, 3) = 0.8;
    p(1, k == 8 ? 1 : 2) = 0.8;
    passes.push_back(p);
  }
  const auto out = solve_grounding(MatrixXd::Constant(U, M, 0.2), identity_passes(passes), 1.0);
  CHECK(out.selected[0] == 3);
  CHECK(out.selected[1] == kIgnore);
  CHECK(out.votes[1] == kNoConsensus);
}

TEST_CASE("single candidate always selected with zero entropy") {
  const std::vector<MatrixXd> passes(3, MatrixXd::Ones(4, 1));
  const auto out = solve_grounding(MatrixXd::Ones(4, 1), identity_passes(passes), 1.0);
  CHECK(out.selected == std::vector<std::int32_t>(4, 0));
  CHECK(out.entropy.maxCoeff() == 0.0);
}

TEST_CASE("unaligned utterances are never labeled") {
  MatrixXd p(2, 2);
  p << 0.9, 0.1, 0.0, 1.0;
  std::vector<ReorderedScores> passes;
  for (int k = 0; k < 3; ++k) passes.push_back(reorder_scores(p, std::vector<std::int32_t>{0, -1}, 2));
  const auto out = solve_grounding(MatrixXd::Constant(2, 2, 0.5), passes, 1.0);
  CHECK(out.selected[0] == 0);
  CHECK(out.selected[1] == kIgnore);
}

TEST_CASE("the seed row takes no part in the vote") {
  MatrixXd seed(1, 2);
  seed << 0.0, 1.0;
  const std::vector<MatrixXd> passes(3, (MatrixXd(1, 2) << 0.9, 0.1).finished());
  const auto out = solve_grounding(seed, identity_passes(passes), 1.0);
  CHECK(out.selected[0] == 0);
}

TEST_CASE("shape mismatch with the seed") {
  const std::vector<MatrixXd> passes(2, MatrixXd::Constant(3, 2, 0.5));
  CHECK_THROWS_AS(solve_grounding(MatrixXd::Constant(3, 3, 1.0 / 3), identity_passes(passes), 1.0), Error);
}

TEST_CASE("property: candidate permutation equivariance and soundness") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const Index U = 5 + static_cast<Index>(rng() % 30), M = 1 + static_cast<Index>(rng() % 6);
    const int K = 1 + static_cast<int>(rng() % 9);
    const auto raw = test::peaked_passes(U, M, K, 0.3, rng);
    const MatrixXd seed = test::random_simplex(U, M, 1.0, rng);
    const auto base = identity_passes(raw);
    const auto out = solve_grounding(seed, base, 0.75);

    std::vector<std::int32_t> perm(static_cast<std::size_t>(M));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd seed_p(U, M);
    for (Index j = 0; j < M; ++j) seed_p.col(perm[j]) = seed.col(j);
    std::vector<ReorderedScores> permuted;
    for (const auto& p : raw) permuted.push_back(reorder_scores(p, perm, M));
    const auto out_p = solve_grounding(seed_p, permuted, 0.75);

    for (Index u = 0; u < U; ++u) {
      const auto a = out.selected[static_cast<std::size_t>(u)];
      CHECK(out_p.selected[static_cast<std::size_t>(u)] == (a == kIgnore ? kIgnore : perm[a]));
      if (a != kIgnore) {
        for (const auto& p : base) CHECK(argmax_row(p.scores.row(u)) == a);
      }
    }
    const auto fewer = solve_grounding(seed, base, 0.5);
    for (std::size_t u = 0; u < fewer.selected.size(); ++u) {
      if (fewer.selected[u] != kIgnore) CHECK(out.selected[u] == fewer.selected[u]);
    }
  }
}
