#include "doctest.h"

#include "bpl/instance.hpp"
#include "support.hpp"

using namespace bpl;

namespace {

using Soft = Eigen::MatrixXd;

/// Soft scores around the given masks: members in [0.5, 1], others in [0, 0.5).
Soft soften(const Masks& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> hi(0.5, 1.0), lo(0.0, 0.4999);
  Soft s(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index n = 0; n < m.cols(); ++n) s(i, n) = m(i, n) ? hi(rng) : lo(rng);
  }
  return s;
}

/// Disjoint instance masks over N points, each a contiguous block.
Masks blocks(Index M, Index N) {
  Masks m = Masks::Zero(M, N);
  const Index w = N / std::max<Index>(1, M + 1);
  for (Index i = 0; i < M; ++i) m.block(i, i * w, 1, w).setOnes();
  return m;
}

/// Copy of `m` with each entry flipped with probability `eps`, rows shuffled.
Masks perturb(const Masks& m, double eps, std::mt19937_64& rng, std::vector<Index>* order = nullptr) {
  std::bernoulli_distribution flip(eps);
  Masks out = m;
  for (Index i = 0; i < out.size(); ++i) {
    if (flip(rng)) out.data()[i] = 1 - out.data()[i];
  }
  std::vector<Index> perm(static_cast<std::size_t>(m.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Masks shuffled(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) shuffled.row(i) = out.row(perm[static_cast<std::size_t>(i)]);
  if (order) *order = perm;
  return shuffled;
}

struct Case {
  Soft seed;
  std::vector<Soft> passes;
};

Case random_case(std::mt19937_64& rng) {
  const Index M = static_cast<Index>(rng() % 5), N = 20 + static_cast<Index>(rng() % 40);
  const int K = 1 + static_cast<int>(rng() % 6);
  const Masks base = blocks(M, N);
  Case c;
  c.seed = soften(base, rng);
  for (int k = 0; k < K; ++k) {
    Masks p = perturb(base, 0.05, rng);
    if (rng() % 4 == 0 && p.rows() > 0) {
      p.conservativeResize(p.rows() + 1, Eigen::NoChange);
      p.row(p.rows() - 1) = test::random_masks(1, N, 0.2, rng);
    }
    c.passes.push_back(soften(p, rng));
  }
  return c;
}

}  // namespace

TEST_CASE("to_mask thresholds at >=") {
  CHECK(to_mask(Soft::Ones(2, 3)) == Masks::Ones(2, 3));
  Soft half(1, 1);
  half << 0.5;
  CHECK(to_mask(half)(0, 0) == 1);
  Soft s(2, 2);
  s << 0.9, 0.1, 0.4, 0.6;
  Masks expect(2, 2);
  expect << 1, 0, 0, 1;
  CHECK(to_mask(s) == expect);
  s(0, 0) = 1.2;
  CHECK_THROWS_AS(to_mask(s), Error);
}

TEST_CASE("exact duplicates reproduce the seed") {
  const Masks base = blocks(3, 40);
  const Soft seed = base.cast<double>();
  const std::vector<Soft> passes(5, seed);
  InstanceOptions opt;
  opt.p_tau = 1.0;
  const auto out = generate_instance_pseudo_labels(seed, passes, opt);
  CHECK(out.masks == base);
  CHECK(out.per_point_entropy.maxCoeff() == 0.0);
  CHECK(out.kept_instances == std::vector<Index>{0, 1, 2});
  CHECK(out.point_counts() == std::vector<Index>{10, 10, 10});
}

TEST_CASE("a disjoint pass mask eliminates its seed instance") {
  const Masks base = blocks(2, 30);
  const Soft seed = base.cast<double>();
  Masks bad = base;
  bad.row(1).setZero();
  bad.block(1, 25, 1, 5).setOnes();  // no overlap with seed instance 1
  const std::vector<Soft> passes{seed, bad.cast<double>(), seed};
  InstanceOptions opt;
  opt.p_tau = 1.0;
  const auto out = generate_instance_pseudo_labels(seed, passes, opt);
  CHECK(out.masks.row(0) == base.row(0));
  CHECK_FALSE(out.masks.row(1).any());
  CHECK_FALSE(out.unanimous.row(1).any());
  CHECK(out.kept_instances == std::vector<Index>{0});
  CHECK(out.matches[1].seed_of[1] == -1);
}

TEST_CASE("min_iou drops weak matches") {
  const Masks base = blocks(1, 30);  // points 0..14
  Masks weak = Masks::Zero(1, 30);
  weak.block(0, 10, 1, 15).setOnes();  // IoU 5 / 25
  const auto m = match_pass(base, weak, 0.25);
  CHECK(m.seed_of[0] == -1);
  const auto m2 = match_pass(base, weak, 0.2);
  CHECK(m2.seed_of[0] == 0);
  CHECK(m2.iou[0] == doctest::Approx(0.2));
}

TEST_CASE("empty seed gives empty output") {
  const Soft seed(0, 12);
  const std::vector<Soft> passes{Soft::Constant(2, 12, 0.7)};
  const auto out = generate_instance_pseudo_labels(seed, passes);
  CHECK(out.masks.rows() == 0);
  CHECK(out.kept_instances.empty());
}

TEST_CASE("no unanimous entries gives empty masks") {
  const Soft seed = Soft::Constant(2, 10, 0.2);
  const std::vector<Soft> passes{Soft::Constant(2, 10, 0.2)};
  const auto out = generate_instance_pseudo_labels(seed, passes);
  CHECK(out.masks.rows() == 2);
  CHECK_FALSE(out.masks.any());
}

TEST_CASE("input validation") {
  const Soft seed = Soft::Constant(1, 10, 0.6);
  CHECK_THROWS_AS(generate_instance_pseudo_labels(seed, std::vector<Soft>{}), Error);
  CHECK_THROWS_AS(generate_instance_pseudo_labels(seed, std::vector<Soft>{Soft::Constant(1, 9, 0.6)}), Error);
  InstanceOptions opt;
  opt.p_tau = 0.0;
  CHECK_THROWS_AS(generate_instance_pseudo_labels(seed, std::vector<Soft>{seed}, opt), Error);
}

TEST_CASE("per-point entropy uses p = acc / (K + 1)") {
  Soft seed(1, 2);
  seed << 1.0, 0.6;
  Soft pass(1, 2);
  pass << 1.0, 0.6;
  const std::vector<Soft> passes{pass, pass, pass};
  const auto out = generate_instance_pseudo_labels(seed, passes);
  CHECK(out.accumulated(0, 1) == doctest::Approx(2.4));
  CHECK(out.per_point_entropy(0, 0) == 0.0);
  CHECK(out.per_point_entropy(0, 1) == doctest::Approx(-(0.6 * std::log(0.6) + 0.4 * std::log(0.4))));
}

TEST_CASE("property: soundness, bounds, order invariance, monotonicity") {
  std::mt19937_64 rng(606);
  for (int trial = 0; trial < 150; ++trial) {
    auto c = random_case(rng);
    InstanceOptions opt;
    opt.p_tau = 0.75;
    const auto out = generate_instance_pseudo_labels(c.seed, c.passes, opt);
    const Masks seed_mask = to_mask(c.seed);
    if (out.per_point_entropy.size() > 0) {
      CHECK(out.per_point_entropy.minCoeff() >= 0.0);
      CHECK(out.per_point_entropy.maxCoeff() <= std::log(2.0) + 1e-15);
    }

    for (Index m = 0; m < out.masks.rows(); ++m) {
      for (Index n = 0; n < out.masks.cols(); ++n) {
        if (!out.masks(m, n)) continue;
        CHECK(seed_mask(m, n) == 1);
        CHECK(out.unanimous(m, n) == 1);
        CHECK(out.per_point_entropy(m, n) < out.tau);
        for (std::size_t k = 0; k < c.passes.size(); ++k) {
          const auto& match = out.matches[k];
          const auto row = std::find(match.seed_of.begin(), match.seed_of.end(), m) - match.seed_of.begin();
          REQUIRE(row < static_cast<long>(match.seed_of.size()));
          CHECK(c.passes[k](row, n) >= 0.5);
        }
      }
    }

    auto shuffled = c.passes;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto again = generate_instance_pseudo_labels(c.seed, shuffled, opt);
    CHECK(again.masks == out.masks);
    CHECK(again.per_point_entropy == out.per_point_entropy);
    CHECK(again.tau == out.tau);

    opt.p_tau = 0.5;
    const auto smaller = generate_instance_pseudo_labels(c.seed, c.passes, opt);
    CHECK((smaller.masks.array() <= out.masks.array()).all());

    // At p_tau = 1 the output is the unanimous set, and adding a pass only intersects it.
    opt.p_tau = 1.0;
    const auto full = generate_instance_pseudo_labels(c.seed, c.passes, opt);
    auto more = c.passes;
    more.push_back(soften(perturb(seed_mask, 0.05, rng), rng));
    const auto grown = generate_instance_pseudo_labels(c.seed, more, opt);
    CHECK((grown.masks.array() <= full.masks.array()).all());
  }
}

TEST_CASE("heuristic versus exact report") {
  std::mt19937_64 rng(8);
  const Masks seed = blocks(3, 40);
  SUBCASE("duplicates agree") {
    const std::vector<Masks> passes(3, seed);
    const auto r = heuristic_vs_exact_report(seed, passes);
    CHECK(r.agree);
    CHECK(r.ratio == 1.0);
  }
  SUBCASE("K = 1 always agrees") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::vector<Masks> passes{perturb(seed, 0.2, rng)};
      const auto r = heuristic_vs_exact_report(seed, passes);
      CHECK(r.agree);
      CHECK(r.ratio == doctest::Approx(1.0));
    }
  }
  SUBCASE("ratio never exceeds one") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::vector<Masks> passes{perturb(seed, 0.3, rng), perturb(seed, 0.3, rng)};
      const auto r = heuristic_vs_exact_report(seed, passes);
      CHECK(r.ratio <= 1.0 + 1e-12);
      CHECK(r.ratio > 0.0);
    }
  }
}
