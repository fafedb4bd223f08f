#include <numeric>

#include "doctest.h"

#include "bpl/semantic.hpp"
#include "support.hpp"

using namespace bpl;
using doctest::Approx;

namespace {

MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  MatrixXd m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

std::vector<double> row_of(const MatrixXd& m, Index i) {
  return std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols());
}

ErrorCode error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

/// Estimate with given entropies, every point voting class `votes[i]`.
PosteriorEstimate<double> synthetic_estimate(const std::vector<double>& entropy, const std::vector<std::int32_t>& votes,
                                             Index C) {
  PosteriorEstimate<double> est;
  est.num_passes = 1;
  est.vote_threshold = 1;
  est.mean_probs = MatrixXd::Constant(static_cast<Index>(entropy.size()), C, 1.0 / static_cast<double>(C));
  est.entropy = Eigen::Map<const Eigen::VectorXd>(entropy.data(), static_cast<Index>(entropy.size()));
  est.votes = votes;
  return est;
}

std::size_t labeled(const SemanticPseudoLabels& l) {
  return static_cast<std::size_t>(std::count_if(l.labels.begin(), l.labels.end(), [](auto v) { return v != kIgnore; }));
}

}  // namespace

TEST_CASE("two passes average to the mean row") {
  const std::vector<MatrixXd> passes{rows({{0.6, 0.4}}), rows({{0.8, 0.2}})};
  const auto est = mc_aggregate<double>(passes);
  CHECK(est.mean_probs(0, 0) == Approx(0.7).epsilon(1e-15));
  CHECK(est.mean_probs(0, 1) == Approx(0.3).epsilon(1e-15));
  CHECK(est.votes[0] == 0);
  CHECK(est.num_passes == 2);
}

TEST_CASE("identical one-hot passes give zero entropy") {
  const std::vector<MatrixXd> passes(4, rows({{0, 0, 1}, {1, 0, 0}}));
  const auto est = mc_aggregate<double>(passes);
  CHECK(est.entropy(0) == 0.0);
  CHECK(est.entropy(1) == 0.0);
  CHECK(est.votes == std::vector<std::int32_t>{2, 0});
}

TEST_CASE("split argmaxes have no consensus") {
  const std::vector<MatrixXd> passes{rows({{0.1, 0.2, 0.7}}), rows({{0.1, 0.2, 0.7}}), rows({{0.1, 0.8, 0.1}})};
  const auto est = mc_aggregate<double>(passes);
  CHECK(est.votes[0] == kNoConsensus);
  CHECK(argmax_row(est.mean_probs.row(0)) == 2);
}

TEST_CASE("uniform rows over 20 classes reach ln 20") {
  const std::vector<MatrixXd> passes(3, MatrixXd::Constant(2, 20, 1.0 / 20.0));
  const auto est = mc_aggregate<double>(passes);
  CHECK(std::abs(est.entropy(0) - std::log(20.0)) < 1e-9);
  CHECK(est.entropy(0) == Approx(2.9957).epsilon(1e-4));
  CHECK(est.votes[0] == 0);  // lowest index wins the tie in every pass
}

TEST_CASE("aggregation matches a direct computation") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Index N = 1 + static_cast<Index>(rng() % 30), C = 2 + static_cast<Index>(rng() % 6);
    const int K = 1 + static_cast<int>(rng() % 9);
    const auto passes = test::peaked_passes(N, C, K, 0.5, rng);
    const auto est = mc_aggregate<double>(passes);
    for (Index i = 0; i < N; ++i) {
      std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
      std::vector<Index> am;
      for (const auto& p : passes) {
        for (Index c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += p(i, c) / K;
        am.push_back(test::ref_argmax(row_of(p, i)));
      }
      for (Index c = 0; c < C; ++c) CHECK(est.mean_probs(i, c) == Approx(mean[static_cast<std::size_t>(c)]).epsilon(1e-12));
      CHECK(est.entropy(i) == Approx(test::ref_entropy(mean)).epsilon(1e-12));
      const bool all_same = std::all_of(am.begin(), am.end(), [&](Index a) { return a == am[0]; });
      CHECK(est.votes[static_cast<std::size_t>(i)] == (all_same ? static_cast<std::int32_t>(am[0]) : kNoConsensus));
    }
  }
}

TEST_CASE("aggregation input validation") {
  CHECK(error_of([] { mc_aggregate<double>(std::vector<MatrixXd>{}); }) == ErrorCode::InvalidArgument);
  CHECK(error_of([] {
          mc_aggregate<double>(std::vector<MatrixXd>{MatrixXd::Constant(2, 2, 0.5), MatrixXd::Constant(2, 3, 1.0 / 3)});
        }) == ErrorCode::ShapeMismatch);
  CHECK(error_of([] { mc_aggregate<double>(std::vector<MatrixXd>{rows({{0.5, 0.4}})}); }) ==
        ErrorCode::SimplexViolation);
  const std::vector<MatrixXd> nine(9, rows({{0.5, 0.5}}));
  CHECK(error_of([&] { mc_aggregate<double>(nine, 4); }) == ErrorCode::InvalidArgument);
  CHECK(error_of([&] { mc_aggregate<double>(nine, 10); }) == ErrorCode::InvalidArgument);
  CHECK_NOTHROW(mc_aggregate<double>(nine, 5));
}

TEST_CASE("relaxed vote threshold takes the majority class") {
  std::vector<MatrixXd> passes(6, rows({{0.7, 0.3}}));
  passes.push_back(rows({{0.2, 0.8}}));
  CHECK(mc_aggregate<double>(passes).votes[0] == kNoConsensus);
  CHECK(mc_aggregate<double>(passes, 6).votes[0] == 0);
  CHECK(mc_aggregate<double>(passes, 7).votes[0] == kNoConsensus);
}

TEST_CASE("quota is ceil(p_tau * n)") {
  CHECK(admitted_quota(0.75, 100) == 75);
  CHECK(admitted_quota(0.75, 101) == 76);
  CHECK(admitted_quota(0.5, 9) == 5);
  CHECK(admitted_quota(1.0, 17) == 17);
  CHECK(admitted_quota(0.1, 10) == 1);
  CHECK(admitted_quota(0.7, 10) == 7);  // 0.7 * 10 rounds above 7 in binary
  CHECK(admitted_quota(0.3, 10) == 3);
  for (std::size_t n = 0; n < 500; ++n) {
    CHECK(admitted_quota(0.5, n) == test::ref_quota(1, 2, n));
    CHECK(admitted_quota(0.75, n) == test::ref_quota(3, 4, n));
  }
}

TEST_CASE("100 distinct entropies at 0.75 admit exactly 75") {
  std::vector<double> h(100);
  std::vector<std::int32_t> v(100, 0);
  std::mt19937_64 rng(2);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = 0.001 * static_cast<double>(i) + 1e-6;
  std::shuffle(h.begin(), h.end(), rng);
  const auto tau = quantile_tau(h, v, 0.75, ThresholdMode::Global, 1);
  CHECK(std::count_if(h.begin(), h.end(), [&](double x) { return x < tau.global; }) == 75);
}

TEST_CASE("entropies 0.1k at p_tau 0.5 admit the five smallest") {
  std::vector<double> h;
  for (int k = 1; k <= 10; ++k) h.push_back(0.1 * k);
  const std::vector<std::int32_t> v(10, 1);
  const auto est = synthetic_estimate(h, v, 2);
  const auto out = solve_pseudo_labels(est, 0.5);
  for (int i = 0; i < 10; ++i) CHECK((out.labels[i] != kIgnore) == (i < 5));
  CHECK(out.threshold.global > 0.5);
  CHECK(out.threshold.global < 0.6);
}

TEST_CASE("p_tau 1 labels every consensus point") {
  std::mt19937_64 rng(13);
  const auto passes = test::peaked_passes(200, 4, 5, 0.3, rng);
  const auto est = mc_aggregate<double>(passes);
  const auto out = solve_pseudo_labels(est, 1.0);
  for (std::size_t i = 0; i < out.labels.size(); ++i) CHECK(out.labels[i] == est.votes[i]);
  CHECK(out.threshold.global > est.entropy.maxCoeff());
}

TEST_CASE("ties at the cut go to lower indices") {
  const std::vector<double> h{0.2, 0.1, 0.2, 0.2, 0.3};
  const std::vector<std::int32_t> v(5, 0);
  const auto out = solve_pseudo_labels(synthetic_estimate(h, v, 2), 0.6);
  CHECK(out.labels == std::vector<std::int32_t>{0, 0, 0, kIgnore, kIgnore});
  CHECK(out.labeled_count == 3);
}

TEST_CASE("non-consensus points are ignored even at p_tau 1") {
  const std::vector<MatrixXd> passes{rows({{0.9, 0.1}, {0.6, 0.4}}), rows({{0.9, 0.1}, {0.4, 0.6}})};
  const auto out = solve_pseudo_labels(mc_aggregate<double>(passes), 1.0);
  CHECK(out.labels == std::vector<std::int32_t>{0, kIgnore});
  CHECK(out.consensus_count == 1);
}

TEST_CASE("solver argument errors") {
  const auto est = synthetic_estimate({0.1, 0.2}, {0, kNoConsensus}, 2);
  CHECK(error_of([&] { solve_pseudo_labels(est, 0.0); }) == ErrorCode::InvalidArgument);
  CHECK(error_of([&] { solve_pseudo_labels(est, 1.5); }) == ErrorCode::InvalidArgument);
  const auto none = synthetic_estimate({0.1, 0.2}, {kNoConsensus, kNoConsensus}, 2);
  CHECK(error_of([&] { solve_pseudo_labels(none, 0.5); }) == ErrorCode::EmptyConsensus);
}

TEST_CASE("naive baseline ranks by confidence") {
  const std::vector<MatrixXd> passes{rows({{0.6, 0.4}, {0.9, 0.1}})};
  const auto est = mc_aggregate<double>(passes);
  const auto out = naive_threshold_baseline(est, 0.5);
  CHECK(out.labels == std::vector<std::int32_t>{kIgnore, 0});
  CHECK(out.selector == Selector::Naive);

  std::mt19937_64 rng(31);
  const auto est2 = mc_aggregate<double>(test::peaked_passes(300, 5, 3, 0.4, rng));
  CHECK(naive_threshold_baseline(est2, 1.0).labels == solve_pseudo_labels(est2, 1.0).labels);
  CHECK(labeled(naive_threshold_baseline(est2, 0.75)) == labeled(solve_pseudo_labels(est2, 0.75)));
}

TEST_CASE("class-balanced baseline") {
  SUBCASE("half of each class at p_tau 0.5") {
    std::vector<double> h(10, 0.0);
    std::vector<std::int32_t> v{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
    auto est = synthetic_estimate(h, v, 2);
    for (Index i = 0; i < 10; ++i) {
      const double conf = 0.55 + 0.04 * static_cast<double>(i);
      est.mean_probs(i, v[i]) = conf;
      est.mean_probs(i, 1 - v[i]) = 1 - conf;
    }
    const auto out = class_balanced_baseline(est, 0.5);
    int c0 = 0, c1 = 0;
    for (std::size_t i = 0; i < 10; ++i) {
      if (out.labels[i] == 0) ++c0;
      if (out.labels[i] == 1) ++c1;
    }
    CHECK(c0 == 2);
    CHECK(c1 == 3);
    CHECK(out.threshold.mode == ThresholdMode::PerClass);
    CHECK(out.threshold.per_class.size() == 2);
  }
  SUBCASE("single class equals naive") {
    std::mt19937_64 rng(9);
    std::vector<MatrixXd> passes;
    for (int k = 0; k < 4; ++k) {
      MatrixXd m = test::random_simplex(100, 3, 1.0, rng);
      m.col(1).array() += 3.0;
      for (Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).sum();
      passes.push_back(m);
    }
    const auto est = mc_aggregate<double>(passes);
    CHECK(class_balanced_baseline(est, 0.6).labels == naive_threshold_baseline(est, 0.6).labels);
  }
}

TEST_CASE("per-class mode applies the quota within each voted class") {
  std::mt19937_64 rng(17);
  const auto est = mc_aggregate<double>(test::peaked_passes(400, 4, 3, 0.5, rng));
  const auto out = solve_pseudo_labels(est, 0.75, ThresholdMode::PerClass);
  for (std::int32_t c = 0; c < 4; ++c) {
    std::size_t consensus = 0, kept = 0;
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
      consensus += est.votes[i] == c;
      kept += out.labels[i] == c;
    }
    CHECK(kept == test::ref_quota(3, 4, consensus));
  }
}

TEST_CASE("property: estimate and solver invariants") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    const Index N = 1 + static_cast<Index>(rng() % 60), C = 1 + static_cast<Index>(rng() % 8);
    const int K = 1 + static_cast<int>(rng() % 9);
    auto passes = test::peaked_passes(N, C, K, 0.2 + 0.1 * static_cast<double>(rng() % 10), rng);
    const auto est = mc_aggregate<double>(passes);

    for (Index i = 0; i < N; ++i) {
      CHECK(std::abs(est.mean_probs.row(i).sum() - 1.0) < 1e-9);
      CHECK(est.entropy(i) >= 0.0);
      CHECK(est.entropy(i) <= std::log(static_cast<double>(C)) + 1e-12);
      const auto v = est.votes[static_cast<std::size_t>(i)];
      if (v != kNoConsensus) CHECK(argmax_row(est.mean_probs.row(i)) == v);
    }

    // Pass order does not matter, bit for bit.
    std::shuffle(passes.begin(), passes.end(), rng);
    const auto shuffled = mc_aggregate<double>(passes);
    CHECK(shuffled.mean_probs == est.mean_probs);
    CHECK(shuffled.entropy == est.entropy);
    CHECK(shuffled.votes == est.votes);

    if (est.votes.end() == std::find_if(est.votes.begin(), est.votes.end(), [](auto v) { return v >= 0; })) continue;
    const auto l50 = solve_pseudo_labels(est, 0.5);
    const auto l75 = solve_pseudo_labels(est, 0.75);
    const auto l100 = solve_pseudo_labels(est, 1.0);
    for (std::size_t i = 0; i < l50.labels.size(); ++i) {
      if (l50.labels[i] != kIgnore) CHECK(l75.labels[i] == l50.labels[i]);
      if (l75.labels[i] != kIgnore) {
        CHECK(l100.labels[i] == l75.labels[i]);
        CHECK(est.entropy(static_cast<Index>(i)) < l75.threshold.global);
        for (const auto& p : passes) CHECK(argmax_row(p.row(static_cast<Index>(i))) == l75.labels[i]);
      }
    }
  }
}

TEST_CASE("property: class permutation is equivariant") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const Index N = 40, C = 5;
    auto passes = test::peaked_passes(N, C, 4, 0.5, rng);
    std::vector<Index> perm(C);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<MatrixXd> permuted;
    for (const auto& p : passes) {
      MatrixXd q(N, C);
      for (Index c = 0; c < C; ++c) q.col(perm[c]) = p.col(c);
      permuted.push_back(q);
    }
    const auto a = mc_aggregate<double>(passes);
    const auto b = mc_aggregate<double>(permuted);
    for (Index i = 0; i < N; ++i) {
      CHECK(b.entropy(i) == Approx(a.entropy(i)).epsilon(1e-12));
      for (Index c = 0; c < C; ++c) CHECK(b.mean_probs(i, perm[c]) == a.mean_probs(i, c));
      const auto va = a.votes[static_cast<std::size_t>(i)];
      CHECK(b.votes[static_cast<std::size_t>(i)] == (va == kNoConsensus ? kNoConsensus : perm[va]));
    }
  }
}

TEST_CASE("K = 1 reduces to thresholded argmax") {
  std::mt19937_64 rng(5);
  const MatrixXd p = test::random_simplex(80, 4, 0.7, rng);
  const auto est = mc_aggregate<double>(std::vector<MatrixXd>{p});
  for (Index i = 0; i < p.rows(); ++i) {
    CHECK(est.votes[static_cast<std::size_t>(i)] == test::ref_argmax(row_of(p, i)));
    CHECK(est.entropy(i) == Approx(test::ref_entropy(row_of(p, i))).epsilon(1e-12));
  }
  CHECK(solve_pseudo_labels(est, 0.5).labeled_count == 40);
}

TEST_CASE("float passes aggregate like double passes") {
  std::mt19937_64 rng(6);
  std::vector<MatrixXd> d = test::peaked_passes(50, 3, 5, 0.5, rng);
  std::vector<MatrixXf> f;
  for (const auto& m : d) f.push_back(m.cast<float>());
  const auto ef = mc_aggregate<float>(f);
  const auto ed = mc_aggregate<double>(d);
  CHECK(ef.votes == ed.votes);
  CHECK((ef.mean_probs.cast<double>() - ed.mean_probs).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("string conversions") {
  CHECK(threshold_mode_from_string("per-class") == ThresholdMode::PerClass);
  CHECK(threshold_mode_from_string(to_string(ThresholdMode::Global)) == ThresholdMode::Global);
  CHECK(selector_from_string("class-balanced") == Selector::ClassBalanced);
  CHECK_THROWS_AS(selector_from_string("bogus"), Error);
}
