#pragma once

// Monte Carlo aggregation of stochastic passes, entropy and unanimous voting,
// and the rank-based thresholding that turns them into pseudo-labels.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bpl/common.hpp"

namespace bpl {

template <typename Scalar>
struct PosteriorEstimate {
  Mat<Scalar> mean_probs;             // N x C, MC estimate of p(y = c | x, D)
  Vec<double> entropy;                // N, nats
  std::vector<std::int32_t> votes;    // N, class index or kNoConsensus
  int num_passes = 0;
  int vote_threshold = 0;             // passes that must agree; K for unanimity

  Index num_points() const { return mean_probs.rows(); }
  Index num_classes() const { return mean_probs.cols(); }
};

/// Lowest-index argmax of a row.
template <typename Derived>
std::int32_t argmax_row(const Eigen::MatrixBase<Derived>& row) {
  Index best = 0;
  for (Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(best)) best = c;
  }
  return static_cast<std::int32_t>(best);
}

namespace detail {
void check_simplex_row(double row_sum, double min_entry, Index row, std::size_t pass,
                       const char* module);
[[noreturn]] void throw_semantic(ErrorCode code, const std::string& message);
}  // namespace detail

/// Aggregates K stochastic passes (each N x C, rows on the simplex).
///
/// The mean of each entry is taken over its K values sorted ascending, so the
/// estimate is bitwise invariant to pass order. A point's vote is class c when
/// at least `vote_threshold` passes have argmax c (0 means all K passes).
template <typename Scalar>
PosteriorEstimate<Scalar> mc_aggregate(std::span<const Mat<Scalar>> passes, int vote_threshold = 0,
                                       double simplex_tol = 1e-5) {
  if (passes.empty()) detail::throw_semantic(ErrorCode::InvalidArgument, "K = 0 passes");
  const int K = static_cast<int>(passes.size());
  const Index N = passes[0].rows();
  const Index C = passes[0].cols();
  if (C == 0) detail::throw_semantic(ErrorCode::ShapeMismatch, "passes have zero classes");
  for (std::size_t k = 1; k < passes.size(); ++k) {
    if (passes[k].rows() != N || passes[k].cols() != C) {
      detail::throw_semantic(ErrorCode::ShapeMismatch,
                             "pass " + std::to_string(k) + " is " + std::to_string(passes[k].rows()) +
                                 "x" + std::to_string(passes[k].cols()) + ", expected " +
                                 std::to_string(N) + "x" + std::to_string(C));
    }
  }
  const int threshold = vote_threshold == 0 ? K : vote_threshold;
  if (threshold > K || 2 * threshold <= K) {
    detail::throw_semantic(ErrorCode::InvalidArgument,
                           "vote threshold " + std::to_string(threshold) + " must lie in (K/2, K] for K = " +
                               std::to_string(K));
  }

  PosteriorEstimate<Scalar> est;
  est.num_passes = K;
  est.vote_threshold = threshold;
  est.mean_probs.resize(N, C);
  est.entropy.resize(N);
  est.votes.assign(static_cast<std::size_t>(N), kNoConsensus);

  std::vector<double> column(static_cast<std::size_t>(K));
  std::vector<int> counts(static_cast<std::size_t>(C));
  for (Index i = 0; i < N; ++i) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t k = 0; k < passes.size(); ++k) {
      const auto row = passes[k].row(i);
      if (simplex_tol > 0) {
        detail::check_simplex_row(static_cast<double>(row.sum()), static_cast<double>(row.minCoeff()), i,
                                  k, "semantic_pl");
      }
      ++counts[static_cast<std::size_t>(argmax_row(row))];
    }
    for (Index c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < passes.size(); ++k) column[k] = static_cast<double>(passes[k](i, c));
      est.mean_probs(i, c) = static_cast<Scalar>(canonical_sum(column) / K);
    }
    est.entropy(i) = shannon_entropy(est.mean_probs.row(i));
    for (Index c = 0; c < C; ++c) {
      if (counts[static_cast<std::size_t>(c)] >= threshold) {
        est.votes[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(c);
        break;
      }
    }
  }
  return est;
}

template <typename Scalar>
PosteriorEstimate<Scalar> mc_aggregate(const std::vector<Mat<Scalar>>& passes, int vote_threshold = 0,
                                       double simplex_tol = 1e-5) {
  return mc_aggregate<Scalar>(std::span<const Mat<Scalar>>(passes), vote_threshold, simplex_tol);
}

enum class ThresholdMode { Global, PerClass };

std::string to_string(ThresholdMode mode);
ThresholdMode threshold_mode_from_string(const std::string& s);

/// Cut values produced by rank selection. For Global mode `global` is set; for
/// PerClass `per_class[c]` is set (NaN for classes without eligible points).
/// Points with score < cut are admitted; ties at the cut go to lower indices.
struct Threshold {
  ThresholdMode mode = ThresholdMode::Global;
  double global = 0.0;
  std::vector<double> per_class;
};

struct RankSelection {
  std::vector<bool> admitted;
  Threshold threshold;
  std::size_t admitted_count = 0;
  std::size_t eligible_count = 0;
};

/// Number of points admitted out of `eligible` for fraction p_tau:
/// ceil(p_tau * eligible), guarding against binary round-off in the product.
std::size_t admitted_quota(double p_tau, std::size_t eligible);

/// Nearest-rank selection shared by every selector: among points with
/// group[i] >= 0, order by (score ascending, index ascending) and admit the
/// first ceil(p_tau * n), globally or within each group. The reported cut is
/// the smallest double above the last admitted score.
RankSelection select_lowest(std::span<const double> score, std::span<const std::int32_t> group,
                            double p_tau, ThresholdMode mode, Index num_groups);

/// Entropy threshold tau for the consensus points (votes >= 0).
Threshold quantile_tau(std::span<const double> entropy, std::span<const std::int32_t> votes,
                       double p_tau, ThresholdMode mode, Index num_classes);

enum class Selector { Entropy, Naive, ClassBalanced };

std::string to_string(Selector s);
Selector selector_from_string(const std::string& s);

struct SemanticPseudoLabels {
  std::vector<std::int32_t> labels;  // class index or kIgnore
  Threshold threshold;               // entropy (nats) or negated confidence for naive selectors
  double p_tau = 0.75;
  Selector selector = Selector::Entropy;
  std::size_t labeled_count = 0;
  std::size_t consensus_count = 0;
};

namespace detail {
SemanticPseudoLabels solve_with_scores(std::span<const double> score, std::span<const std::int32_t> votes,
                                       Index num_classes, double p_tau, ThresholdMode mode,
                                       Selector selector);
}  // namespace detail

/// Entropy-threshold solver: a consensus point keeps its vote when its entropy
/// ranks within the p_tau fraction of lowest-entropy consensus points.
template <typename Scalar>
SemanticPseudoLabels solve_pseudo_labels(const PosteriorEstimate<Scalar>& est, double p_tau,
                                         ThresholdMode mode = ThresholdMode::Global) {
  std::vector<double> score(est.entropy.data(), est.entropy.data() + est.entropy.size());
  return detail::solve_with_scores(score, est.votes, est.num_classes(), p_tau, mode, Selector::Entropy);
}

/// Max-softmax baseline: ranks consensus points by confidence of the mean
/// distribution, descending.
template <typename Scalar>
SemanticPseudoLabels naive_threshold_baseline(const PosteriorEstimate<Scalar>& est, double p_tau,
                                              ThresholdMode mode = ThresholdMode::Global) {
  std::vector<double> score(static_cast<std::size_t>(est.num_points()));
  for (Index i = 0; i < est.num_points(); ++i) {
    score[static_cast<std::size_t>(i)] = -static_cast<double>(est.mean_probs.row(i).maxCoeff());
  }
  auto out = detail::solve_with_scores(score, est.votes, est.num_classes(), p_tau, mode, Selector::Naive);
  return out;
}

/// Per-class confidence quotas.
template <typename Scalar>
SemanticPseudoLabels class_balanced_baseline(const PosteriorEstimate<Scalar>& est, double p_tau) {
  auto out = naive_threshold_baseline(est, p_tau, ThresholdMode::PerClass);
  out.selector = Selector::ClassBalanced;
  return out;
}

template <typename Scalar>
SemanticPseudoLabels select_pseudo_labels(const PosteriorEstimate<Scalar>& est, double p_tau,
                                          ThresholdMode mode, Selector selector) {
  switch (selector) {
    case Selector::Naive: return naive_threshold_baseline(est, p_tau, mode);
    case Selector::ClassBalanced: return class_balanced_baseline(est, p_tau);
    case Selector::Entropy: break;
  }
  return solve_pseudo_labels(est, p_tau, mode);
}

}  // namespace bpl
