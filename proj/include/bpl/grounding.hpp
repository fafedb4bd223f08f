#pragma once

// Grounding-by-selection pseudo-labels: per-pass candidate scores are mapped
// onto seed candidates through the instance matching, then the semantic
// solver runs with candidates in the role of classes.

#include <cstdint>
#include <span>
#include <vector>

#include "bpl/common.hpp"
#include "bpl/semantic.hpp"

namespace bpl {

/// Scores of one pass aligned to the seed candidate set (U x M).
struct ReorderedScores {
  Eigen::MatrixXd scores;
  std::vector<bool> no_alignment;  // utterances whose aligned mass is zero
};

/// Column j of the result is the pass column aligned to seed candidate j.
/// `alignment[i]` is the seed candidate of pass candidate i, or -1. Seed
/// candidates without a source get 0 and rows are renormalized.
ReorderedScores reorder_scores(const Eigen::Ref<const Eigen::MatrixXd>& pass_scores,
                               std::span<const std::int32_t> alignment, Index seed_candidates);

struct GroundingPseudoLabels {
  std::vector<std::int32_t> selected;  // seed candidate per utterance, or kIgnore
  Eigen::VectorXd entropy;
  std::vector<std::int32_t> votes;
  Threshold threshold;
  std::size_t labeled_count = 0;
  std::size_t consensus_count = 0;
};

/// The seed's scores fix the candidate set but take no part in the vote or
/// the mean; only the K stochastic passes do.
GroundingPseudoLabels solve_grounding(const Eigen::Ref<const Eigen::MatrixXd>& seed_scores,
                                      std::span<const ReorderedScores> passes, double p_tau,
                                      ThresholdMode mode = ThresholdMode::Global, int vote_threshold = 0);

}  // namespace bpl
