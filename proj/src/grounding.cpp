#include "bpl/grounding.hpp"

#include <string>

namespace bpl {

namespace {
constexpr const char* kModule = "grounding_pl";
}

ReorderedScores reorder_scores(const Eigen::Ref<const Eigen::MatrixXd>& pass_scores,
                               std::span<const std::int32_t> alignment, Index seed_candidates) {
  if (static_cast<Index>(alignment.size()) != pass_scores.cols()) {
    throw Error(ErrorCode::ShapeMismatch, kModule,
                "alignment has " + std::to_string(alignment.size()) + " entries for " +
                    std::to_string(pass_scores.cols()) + " pass candidates");
  }
  std::vector<char> taken(static_cast<std::size_t>(seed_candidates), 0);
  for (std::size_t i = 0; i < alignment.size(); ++i) {
    const auto target = alignment[i];
    if (target < 0) continue;
    if (target >= seed_candidates) {
      throw Error(ErrorCode::InvalidArgument, kModule,
                  "pass candidate " + std::to_string(i) + " aligned to " + std::to_string(target) +
                      " but only " + std::to_string(seed_candidates) + " seed candidates");
    }
    if (taken[target]) {
      throw Error(ErrorCode::NonInjective, kModule,
                  "seed candidate " + std::to_string(target) + " receives two pass candidates");
    }
    taken[target] = 1;
  }

  ReorderedScores out;
  out.scores = Eigen::MatrixXd::Zero(pass_scores.rows(), seed_candidates);
  out.no_alignment.assign(static_cast<std::size_t>(pass_scores.rows()), false);
  for (std::size_t i = 0; i < alignment.size(); ++i) {
    if (alignment[i] >= 0) out.scores.col(alignment[i]) = pass_scores.col(static_cast<Index>(i));
  }
  for (Index u = 0; u < out.scores.rows(); ++u) {
    const double mass = out.scores.row(u).sum();
    if (mass > 0.0) {
      out.scores.row(u) /= mass;
    } else {
      out.no_alignment[u] = true;
    }
  }
  return out;
}

GroundingPseudoLabels solve_grounding(const Eigen::Ref<const Eigen::MatrixXd>& seed_scores,
                                      std::span<const ReorderedScores> passes, double p_tau,
                                      ThresholdMode mode, int vote_threshold) {
  if (passes.empty()) throw Error(ErrorCode::InvalidArgument, kModule, "K = 0 passes");
  const Index U = seed_scores.rows();
  const Index M = seed_scores.cols();

  // Unaligned rows get a uniform placeholder so aggregation sees valid
  // distributions; those utterances are then barred from voting.
  std::vector<MatrixXd> mats;
  std::vector<bool> barred(static_cast<std::size_t>(U), false);
  for (std::size_t k = 0; k < passes.size(); ++k) {
    const auto& p = passes[k];
    if (p.scores.rows() != U || p.scores.cols() != M) {
      throw Error(ErrorCode::ShapeMismatch, kModule,
                  "pass " + std::to_string(k) + " is " + std::to_string(p.scores.rows()) + "x" +
                      std::to_string(p.scores.cols()) + ", seed is " + std::to_string(U) + "x" +
                      std::to_string(M));
    }
    MatrixXd m = p.scores;
    for (Index u = 0; u < U; ++u) {
      if (p.no_alignment.size() == static_cast<std::size_t>(U) && p.no_alignment[u]) {
        m.row(u).setConstant(1.0 / static_cast<double>(M));
        barred[u] = true;
      }
    }
    mats.push_back(std::move(m));
  }

  auto est = mc_aggregate<double>(std::span<const MatrixXd>(mats), vote_threshold);
  for (Index u = 0; u < U; ++u) {
    if (barred[u]) est.votes[u] = kNoConsensus;
  }

  GroundingPseudoLabels out;
  out.entropy = est.entropy;
  out.votes = est.votes;
  const auto labels = solve_pseudo_labels(est, p_tau, mode);
  out.selected = labels.labels;
  out.threshold = labels.threshold;
  out.labeled_count = labels.labeled_count;
  out.consensus_count = labels.consensus_count;
  return out;
}

}  // namespace bpl
