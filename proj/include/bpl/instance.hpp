#pragma once

// Instance pseudo masks from a seed prediction and K stochastic passes:
// per-pass matching to the seed, unanimity intersection, soft-score
// accumulation and a per-point binary-entropy filter.

#include <cstdint>
#include <span>
#include <vector>

#include "bpl/assignment.hpp"
#include "bpl/common.hpp"

namespace bpl {

/// mask(m, n) = soft(m, n) >= threshold. Scores must lie in [0, 1].
template <typename Derived>
Masks to_mask(const Eigen::MatrixBase<Derived>& soft, double threshold = 0.5) {
  using Scalar = typename Derived::Scalar;
  if (soft.size() > 0 && (soft.minCoeff() < Scalar(0) || soft.maxCoeff() > Scalar(1) || soft.hasNaN())) {
    throw Error(ErrorCode::InvalidArgument, "instance_pl", "soft scores outside [0, 1]");
  }
  return (soft.array().template cast<double>() >= threshold).template cast<std::uint8_t>();
}

struct InstanceOptions {
  double p_tau = 0.75;
  double min_iou = 0.25;
  double mask_threshold = 0.5;
};

/// Result of matching one pass against the seed.
struct PassMatch {
  std::vector<std::int32_t> seed_of;  // per pass instance: seed index, or -1
  std::vector<double> iou;            // IoU with the matched seed (0 if unmatched)
};

struct InstancePseudoMasks {
  Masks masks;                          // M x N
  std::vector<Index> kept_instances;    // seed instances with non-empty masks
  Eigen::MatrixXd per_point_entropy;    // M x N, nats
  Masks unanimous;                      // M x N
  Eigen::MatrixXd accumulated;          // M x N, seed plus matched pass scores
  double tau = 0.0;
  std::size_t num_passes = 0;
  std::vector<PassMatch> matches;       // one per pass

  std::vector<Index> point_counts() const;
};

/// Runs the full pipeline. Matching of every pass against the fixed seed is
/// independent, and accumulation sums each entry over its sorted
/// contributions, so the output does not depend on pass order.
InstancePseudoMasks generate_instance_pseudo_labels(const Eigen::Ref<const Eigen::MatrixXd>& seed_soft,
                                                    std::span<const Eigen::MatrixXd> pass_soft,
                                                    const InstanceOptions& options = {});

/// Match a single pass mask set against seed masks (pass masks as rows).
PassMatch match_pass(const Masks& seed_masks, const Masks& pass_masks, double min_iou);

struct HeuristicExactReport {
  double heuristic_score = 0.0;  // AllPairs objective of the per-pass matching
  double exact_score = 0.0;      // AllPairs optimum
  double ratio = 1.0;            // heuristic / exact (1 when exact is 0)
  bool agree = false;            // identical pairings, ignoring zero-IoU pairs
  JointMatching heuristic;
  JointMatching exact;
};

HeuristicExactReport heuristic_vs_exact_report(const Masks& seed, std::span<const Masks> passes,
                                               JointObjective objective = JointObjective::AllPairs);

}  // namespace bpl
