#pragma once

// Linear sum assignment on rectangular cost matrices, mask IoU costs, and the
// exhaustive oracles used to check the per-pass matching heuristic.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "bpl/common.hpp"

namespace bpl {

struct Assignment {
  std::vector<std::pair<Index, Index>> pairs;  // (row, col), sorted by row
  double total_cost = 0.0;                     // summed in row order
};

/// Minimum-cost assignment of min(R, C) pairs. Among cost-equal optima the
/// lexicographically smallest row-sorted pair list is returned.
Assignment lsa(const Eigen::Ref<const Eigen::MatrixXd>& cost);

/// Exhaustive search over all injections; min(R, C) <= 9. Same tie rule as lsa.
Assignment lsa_bruteforce(const Eigen::Ref<const Eigen::MatrixXd>& cost);

inline constexpr Index kBruteforceLimit = 9;

/// Pairwise IoU between the rows of two mask sets (both M x N over the same points).
/// Pairs of empty masks get IoU 0.
Eigen::MatrixXd iou_matrix(const Masks& a, const Masks& b);

/// cost(r, c) = -IoU(a_r, b_c).
inline Eigen::MatrixXd iou_cost(const Masks& a, const Masks& b) { return -iou_matrix(a, b); }

/// Joint matching of K pass mask sets onto a seed set. For pass k,
/// `seed_of[k][j]` is the seed instance matched to pass mask j, or -1.
struct JointMatching {
  std::vector<std::vector<std::int32_t>> seed_of;
  double score = 0.0;
};

/// How a joint matching is scored.
///  SeedStar: sum over passes and seed instances of IoU(seed, matched pass mask).
///  AllPairs: additionally sums IoU between every two pass masks assigned to the
///            same seed instance; this is the genuinely n-partite objective.
enum class JointObjective { SeedStar, AllPairs };

double joint_score(const Masks& seed, std::span<const Masks> passes, const JointMatching& matching,
                   JointObjective objective);

/// Exhaustive joint search; |seed| <= 4 and K <= 3.
JointMatching npartite_bruteforce(const Masks& seed, std::span<const Masks> passes,
                                  JointObjective objective = JointObjective::AllPairs);

inline constexpr Index kNpartiteMaxInstances = 4;
inline constexpr std::size_t kNpartiteMaxPasses = 3;

/// The heuristic: each pass is matched independently to the seed by lsa on the
/// negative-IoU cost (pass masks as rows), keeping pairs with IoU >= min_iou.
JointMatching per_pass_matching(const Masks& seed, std::span<const Masks> passes, double min_iou = 0.0);

}  // namespace bpl
