#include "bpl/instance.hpp"

#include <algorithm>
#include <string>

#include "bpl/semantic.hpp"

namespace bpl {

namespace {
constexpr const char* kModule = "instance_pl";
}

std::vector<Index> InstancePseudoMasks::point_counts() const {
  std::vector<Index> counts(static_cast<std::size_t>(masks.rows()));
  for (Index m = 0; m < masks.rows(); ++m) counts[m] = masks.row(m).cast<Index>().sum();
  return counts;
}

PassMatch match_pass(const Masks& seed_masks, const Masks& pass_masks, double min_iou) {
  const Eigen::MatrixXd iou = iou_matrix(pass_masks, seed_masks);
  const auto assignment = lsa(-iou);
  PassMatch out;
  out.seed_of.assign(static_cast<std::size_t>(pass_masks.rows()), -1);
  out.iou.assign(static_cast<std::size_t>(pass_masks.rows()), 0.0);
  for (const auto& [row, col] : assignment.pairs) {
    if (iou(row, col) >= min_iou && iou(row, col) > 0.0) {
      out.seed_of[row] = static_cast<std::int32_t>(col);
      out.iou[row] = iou(row, col);
    }
  }
  return out;
}

InstancePseudoMasks generate_instance_pseudo_labels(const Eigen::Ref<const Eigen::MatrixXd>& seed_soft,
                                                    std::span<const Eigen::MatrixXd> pass_soft,
                                                    const InstanceOptions& options) {
  if (pass_soft.empty()) throw Error(ErrorCode::InvalidArgument, kModule, "K = 0 passes");
  if (!(options.p_tau > 0.0 && options.p_tau <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, kModule,
                "p_tau " + std::to_string(options.p_tau) + " outside (0, 1]");
  }
  const Index M = seed_soft.rows();
  const Index N = seed_soft.cols();
  for (std::size_t k = 0; k < pass_soft.size(); ++k) {
    if (pass_soft[k].cols() != N) {
      throw Error(ErrorCode::ShapeMismatch, kModule,
                  "pass " + std::to_string(k) + " covers " + std::to_string(pass_soft[k].cols()) +
                      " points, seed covers " + std::to_string(N));
    }
  }
  const std::size_t K = pass_soft.size();

  InstancePseudoMasks out;
  out.num_passes = K;
  const Masks seed_mask = to_mask(seed_soft, options.mask_threshold);
  out.unanimous = seed_mask;
  out.masks = Masks::Zero(M, N);
  out.per_point_entropy = Eigen::MatrixXd::Zero(M, N);
  out.accumulated = seed_soft;

  std::vector<Masks> pass_masks;
  pass_masks.reserve(K);
  for (const auto& p : pass_soft) pass_masks.push_back(to_mask(p, options.mask_threshold));
  for (std::size_t k = 0; k < K; ++k) out.matches.push_back(match_pass(seed_mask, pass_masks[k], options.min_iou));
  if (M == 0) return out;

  // For each seed instance, the pass row matched to it (or -1).
  std::vector<std::vector<Index>> row_for_seed(K, std::vector<Index>(static_cast<std::size_t>(M), -1));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < out.matches[k].seed_of.size(); ++j) {
      const auto s = out.matches[k].seed_of[j];
      if (s >= 0) row_for_seed[k][s] = static_cast<Index>(j);
    }
  }

  for (Index m = 0; m < M; ++m) {
    bool matched_everywhere = true;
    for (std::size_t k = 0; k < K; ++k) {
      const Index row = row_for_seed[k][m];
      if (row < 0) {
        matched_everywhere = false;
        continue;
      }
      out.unanimous.row(m) = out.unanimous.row(m).cwiseMin(pass_masks[k].row(row));
    }
    if (!matched_everywhere) out.unanimous.row(m).setZero();
  }

  std::vector<double> contributions;
  contributions.reserve(K + 1);
  for (Index m = 0; m < M; ++m) {
    for (Index n = 0; n < N; ++n) {
      contributions.clear();
      contributions.push_back(seed_soft(m, n));
      for (std::size_t k = 0; k < K; ++k) {
        const Index row = row_for_seed[k][m];
        if (row >= 0) contributions.push_back(pass_soft[k](row, n));
      }
      out.accumulated(m, n) = canonical_sum(contributions);
      const double p = std::clamp(out.accumulated(m, n) / static_cast<double>(K + 1), 0.0, 1.0);
      out.per_point_entropy(m, n) = binary_entropy(p);
    }
  }

  // One tau for the whole scene, over the unanimous (instance, point) entries.
  std::vector<double> score(static_cast<std::size_t>(M * N));
  std::vector<std::int32_t> eligible(static_cast<std::size_t>(M * N), -1);
  std::size_t num_unanimous = 0;
  for (Index m = 0; m < M; ++m) {
    for (Index n = 0; n < N; ++n) {
      const auto idx = static_cast<std::size_t>(m * N + n);
      score[idx] = out.per_point_entropy(m, n);
      if (out.unanimous(m, n)) {
        eligible[idx] = 0;
        ++num_unanimous;
      }
    }
  }
  if (num_unanimous == 0) return out;

  const auto sel = select_lowest(score, eligible, options.p_tau, ThresholdMode::Global, 1);
  out.tau = sel.threshold.global;
  for (Index m = 0; m < M; ++m) {
    for (Index n = 0; n < N; ++n) {
      if (sel.admitted[static_cast<std::size_t>(m * N + n)]) out.masks(m, n) = 1;
    }
    if (out.masks.row(m).any()) out.kept_instances.push_back(m);
  }
  return out;
}

HeuristicExactReport heuristic_vs_exact_report(const Masks& seed, std::span<const Masks> passes,
                                               JointObjective objective) {
  HeuristicExactReport report;
  report.exact = npartite_bruteforce(seed, passes, objective);
  report.heuristic = per_pass_matching(seed, passes, 0.0);
  report.heuristic.score = joint_score(seed, passes, report.heuristic, objective);
  report.exact_score = report.exact.score;
  report.heuristic_score = report.heuristic.score;
  report.ratio = report.exact_score > 0.0 ? report.heuristic_score / report.exact_score : 1.0;
  // Zero-IoU pairs carry no score and the heuristic drops them; compare without them.
  auto overlapping = [&](JointMatching j) {
    for (std::size_t k = 0; k < passes.size(); ++k) {
      const auto iou = iou_matrix(passes[k], seed);
      for (std::size_t r = 0; r < j.seed_of[k].size(); ++r) {
        if (j.seed_of[k][r] >= 0 && iou(static_cast<Index>(r), j.seed_of[k][r]) == 0.0) j.seed_of[k][r] = -1;
      }
    }
    return j.seed_of;
  };
  report.agree = overlapping(report.heuristic) == overlapping(report.exact);
  return report;
}

}  // namespace bpl
