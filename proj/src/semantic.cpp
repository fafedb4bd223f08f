#include "bpl/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bpl {

namespace detail {

void check_simplex_row(double row_sum, double min_entry, Index row, std::size_t pass,
                       const char* module) {
  if (!(std::abs(row_sum - 1.0) <= 1e-5) || !(min_entry >= -1e-5)) {
    throw Error(ErrorCode::SimplexViolation, module,
                "pass " + std::to_string(pass) + " row " + std::to_string(row) + " sums to " +
                    std::to_string(row_sum));
  }
}

void throw_semantic(ErrorCode code, const std::string& message) {
  throw Error(code, "semantic_pl", message);
}

}  // namespace detail

std::string to_string(ThresholdMode mode) {
  return mode == ThresholdMode::Global ? "global" : "per-class";
}

ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "global") return ThresholdMode::Global;
  if (s == "per-class" || s == "perclass" || s == "per_class") return ThresholdMode::PerClass;
  throw Error(ErrorCode::InvalidArgument, "semantic_pl", "unknown threshold mode \"" + s + "\"");
}

std::string to_string(Selector s) {
  switch (s) {
    case Selector::Entropy: return "entropy";
    case Selector::Naive: return "naive";
    case Selector::ClassBalanced: return "class-balanced";
  }
  return "entropy";
}

Selector selector_from_string(const std::string& s) {
  if (s == "entropy") return Selector::Entropy;
  if (s == "naive") return Selector::Naive;
  if (s == "class-balanced") return Selector::ClassBalanced;
  throw Error(ErrorCode::InvalidArgument, "semantic_pl", "unknown selector \"" + s + "\"");
}

std::size_t admitted_quota(double p_tau, std::size_t eligible) {
  const double exact = p_tau * static_cast<double>(eligible);
  const double nearest = std::round(exact);
  // 0.7 * 10 evaluates to 7.000000000000001; treat such products as integral.
  const double q = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  return std::min(eligible, static_cast<std::size_t>(q));
}

namespace {

void check_p_tau(double p_tau) {
  if (!(p_tau > 0.0 && p_tau <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "semantic_pl",
                "p_tau " + std::to_string(p_tau) + " outside (0, 1]");
  }
}

// Admits the first `quota` entries of `ids` ordered by (score, index); returns the cut.
double admit_lowest(std::vector<std::size_t>& ids, std::span<const double> score, double p_tau,
                    std::vector<bool>& admitted, std::size_t& count) {
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    return score[a] < score[b] || (score[a] == score[b] && a < b);
  });
  const std::size_t quota = admitted_quota(p_tau, ids.size());
  for (std::size_t r = 0; r < quota; ++r) admitted[ids[r]] = true;
  count += quota;
  if (quota == 0) return score[ids.front()];
  return std::nextafter(score[ids[quota - 1]], std::numeric_limits<double>::infinity());
}

}  // namespace

RankSelection select_lowest(std::span<const double> score, std::span<const std::int32_t> group,
                            double p_tau, ThresholdMode mode, Index num_groups) {
  check_p_tau(p_tau);
  if (score.size() != group.size()) {
    throw Error(ErrorCode::ShapeMismatch, "semantic_pl", "score and vote vectors differ in length");
  }
  RankSelection sel;
  sel.admitted.assign(score.size(), false);
  sel.threshold.mode = mode;

  std::vector<std::vector<std::size_t>> buckets(mode == ThresholdMode::Global ? 1 : num_groups);
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (group[i] < 0) continue;
    if (group[i] >= num_groups) {
      throw Error(ErrorCode::InvalidArgument, "semantic_pl",
                  "vote " + std::to_string(group[i]) + " at point " + std::to_string(i) + " out of range");
    }
    buckets[mode == ThresholdMode::Global ? 0 : static_cast<std::size_t>(group[i])].push_back(i);
    ++sel.eligible_count;
  }
  if (sel.eligible_count == 0) {
    throw Error(ErrorCode::EmptyConsensus, "semantic_pl", "no consensus points to threshold");
  }
  if (mode == ThresholdMode::Global) {
    sel.threshold.global = admit_lowest(buckets[0], score, p_tau, sel.admitted, sel.admitted_count);
  } else {
    sel.threshold.per_class.assign(static_cast<std::size_t>(num_groups),
                                   std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < buckets.size(); ++c) {
      if (buckets[c].empty()) continue;
      sel.threshold.per_class[c] = admit_lowest(buckets[c], score, p_tau, sel.admitted, sel.admitted_count);
    }
  }
  return sel;
}

Threshold quantile_tau(std::span<const double> entropy, std::span<const std::int32_t> votes,
                       double p_tau, ThresholdMode mode, Index num_classes) {
  return select_lowest(entropy, votes, p_tau, mode, num_classes).threshold;
}

namespace detail {

SemanticPseudoLabels solve_with_scores(std::span<const double> score, std::span<const std::int32_t> votes,
                                       Index num_classes, double p_tau, ThresholdMode mode,
                                       Selector selector) {
  const auto sel = select_lowest(score, votes, p_tau, mode, num_classes);
  SemanticPseudoLabels out;
  out.labels.assign(votes.size(), kIgnore);
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (sel.admitted[i]) out.labels[i] = votes[i];
  }
  out.threshold = sel.threshold;
  out.p_tau = p_tau;
  out.selector = selector;
  out.labeled_count = sel.admitted_count;
  out.consensus_count = sel.eligible_count;
  return out;
}

}  // namespace detail

}  // namespace bpl
