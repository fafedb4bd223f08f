#include "bpl/synthlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace bpl::synthlab {

namespace {

constexpr const char* kModule = "synthlab";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::ShapeMismatch, kModule,
                "predictions have " + std::to_string(a) + " entries, ground truth " + std::to_string(b));
  }
}

}  // namespace

SemanticMetrics evaluate_semantic(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth,
                                  int num_classes) {
  check_lengths(predicted.size(), truth.size());
  const auto C = static_cast<std::size_t>(num_classes);
  std::vector<Index> inter(C, 0), pred_count(C, 0), true_count(C, 0);
  SemanticMetrics m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto p = predicted[i];
    const auto t = truth[i];
    if (p == kIgnore) continue;
    if (p < 0 || p >= num_classes || t < 0 || t >= num_classes) {
      throw Error(ErrorCode::InvalidArgument, kModule, "label out of range at point " + std::to_string(i));
    }
    ++m.labeled;
    ++pred_count[static_cast<std::size_t>(p)];
    ++true_count[static_cast<std::size_t>(t)];
    if (p == t) {
      ++m.correct;
      ++inter[static_cast<std::size_t>(p)];
    }
  }
  m.per_class_iou.assign(C, kNaN);
  double sum = 0.0;
  int defined = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const Index uni = pred_count[c] + true_count[c] - inter[c];
    if (uni == 0) continue;
    m.per_class_iou[c] = static_cast<double>(inter[c]) / static_cast<double>(uni);
    sum += m.per_class_iou[c];
    ++defined;
  }
  m.miou = defined > 0 ? sum / defined : kNaN;
  m.accuracy = m.labeled > 0 ? static_cast<double>(m.correct) / static_cast<double>(m.labeled) : kNaN;
  return m;
}

InstanceMetrics evaluate_instance(const Masks& predicted, const Masks& truth) {
  if (predicted.rows() > 0 && truth.rows() > 0 && predicted.cols() != truth.cols()) {
    throw Error(ErrorCode::ShapeMismatch, kModule, "predicted and ground-truth masks cover different point counts");
  }
  const Index P = predicted.rows();
  const Index G = truth.rows();
  MatrixXd inter = MatrixXd::Zero(P, G);
  if (P > 0 && G > 0) inter = predicted.cast<double>() * truth.cast<double>().transpose();
  const Eigen::VectorXd psize = predicted.cast<double>().rowwise().sum();
  const Eigen::VectorXd gsize = truth.cast<double>().rowwise().sum();

  InstanceMetrics m;
  for (Index i = 0; i < P; ++i) {
    if (psize(i) == 0) continue;
    ++m.total;
    if (G == 0) continue;
    Index best = 0;
    for (Index g = 1; g < G; ++g) {
      if (inter(i, g) > inter(i, best)) best = g;
    }
    if (inter(i, best) == psize(i)) ++m.correct;
  }
  m.accuracy = m.total > 0 ? static_cast<double>(m.correct) / static_cast<double>(m.total) : kNaN;

  if (G == 0) {
    m.ap50 = kNaN;
    return m;
  }
  std::vector<Index> order;
  for (Index i = 0; i < P; ++i) {
    if (psize(i) > 0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return psize(a) > psize(b); });
  std::vector<bool> used(static_cast<std::size_t>(G), false);
  std::vector<double> precision, recall;
  Index tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Index i = order[r];
    Index best = -1;
    double best_iou = 0.5;
    for (Index g = 0; g < G; ++g) {
      if (used[static_cast<std::size_t>(g)]) continue;
      const double uni = psize(i) + gsize(g) - inter(i, g);
      const double iou = uni > 0 ? inter(i, g) / uni : 0.0;
      if (iou >= best_iou) {
        best_iou = iou;
        best = g;
        if (iou == 1.0) break;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(G));
  }
  // All-point interpolation: area under the monotone precision envelope.
  for (std::size_t r = precision.size(); r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t r = 0; r < precision.size(); ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  m.ap50 = ap;
  return m;
}

GroundingMetrics evaluate_grounding(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth) {
  check_lengths(predicted.size(), truth.size());
  GroundingMetrics m;
  for (std::size_t u = 0; u < predicted.size(); ++u) {
    if (predicted[u] == kIgnore) continue;
    ++m.labeled;
    if (predicted[u] == truth[u]) ++m.correct;
  }
  m.accuracy = m.labeled > 0 ? static_cast<double>(m.correct) / static_cast<double>(m.labeled) : kNaN;
  return m;
}

}  // namespace bpl::synthlab
