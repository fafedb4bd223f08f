#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bpl/common.hpp"

namespace bpl::synthlab {

/// Points predicted as kIgnore are left out of every count.
struct SemanticMetrics {
  std::vector<double> per_class_iou;  // NaN where a class is absent from both sides
  double miou = 0.0;                  // mean over classes with a defined IoU
  double accuracy = 0.0;              // over labeled points; NaN when none
  Index labeled = 0;
  Index correct = 0;
};

SemanticMetrics evaluate_semantic(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth,
                                  int num_classes);

/// A predicted mask is correct when it lies entirely inside the ground-truth
/// instance it overlaps most. AP@50 ranks predictions by size, largest first,
/// and matches greedily at IoU >= 0.5.
struct InstanceMetrics {
  double accuracy = 0.0;  // NaN when there are no non-empty predictions
  Index correct = 0;
  Index total = 0;
  double ap50 = 0.0;      // NaN without ground-truth instances
};

InstanceMetrics evaluate_instance(const Masks& predicted, const Masks& truth);

struct GroundingMetrics {
  double accuracy = 0.0;  // over utterances with a label; NaN when none
  Index labeled = 0;
  Index correct = 0;
};

GroundingMetrics evaluate_grounding(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth);

}  // namespace bpl::synthlab
