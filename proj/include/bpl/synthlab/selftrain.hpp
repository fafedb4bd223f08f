#pragma once

#include <cstdint>
#include <vector>

#include "bpl/common.hpp"
#include "bpl/semantic.hpp"
#include "bpl/synthlab/learner.hpp"
#include "bpl/synthlab/noise.hpp"
#include "bpl/synthlab/scene.hpp"

namespace bpl::synthlab {

/// Scenes are labeled or unlabeled as a whole; the first
/// round(labeled_fraction * scenes) scenes (at least one) are labeled.
/// The class definitions (world) are drawn from `seed`, overriding
/// scene.world_seed.
struct SelfTrainConfig {
  int scenes = 50;
  double labeled_fraction = 0.1;
  int rounds = 1;
  int K = 9;
  double p_tau = 0.75;
  ThresholdMode mode = ThresholdMode::Global;
  int vote_threshold = 0;  // 0 = unanimous
  std::uint64_t seed = 7;
  int test_scenes = 10;
  int jobs = 1;
  SceneConfig scene = default_scene();
  LearnerConfig learner;

  static SceneConfig default_scene() {
    SceneConfig s;
    s.num_points = 4000;
    return s;
  }
};

struct RoundMetrics {
  int round = 0;
  double miou = 0.0;                   // test scenes
  double accuracy = 0.0;               // test scenes
  double unlabeled_accuracy = 0.0;     // this round's model on the unlabeled split
  double source_accuracy = 0.0;        // model that produced this round's pseudo-labels; NaN at round 0
  double pseudo_label_accuracy = 0.0;  // NaN when no pseudo-labels
  double labeled_fraction = 0.0;       // pseudo-labeled share of unlabeled points
  Index pseudo_labeled = 0;
};

struct SelfTrainReport {
  SelfTrainConfig config;
  Index labeled_points = 0;
  Index unlabeled_points = 0;
  std::vector<RoundMetrics> rounds;  // round 0 is supervised-only
};

SelfTrainReport self_train_loop(const SelfTrainConfig& config);

/// Draws a 64-bit seed from a named stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace bpl::synthlab
