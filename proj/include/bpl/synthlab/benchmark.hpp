#pragma once

// Seeded pseudo-label quality benchmark: many simulated scenes, each solved
// with its own threshold, accuracies pooled over all labeled points.

#include <cstdint>
#include <limits>
#include <vector>

#include "bpl/common.hpp"
#include "bpl/synthlab/noise.hpp"
#include "bpl/synthlab/scene.hpp"

namespace bpl::synthlab {

struct SemanticBenchmarkConfig {
  int scenes = 50;
  SceneConfig scene;  // world drawn from `seed`
  NoiseModel noise;
  int K = 9;
  double p_tau = 0.75;
  std::uint64_t seed = 42;
  int jobs = 1;
  std::vector<int> vote_thresholds{5, 7, 9};
};

struct SelectionScore {
  Index labeled = 0;
  Index correct = 0;

  double accuracy() const {
    return labeled > 0 ? static_cast<double>(correct) / static_cast<double>(labeled)
                       : std::numeric_limits<double>::quiet_NaN();
  }
};

struct SemanticBenchmarkResult {
  SelectionScore entropy;
  SelectionScore naive;
  SelectionScore class_balanced;
  SelectionScore unanimous;                 // every consensus point
  std::vector<SelectionScore> by_vote_threshold;  // entropy selection, parallel to config.vote_thresholds
  Index points = 0;
};

SemanticBenchmarkResult run_semantic_benchmark(const SemanticBenchmarkConfig& config);

}  // namespace bpl::synthlab
