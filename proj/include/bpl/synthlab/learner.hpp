#pragma once

// Nearest-prototype classifier over the fixed point features:
// logit_c(x) = -beta / 2 * ||x - mu_c||^2, softmax over classes seen in training.

#include <cstdint>
#include <span>
#include <vector>

#include "bpl/common.hpp"
#include "bpl/synthlab/scene.hpp"

namespace bpl::synthlab {

struct LearnerConfig {
  double dropout = 0.1;        // weight dropout on prototype entries, inverted scaling
  double beta = 0.5;           // logit scale
  int epochs = 3;              // full-batch cross-entropy steps after the class-mean start
  double learning_rate = 0.05;
  Jitter jitter{0.05, 0.05, 0.05};  // affine jitter for stochastic passes
};

struct ToyLearner {
  MatrixXd prototypes;        // C x D
  std::vector<bool> active;   // classes with at least one training point
  LearnerConfig config;

  int num_classes() const { return static_cast<int>(prototypes.rows()); }
};

/// Features with labels; kIgnore rows are skipped.
struct LabeledBlock {
  const MatrixXd* features = nullptr;
  std::span<const std::int32_t> labels;
};

/// Prototypes start at the class means of all non-ignored rows, then take
/// `epochs` gradient steps on the mean cross-entropy.
ToyLearner toy_train(std::span<const LabeledBlock> data, int num_classes, const LearnerConfig& config);

/// N x C softmax rows; `prototypes` overrides the learner's weights.
MatrixXd predict_proba(const ToyLearner& learner, const MatrixXd& features);
MatrixXd predict_proba(const ToyLearner& learner, const MatrixXd& prototypes, const MatrixXd& features);
std::vector<std::int32_t> predict(const ToyLearner& learner, const MatrixXd& features);

/// K passes, each with a fresh dropout mask on the prototypes and fresh affine
/// jitter of the point coordinates.
std::vector<MatrixXf> stochastic_infer(const ToyLearner& learner, const SyntheticScene& scene, double extent, int K,
                                       std::uint64_t seed);

}  // namespace bpl::synthlab
