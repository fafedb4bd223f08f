#pragma once

// Noise models that fabricate stochastic predictions for a synthetic scene.
//
// Semantic (and grounding) rows: each point carries a latent belief over
// classes, drawn once per scene from a category:
//   easy         mass e ~ U(0.85, 0.97) on the true class, rest on one confuser
//   ambiguous    mass a ~ U(0.55, 0.70) on the true class, rest on one confuser
//   near-tie     true class and confuser share ~equal mass
//   overconfident-wrong   mass h ~ U(0.70, 0.85) on a wrong class, rest spread
//                evenly over all other classes (rarer classes hit more often)
// Every pass then corrupts the label with probability flip_prob (true class and
// a random other class swap roles) and draws a row from
// Dirichlet(sharpness * belief).
//
// Instance rows: a point's soft score for instance m is a logistic function of
// its jittered Mahalanobis distance from the instance centre. Non-members use
// a tighter cutoff, so only those deep inside the instance score near 0.5.
// Per pass, memberships of points near the instance flip with flip_prob,
// instances drop out with drop_prob, spurious instances appear with
// spurious_prob, and the instance order is shuffled.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bpl/common.hpp"
#include "bpl/synthlab/scene.hpp"

namespace bpl::synthlab {

struct NoiseModel {
  double flip_prob = 0.05;              // epsilon
  double dirichlet_sharpness = 30.0;    // alpha
  double belief_floor = 0.02;           // mixed-in uniform mass
  double overconfident_rate = 0.04;     // for the most frequent class; scaled by sqrt(rarity)
  double ambiguity_base = 0.15;
  double ambiguity_radius_gain = 0.35;  // P(ambiguous) = base + gain * radius^2
  double tie_fraction = 0.3;            // share of ambiguous points that are near-ties
  double easy_confidence_low = 0.85;
  double easy_confidence_high = 0.97;
  // Instance scores.
  bool geometric_instances = true;      // false: scores are exact 0/1 ground-truth memberships
  double instance_sharpness = 2.5;
  double instance_cutoff = 2.8;         // Mahalanobis distance where a member's score crosses 0.5
  double nonmember_cutoff = 1.0;        // same for points of other instances and the ground
  double instance_score_sigma = 0.05;
  double drop_prob = 0.02;
  double spurious_prob = 0.1;
  Jitter jitter{0.05, 0.05, 0.02};

  /// epsilon = 0, every point easy with belief ~1, very large sharpness,
  /// exact memberships: passes reproduce ground truth.
  static NoiseModel noiseless();
};

/// K semantic passes (N x C each, float rows on the simplex).
std::vector<MatrixXf> simulate_semantic_passes(const SyntheticScene& scene, const NoiseModel& noise, int K,
                                               std::uint64_t seed);

/// Per-point class beliefs the semantic passes are drawn around (N x C).
MatrixXd semantic_beliefs(const SyntheticScene& scene, const NoiseModel& noise, std::uint64_t seed);

struct InstanceSimulation {
  MatrixXf seed;                                     // I x N, unaugmented
  std::vector<MatrixXf> passes;                      // M_k x N
  std::vector<std::vector<std::int32_t>> source;     // per pass: GT instance of each row, -1 spurious
};

InstanceSimulation simulate_instance_passes(const SyntheticScene& scene, const NoiseModel& noise, int K,
                                            std::uint64_t seed);

struct GroundingSimulation {
  MatrixXf seed;                  // U x I over seed (= ground-truth) candidates
  std::vector<MatrixXf> passes;   // U x M_k over each pass's candidates
};

/// Uses `instances.source` so pass candidates line up with the instance passes.
GroundingSimulation simulate_grounding_passes(const SyntheticScene& scene, const InstanceSimulation& instances,
                                              const NoiseModel& noise, std::uint64_t seed);

struct SimulatedScene {
  std::vector<MatrixXf> semantic;
  InstanceSimulation instance;
  GroundingSimulation grounding;
};

SimulatedScene simulate_passes(const SyntheticScene& scene, const NoiseModel& noise, int K, std::uint64_t seed);

/// Writes tensors, ground truth and the semantic.json / instance.json /
/// grounding.json manifests into `dir`.
void write_simulation(const std::filesystem::path& dir, const std::string& scene_id, const SyntheticScene& scene,
                      const SimulatedScene& sim);

}  // namespace bpl::synthlab
