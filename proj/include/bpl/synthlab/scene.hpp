#pragma once

#include <cstdint>
#include <vector>

#include "bpl/common.hpp"

namespace bpl::synthlab {

/// Class 0 is ground ("stuff", no instance); classes 1..C-1 are objects whose
/// frequency decays geometrically with the class index.
struct SceneConfig {
  Index num_points = 10000;
  int num_classes = 8;
  int num_instances = 12;
  int num_utterances = 16;
  double background_fraction = 0.3;
  double class_decay = 0.6;
  double extent = 20.0;
  int appearance_dim = 16;
  double instance_appearance_sigma = 1.0;
  double point_appearance_sigma = 1.0;
  std::uint64_t world_seed = 2024;  // shared class definitions across scenes
};

/// Per-class definitions drawn once from `world_seed`.
struct World {
  MatrixXd signature;      // C x appearance_dim
  Eigen::VectorXd height;  // C, object centre height
  MatrixXd shape;          // C x 3, per-axis extent
  Eigen::VectorXd frequency;  // C, expected share of points
};

World make_world(const SceneConfig& config);

struct SyntheticScene {
  MatrixXd points;                          // N x 3
  std::vector<std::int32_t> gt_semantic;    // N
  std::vector<std::int32_t> instance_of;    // N, -1 on ground
  Masks gt_instances;                       // I x N
  std::vector<std::int32_t> instance_class; // I
  MatrixXd instance_center;                 // I x 3
  MatrixXd instance_extent;                 // I x 3
  MatrixXd anchor;                          // N x 3, centre used for offset features
  MatrixXd appearance;                      // N x appearance_dim
  Eigen::VectorXd noise_channel;            // N
  Eigen::VectorXd radius;                   // N, normalized distance from own centre in [0, 1]
  std::vector<std::int32_t> gt_grounding;   // U, referenced instance
  int num_classes = 0;
  std::uint64_t seed = 0;

  Index num_points() const { return points.rows(); }
  Index num_instances() const { return gt_instances.rows(); }
};

/// Deterministic in (config, seed): Gaussian blobs per instance over a ground plane.
SyntheticScene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Affine augmentation about the scene centre: rotation about z, isotropic
/// scale, translation.
struct Jitter {
  double rotation_range = 0.0;  // radians, uniform in [-r, r]
  double scale_range = 0.0;     // uniform in [1 - s, 1 + s]
  double translation_sigma = 0.0;
};

struct AffineDraw {
  double angle = 0.0;
  double scale = 1.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

AffineDraw draw_affine(const Jitter& jitter, std::mt19937_64& rng);

/// Feature map: [x/L, y/L, z/3, |dx|/2, |dy|/2, |dz|/2, appearance..., noise],
/// offsets taken from the point's anchor (instance centre, or the scene
/// centre on the ground plane) after applying `aug` to points and anchors.
MatrixXd point_features(const SyntheticScene& scene, double extent, const AffineDraw& aug = {});

Index feature_dim(const SceneConfig& config);

}  // namespace bpl::synthlab
