#include "bpl/synthlab/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bpl::synthlab {

namespace {

MatrixXd gaussian(Index rows, Index cols, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, sigma);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

}  // namespace

World make_world(const SceneConfig& config) {
  if (config.num_classes < 1) throw Error(ErrorCode::InvalidArgument, "synthlab", "num_classes must be >= 1");
  const int C = config.num_classes;
  auto rng = make_stream(config.world_seed, "world");
  World w;
  w.signature = gaussian(C, config.appearance_dim, 1.0, rng);
  w.height = Eigen::VectorXd::Zero(C);
  w.shape = MatrixXd::Zero(C, 3);
  w.shape.row(0) << config.extent / 2, config.extent / 2, 0.05;
  std::uniform_real_distribution<double> shape_dist(0.3, 2.0);
  std::vector<double> heights;
  for (int c = 1; c < C; ++c) heights.push_back(C > 2 ? 0.5 + 2.5 * (c - 1) / (C - 2) : 1.0);
  std::shuffle(heights.begin(), heights.end(), rng);
  for (int c = 1; c < C; ++c) {
    w.height(c) = heights[static_cast<std::size_t>(c - 1)];
    for (int a = 0; a < 3; ++a) w.shape(c, a) = shape_dist(rng);
  }
  w.frequency = Eigen::VectorXd::Zero(C);
  w.frequency(0) = C > 1 ? config.background_fraction : 1.0;
  double norm = 0.0;
  for (int c = 1; c < C; ++c) norm += std::pow(config.class_decay, c - 1);
  for (int c = 1; c < C; ++c) {
    w.frequency(c) = (1.0 - config.background_fraction) * std::pow(config.class_decay, c - 1) / norm;
  }
  return w;
}

SyntheticScene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  if (config.num_points <= 0) throw Error(ErrorCode::InvalidArgument, "synthlab", "num_points must be > 0");
  if (config.num_instances > 0 && config.num_classes < 2) {
    throw Error(ErrorCode::InvalidArgument, "synthlab", "object instances need at least 2 classes");
  }
  const World world = make_world(config);
  const Index N = config.num_points;
  const int C = config.num_classes;
  const int I = config.num_instances;
  const double L = config.extent;
  auto rng = make_stream(seed, "scene");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticScene s;
  s.seed = seed;
  s.num_classes = C;
  s.points.resize(N, 3);
  s.anchor.resize(N, 3);
  s.radius.resize(N);
  s.gt_semantic.assign(static_cast<std::size_t>(N), 0);
  s.instance_of.assign(static_cast<std::size_t>(N), -1);
  s.appearance.resize(N, config.appearance_dim);
  s.gt_instances = Masks::Zero(I, N);
  s.instance_class.resize(static_cast<std::size_t>(I));
  s.instance_center.resize(I, 3);
  s.instance_extent.resize(I, 3);

  const Index nb = I > 0 ? static_cast<Index>(std::llround(config.background_fraction * N)) : N;
  const Eigen::RowVectorXd ground_offset =
      gaussian(1, config.appearance_dim, config.instance_appearance_sigma, rng);
  const Eigen::Vector3d centre(L / 2, L / 2, 0.0);
  for (Index i = 0; i < nb; ++i) {
    s.points.row(i) << unit(rng) * L, unit(rng) * L, 0.05 * normal(rng);
    s.anchor.row(i) = centre.transpose();
    s.radius(i) = std::min(1.0, (s.points.row(i).head<2>() - centre.head<2>().transpose()).norm() / (L / std::sqrt(2.0)));
    s.appearance.row(i) = world.signature.row(0) + ground_offset +
                          gaussian(1, config.appearance_dim, config.point_appearance_sigma, rng);
  }

  std::vector<double> class_weights;
  for (int c = 1; c < C; ++c) class_weights.push_back(world.frequency(c));
  std::discrete_distribution<int> class_dist(class_weights.begin(), class_weights.end());
  const Index per = I > 0 ? (N - nb) / I : 0;
  const Index extra = I > 0 ? (N - nb) % I : 0;
  Index next = nb;
  for (int m = 0; m < I; ++m) {
    const int c = 1 + class_dist(rng);
    s.instance_class[m] = c;
    s.instance_center.row(m) << unit(rng) * L, unit(rng) * L, world.height(c) + 0.1 * normal(rng);
    s.instance_extent.row(m) = world.shape.row(c) * std::exp(0.2 * normal(rng));
    const Eigen::RowVectorXd inst_offset =
        gaussian(1, config.appearance_dim, config.instance_appearance_sigma, rng);
    const Index count = per + (m < extra ? 1 : 0);
    for (Index j = 0; j < count; ++j, ++next) {
      const Eigen::RowVector3d z(normal(rng), normal(rng), normal(rng));
      s.points.row(next) = s.instance_center.row(m) + z.cwiseProduct(s.instance_extent.row(m));
      s.anchor.row(next) = s.instance_center.row(m);
      s.radius(next) = std::min(1.0, z.norm() / 3.0);
      s.appearance.row(next) = world.signature.row(c) + inst_offset +
                               gaussian(1, config.appearance_dim, config.point_appearance_sigma, rng);
      s.gt_semantic[next] = c;
      s.instance_of[next] = m;
      s.gt_instances(m, next) = 1;
    }
  }
  s.noise_channel.resize(N);
  for (Index i = 0; i < N; ++i) s.noise_channel(i) = normal(rng);

  if (I > 0) {
    std::uniform_int_distribution<int> pick(0, I - 1);
    for (int u = 0; u < config.num_utterances; ++u) s.gt_grounding.push_back(pick(rng));
  }
  return s;
}

AffineDraw draw_affine(const Jitter& jitter, std::mt19937_64& rng) {
  AffineDraw a;
  if (jitter.rotation_range > 0) {
    a.angle = std::uniform_real_distribution<double>(-jitter.rotation_range, jitter.rotation_range)(rng);
  }
  if (jitter.scale_range > 0) {
    a.scale = std::uniform_real_distribution<double>(1.0 - jitter.scale_range, 1.0 + jitter.scale_range)(rng);
  }
  if (jitter.translation_sigma > 0) {
    std::normal_distribution<double> nd(0.0, jitter.translation_sigma);
    a.translation = Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
  }
  return a;
}

Index feature_dim(const SceneConfig& config) { return 6 + config.appearance_dim + 1; }

MatrixXd point_features(const SyntheticScene& scene, double extent, const AffineDraw& aug) {
  const Index N = scene.num_points();
  const Index D = scene.appearance.cols();
  const Eigen::Matrix3d rot = aug.scale * Eigen::AngleAxisd(aug.angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::RowVector3d centre(extent / 2, extent / 2, 0.0);
  MatrixXd f(N, 6 + D + 1);
  for (Index i = 0; i < N; ++i) {
    const Eigen::RowVector3d p = (scene.points.row(i) - centre) * rot.transpose() + centre + aug.translation.transpose();
    const Eigen::RowVector3d off = (scene.points.row(i) - scene.anchor.row(i)) * rot.transpose();
    f(i, 0) = p(0) / extent;
    f(i, 1) = p(1) / extent;
    f(i, 2) = p(2) / 3.0;
    f.row(i).segment<3>(3) = off.cwiseAbs() / 2.0;
    f.row(i).segment(6, D) = scene.appearance.row(i);
    f(i, 6 + D) = scene.noise_channel(i);
  }
  return f;
}

}  // namespace bpl::synthlab
