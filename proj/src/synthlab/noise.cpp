#include "bpl/synthlab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "bpl/tensorio.hpp"

namespace bpl::synthlab {

namespace {

using Normal = std::normal_distribution<double>;
using Uniform = std::uniform_real_distribution<double>;

int other_class(int truth, int C, std::mt19937_64& rng) {
  const int r = std::uniform_int_distribution<int>(0, C - 2)(rng);
  return r >= truth ? r + 1 : r;
}

/// Latent belief rows for the given truths (see the category list in noise.hpp).
MatrixXd draw_beliefs(std::span<const std::int32_t> truth, const Eigen::VectorXd& radius, int C,
                      const Eigen::VectorXd& class_share, const NoiseModel& noise, std::mt19937_64& rng) {
  const Index N = static_cast<Index>(truth.size());
  MatrixXd b = MatrixXd::Zero(N, C);
  if (C == 1) {
    b.setOnes();
    return b;
  }
  Uniform unit(0.0, 1.0);
  const double share_max = class_share.maxCoeff();
  for (Index i = 0; i < N; ++i) {
    const int y = truth[i];
    const int z = other_class(y, C, rng);
    const double rarity = class_share(y) > 0 ? std::sqrt(share_max / class_share(y)) : 1.0;
    const double p_wrong = std::min(0.35, noise.overconfident_rate * rarity);
    const double r = radius(i);
    if (unit(rng) < p_wrong) {
      const double h = Uniform(0.70, 0.85)(rng);
      b.row(i).setConstant((1.0 - h) / (C - 1));
      b(i, z) = h;
    } else if (unit(rng) < noise.ambiguity_base + noise.ambiguity_radius_gain * r * r) {
      if (unit(rng) < noise.tie_fraction) {
        const double t = Uniform(0.42, 0.50)(rng);
        b.row(i).setConstant((1.0 - 2.0 * t) / C);
        b(i, y) += t;
        b(i, z) += t;
      } else {
        const double a = Uniform(0.55, 0.70)(rng);
        b(i, y) = a;
        b(i, z) = 1.0 - a;
      }
    } else {
      const double e = noise.easy_confidence_low < noise.easy_confidence_high
                           ? Uniform(noise.easy_confidence_low, noise.easy_confidence_high)(rng)
                           : noise.easy_confidence_low;
      b(i, y) = e;
      b(i, z) = 1.0 - e;
    }
  }
  b = (1.0 - noise.belief_floor) * b.array() + noise.belief_floor / C;
  return b;
}

/// One stochastic pass around the beliefs.
MatrixXd draw_pass(const MatrixXd& beliefs, std::span<const std::int32_t> truth, const NoiseModel& noise,
                   std::mt19937_64& rng) {
  const Index N = beliefs.rows();
  const int C = static_cast<int>(beliefs.cols());
  Uniform unit(0.0, 1.0);
  std::gamma_distribution<double> gamma;
  using GammaParam = std::gamma_distribution<double>::param_type;
  MatrixXd out(N, C);
  Eigen::RowVectorXd b(C);
  for (Index i = 0; i < N; ++i) {
    b = beliefs.row(i);
    if (C > 1 && unit(rng) < noise.flip_prob) {
      const int y = truth[i];
      std::swap(b(y), b(other_class(y, C, rng)));
    }
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      out(i, c) = gamma(rng, GammaParam(noise.dirichlet_sharpness * b(c), 1.0));
      sum += out(i, c);
    }
    if (sum > 0.0 && std::isfinite(sum)) {
      out.row(i) /= sum;
    } else {
      out.row(i) = b / b.sum();
    }
  }
  return out;
}

Eigen::VectorXd empirical_share(const SyntheticScene& scene) {
  Eigen::VectorXd share = Eigen::VectorXd::Zero(scene.num_classes);
  for (auto y : scene.gt_semantic) share(y) += 1.0;
  return share / static_cast<double>(std::max<Index>(1, scene.num_points()));
}

MatrixXf to_float_rows(const MatrixXd& m) {
  MatrixXf f = m.cast<float>();
  return f;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Soft scores of instance m for every point; `aug` and `rng` are null for the seed.
void instance_row(const SyntheticScene& scene, Index m, const NoiseModel& noise, const AffineDraw* aug,
                  std::mt19937_64* rng, Eigen::Ref<Eigen::RowVectorXd> row) {
  const Index N = scene.num_points();
  if (!noise.geometric_instances) {
    row = scene.gt_instances.row(m).cast<double>();
    return;
  }
  Eigen::Matrix3d lin = Eigen::Matrix3d::Identity();
  if (aug) lin = aug->scale * Eigen::AngleAxisd(aug->angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::RowVector3d centre = scene.instance_center.row(m);
  const Eigen::RowVector3d extent = scene.instance_extent.row(m);
  Normal normal(0.0, 1.0);
  Uniform unit(0.0, 1.0);
  for (Index n = 0; n < N; ++n) {
    Eigen::RowVector3d off = (scene.points.row(n) - centre) * lin.transpose();
    if (rng) off += noise.jitter.translation_sigma * Eigen::RowVector3d(normal(*rng), normal(*rng), normal(*rng));
    const double d = off.cwiseQuotient(extent).norm();
    const double cutoff = scene.instance_of[n] == m ? noise.instance_cutoff : noise.nonmember_cutoff;
    double s = logistic(noise.instance_sharpness * (cutoff - d));
    if (rng) {
      s += noise.instance_score_sigma * normal(*rng);
      if (d < 2.0 * noise.instance_cutoff && unit(*rng) < noise.flip_prob) s = 1.0 - s;
    }
    row(n) = std::clamp(s, 0.0, 1.0);
  }
}

}  // namespace

NoiseModel NoiseModel::noiseless() {
  NoiseModel n;
  n.flip_prob = 0.0;
  n.dirichlet_sharpness = 1e6;
  n.belief_floor = 1e-6;
  n.overconfident_rate = 0.0;
  n.ambiguity_base = 0.0;
  n.ambiguity_radius_gain = 0.0;
  n.easy_confidence_low = 1.0;
  n.easy_confidence_high = 1.0;
  n.geometric_instances = false;
  n.drop_prob = 0.0;
  n.spurious_prob = 0.0;
  n.jitter = {};
  return n;
}

MatrixXd semantic_beliefs(const SyntheticScene& scene, const NoiseModel& noise, std::uint64_t seed) {
  auto rng = make_stream(seed, "semantic-belief");
  return draw_beliefs(scene.gt_semantic, scene.radius, scene.num_classes, empirical_share(scene), noise, rng);
}

std::vector<MatrixXf> simulate_semantic_passes(const SyntheticScene& scene, const NoiseModel& noise, int K,
                                               std::uint64_t seed) {
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "synthlab", "K must be >= 1");
  const MatrixXd beliefs = semantic_beliefs(scene, noise, seed);
  std::vector<MatrixXf> passes;
  passes.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    auto rng = make_stream(seed, "semantic-pass", static_cast<std::uint64_t>(k));
    passes.push_back(to_float_rows(draw_pass(beliefs, scene.gt_semantic, noise, rng)));
  }
  return passes;
}

InstanceSimulation simulate_instance_passes(const SyntheticScene& scene, const NoiseModel& noise, int K,
                                            std::uint64_t seed) {
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "synthlab", "K must be >= 1");
  const Index I = scene.num_instances();
  const Index N = scene.num_points();
  InstanceSimulation sim;
  MatrixXd seed_soft(I, N);
  for (Index m = 0; m < I; ++m) instance_row(scene, m, noise, nullptr, nullptr, seed_soft.row(m));
  sim.seed = seed_soft.cast<float>();

  Uniform unit(0.0, 1.0);
  for (int k = 0; k < K; ++k) {
    auto rng = make_stream(seed, "instance-pass", static_cast<std::uint64_t>(k));
    const AffineDraw aug = draw_affine(noise.jitter, rng);
    std::vector<std::int32_t> source;
    for (Index m = 0; m < I; ++m) {
      if (unit(rng) >= noise.drop_prob) source.push_back(static_cast<std::int32_t>(m));
    }
    if (unit(rng) < noise.spurious_prob) source.push_back(-1);
    std::shuffle(source.begin(), source.end(), rng);

    MatrixXd soft(static_cast<Index>(source.size()), N);
    for (std::size_t j = 0; j < source.size(); ++j) {
      if (source[j] >= 0) {
        instance_row(scene, source[j], noise, &aug, &rng, soft.row(static_cast<Index>(j)));
      } else {
        // A small blob around a random point, unrelated to any instance.
        const Index anchor = std::uniform_int_distribution<Index>(0, N - 1)(rng);
        for (Index n = 0; n < N; ++n) {
          const double d = (scene.points.row(n) - scene.points.row(anchor)).norm();
          soft(static_cast<Index>(j), n) = logistic(noise.instance_sharpness * (1.0 - d));
        }
      }
    }
    sim.passes.push_back(soft.cast<float>());
    sim.source.push_back(std::move(source));
  }
  return sim;
}

GroundingSimulation simulate_grounding_passes(const SyntheticScene& scene, const InstanceSimulation& instances,
                                              const NoiseModel& noise, std::uint64_t seed) {
  const Index I = scene.num_instances();
  const Index U = static_cast<Index>(scene.gt_grounding.size());
  GroundingSimulation sim;
  if (I == 0) throw Error(ErrorCode::InvalidArgument, "synthlab", "grounding needs at least one instance");
  auto rng = make_stream(seed, "grounding-belief");
  Eigen::VectorXd radius(U);
  Uniform unit(0.0, 1.0);
  for (Index u = 0; u < U; ++u) radius(u) = unit(rng);
  const Eigen::VectorXd share = Eigen::VectorXd::Constant(I, 1.0 / static_cast<double>(I));
  const MatrixXd beliefs = draw_beliefs(scene.gt_grounding, radius, static_cast<int>(I), share, noise, rng);
  sim.seed = beliefs.cast<float>();

  for (std::size_t k = 0; k < instances.passes.size(); ++k) {
    auto prng = make_stream(seed, "grounding-pass", k);
    const MatrixXd gt_space = draw_pass(beliefs, scene.gt_grounding, noise, prng);
    const auto& source = instances.source[k];
    MatrixXd pass(U, static_cast<Index>(source.size()));
    for (std::size_t j = 0; j < source.size(); ++j) {
      if (source[j] >= 0) {
        pass.col(static_cast<Index>(j)) = gt_space.col(source[j]);
      } else {
        pass.col(static_cast<Index>(j)).setConstant(noise.belief_floor / static_cast<double>(I));
      }
    }
    for (Index u = 0; u < U; ++u) {
      const double mass = pass.row(u).sum();
      if (mass > 0) {
        pass.row(u) /= mass;
      } else if (pass.cols() > 0) {
        pass.row(u).setConstant(1.0 / static_cast<double>(pass.cols()));
      }
    }
    sim.passes.push_back(pass.cast<float>());
  }
  return sim;
}

SimulatedScene simulate_passes(const SyntheticScene& scene, const NoiseModel& noise, int K, std::uint64_t seed) {
  SimulatedScene sim;
  sim.semantic = simulate_semantic_passes(scene, noise, K, seed);
  sim.instance = simulate_instance_passes(scene, noise, K, seed);
  if (scene.num_instances() > 0 && !scene.gt_grounding.empty()) {
    sim.grounding = simulate_grounding_passes(scene, sim.instance, noise, seed);
  }
  return sim;
}

void write_simulation(const std::filesystem::path& dir, const std::string& scene_id, const SyntheticScene& scene,
                      const SimulatedScene& sim) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "synthlab", "cannot create " + dir.string());
  auto name = [](const char* stem, std::size_t k) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%02zu.bplt", stem, k);
    return std::string(buf);
  };

  write_tensor(to_tensor(scene.points.cast<float>()), dir / "points.bplt");
  write_tensor(to_tensor(scene.gt_semantic), dir / "gt_semantic.bplt");
  write_tensor(to_tensor(scene.gt_instances), dir / "gt_instances.bplt");

  SceneManifest sem;
  sem.scene_id = scene_id;
  sem.kind = SceneKind::Semantic;
  sem.num_points = static_cast<std::uint64_t>(scene.num_points());
  sem.num_classes = static_cast<std::uint64_t>(scene.num_classes);
  sem.metadata["seed"] = std::to_string(scene.seed);
  sem.metadata["ground_truth"] = "gt_semantic.bplt";
  for (std::size_t k = 0; k < sim.semantic.size(); ++k) {
    write_tensor(to_tensor(sim.semantic[k]), dir / name("semantic_pass", k));
    sem.pass_paths.emplace_back(name("semantic_pass", k));
  }
  save_manifest(sem, dir / "semantic.json");

  SceneManifest inst;
  inst.scene_id = scene_id;
  inst.kind = SceneKind::Instance;
  inst.num_points = sem.num_points;
  inst.metadata["seed"] = sem.metadata["seed"];
  inst.metadata["ground_truth"] = "gt_instances.bplt";
  write_tensor(to_tensor(sim.instance.seed), dir / "instance_seed.bplt");
  inst.seed_path = "instance_seed.bplt";
  for (std::size_t k = 0; k < sim.instance.passes.size(); ++k) {
    write_tensor(to_tensor(sim.instance.passes[k]), dir / name("instance_pass", k));
    inst.pass_paths.emplace_back(name("instance_pass", k));
  }
  save_manifest(inst, dir / "instance.json");

  if (!sim.grounding.passes.empty()) {
    write_tensor(to_tensor(scene.gt_grounding), dir / "gt_grounding.bplt");
    SceneManifest gr;
    gr.scene_id = scene_id;
    gr.kind = SceneKind::Grounding;
    gr.num_points = static_cast<std::uint64_t>(sim.grounding.seed.rows());
    gr.num_classes = static_cast<std::uint64_t>(sim.grounding.seed.cols());
    gr.metadata["seed"] = sem.metadata["seed"];
    gr.metadata["ground_truth"] = "gt_grounding.bplt";
    gr.metadata["instance_manifest"] = "instance.json";
    write_tensor(to_tensor(sim.grounding.seed), dir / "grounding_seed.bplt");
    gr.seed_path = "grounding_seed.bplt";
    for (std::size_t k = 0; k < sim.grounding.passes.size(); ++k) {
      write_tensor(to_tensor(sim.grounding.passes[k]), dir / name("grounding_pass", k));
      gr.pass_paths.emplace_back(name("grounding_pass", k));
    }
    save_manifest(gr, dir / "grounding.json");
  }
}

}  // namespace bpl::synthlab
