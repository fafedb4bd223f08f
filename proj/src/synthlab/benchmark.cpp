#include "bpl/synthlab/benchmark.hpp"

#include "bpl/semantic.hpp"
#include "bpl/synthlab/selftrain.hpp"

namespace bpl::synthlab {

namespace {

void score(const std::vector<std::int32_t>& labels, const SyntheticScene& scene, SelectionScore& out) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnore) continue;
    ++out.labeled;
    out.correct += labels[i] == scene.gt_semantic[i];
  }
}

void merge(SelectionScore& into, const SelectionScore& from) {
  into.labeled += from.labeled;
  into.correct += from.correct;
}

}  // namespace

SemanticBenchmarkResult run_semantic_benchmark(const SemanticBenchmarkConfig& config) {
  if (config.scenes < 1) throw Error(ErrorCode::InvalidArgument, "synthlab", "scenes must be >= 1");
  SceneConfig scene_cfg = config.scene;
  scene_cfg.world_seed = derive_seed(config.seed, "world");
  const std::size_t T = config.vote_thresholds.size();
  std::vector<SemanticBenchmarkResult> per_scene(static_cast<std::size_t>(config.scenes));

  parallel_for(per_scene.size(), config.jobs, [&](std::size_t s) {
    auto& r = per_scene[s];
    const auto scene = generate_scene(scene_cfg, derive_seed(config.seed, "bench-scene", s));
    const auto passes = simulate_semantic_passes(scene, config.noise, config.K,
                                                 derive_seed(config.seed, "bench-passes", s));
    const auto est = mc_aggregate<float>(passes);
    r.points = scene.num_points();
    score(solve_pseudo_labels(est, config.p_tau).labels, scene, r.entropy);
    score(naive_threshold_baseline(est, config.p_tau).labels, scene, r.naive);
    score(class_balanced_baseline(est, config.p_tau).labels, scene, r.class_balanced);
    score(solve_pseudo_labels(est, 1.0).labels, scene, r.unanimous);
    r.by_vote_threshold.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const auto relaxed = mc_aggregate<float>(passes, config.vote_thresholds[t]);
      score(solve_pseudo_labels(relaxed, config.p_tau).labels, scene, r.by_vote_threshold[t]);
    }
  });

  SemanticBenchmarkResult total;
  total.by_vote_threshold.resize(T);
  for (const auto& r : per_scene) {
    total.points += r.points;
    merge(total.entropy, r.entropy);
    merge(total.naive, r.naive);
    merge(total.class_balanced, r.class_balanced);
    merge(total.unanimous, r.unanimous);
    for (std::size_t t = 0; t < T; ++t) merge(total.by_vote_threshold[t], r.by_vote_threshold[t]);
  }
  return total;
}

}  // namespace bpl::synthlab
