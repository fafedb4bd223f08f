#include "bpl/synthlab/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "bpl/synthlab/metrics.hpp"

namespace bpl::synthlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct SplitScene {
  SyntheticScene scene;
  MatrixXd features;
};

std::vector<SplitScene> make_split(const SceneConfig& cfg, std::uint64_t seed, std::string_view purpose, int count,
                                   int jobs) {
  std::vector<SplitScene> out(static_cast<std::size_t>(count));
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    out[i].scene = generate_scene(cfg, derive_seed(seed, purpose, i));
    out[i].features = point_features(out[i].scene, cfg.extent);
  });
  return out;
}

double accuracy_on(const ToyLearner& learner, std::span<const SplitScene> scenes) {
  Index correct = 0, total = 0;
  for (const auto& s : scenes) {
    const auto pred = predict(learner, s.features);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == s.scene.gt_semantic[i];
    total += static_cast<Index>(pred.size());
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : kNaN;
}

void evaluate_round(const ToyLearner& learner, std::span<const SplitScene> test, int C, RoundMetrics& m) {
  std::vector<std::int32_t> pred, truth;
  for (const auto& s : test) {
    const auto p = predict(learner, s.features);
    pred.insert(pred.end(), p.begin(), p.end());
    truth.insert(truth.end(), s.scene.gt_semantic.begin(), s.scene.gt_semantic.end());
  }
  const auto sm = evaluate_semantic(pred, truth, C);
  m.miou = sm.miou;
  m.accuracy = sm.accuracy;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t a, std::uint64_t b) {
  auto rng = make_stream(seed, purpose, a, b);
  return rng();
}

SelfTrainReport self_train_loop(const SelfTrainConfig& config) {
  if (config.scenes < 1) throw Error(ErrorCode::InvalidArgument, "synthlab", "scenes must be >= 1");
  if (!(config.labeled_fraction > 0.0 && config.labeled_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "synthlab", "labeled fraction must lie in (0, 1]");
  }
  if (config.rounds < 0) throw Error(ErrorCode::InvalidArgument, "synthlab", "rounds must be >= 0");
  if (!(config.p_tau > 0.0 && config.p_tau <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "synthlab", "p_tau must lie in (0, 1]");
  }

  SceneConfig scene_cfg = config.scene;
  scene_cfg.world_seed = derive_seed(config.seed, "world");
  const int C = scene_cfg.num_classes;
  const int n_labeled = std::clamp(static_cast<int>(std::lround(config.labeled_fraction * config.scenes)), 1,
                                   config.scenes);

  const auto train = make_split(scene_cfg, config.seed, "train-scene", config.scenes, config.jobs);
  const auto test = make_split(scene_cfg, config.seed, "test-scene", config.test_scenes, config.jobs);
  const std::span<const SplitScene> labeled(train.data(), static_cast<std::size_t>(n_labeled));
  const std::span<const SplitScene> unlabeled(train.data() + n_labeled, train.size() - n_labeled);

  SelfTrainReport report;
  report.config = config;
  std::vector<LabeledBlock> base;
  for (const auto& s : labeled) {
    base.push_back({&s.features, s.scene.gt_semantic});
    report.labeled_points += s.scene.num_points();
  }
  for (const auto& s : unlabeled) report.unlabeled_points += s.scene.num_points();

  ToyLearner learner = toy_train(base, C, config.learner);
  RoundMetrics r0;
  evaluate_round(learner, test, C, r0);
  r0.unlabeled_accuracy = accuracy_on(learner, unlabeled);
  r0.source_accuracy = kNaN;
  r0.pseudo_label_accuracy = kNaN;
  report.rounds.push_back(r0);
  spdlog::debug("round 0: mIoU {:.4f}", r0.miou);

  for (int round = 1; round <= config.rounds; ++round) {
    std::vector<std::vector<std::int32_t>> pseudo(unlabeled.size());
    parallel_for(unlabeled.size(), config.jobs, [&](std::size_t s) {
      const auto passes = stochastic_infer(learner, unlabeled[s].scene, scene_cfg.extent, config.K,
                                           derive_seed(config.seed, "infer", static_cast<std::uint64_t>(round), s));
      const auto est = mc_aggregate<float>(passes, config.vote_threshold);
      try {
        pseudo[s] = solve_pseudo_labels(est, config.p_tau, config.mode).labels;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyConsensus) throw;
        pseudo[s].assign(static_cast<std::size_t>(unlabeled[s].scene.num_points()), kIgnore);
      }
    });

    RoundMetrics m;
    m.round = round;
    m.source_accuracy = accuracy_on(learner, unlabeled);
    Index correct = 0;
    std::vector<LabeledBlock> blocks = base;
    for (std::size_t s = 0; s < unlabeled.size(); ++s) {
      for (std::size_t i = 0; i < pseudo[s].size(); ++i) {
        if (pseudo[s][i] == kIgnore) continue;
        ++m.pseudo_labeled;
        correct += pseudo[s][i] == unlabeled[s].scene.gt_semantic[i];
      }
      blocks.push_back({&unlabeled[s].features, pseudo[s]});
    }
    m.pseudo_label_accuracy =
        m.pseudo_labeled > 0 ? static_cast<double>(correct) / static_cast<double>(m.pseudo_labeled) : kNaN;
    m.labeled_fraction = report.unlabeled_points > 0 ? static_cast<double>(m.pseudo_labeled) /
                                                           static_cast<double>(report.unlabeled_points)
                                                     : 0.0;
    learner = toy_train(blocks, C, config.learner);
    evaluate_round(learner, test, C, m);
    m.unlabeled_accuracy = accuracy_on(learner, unlabeled);
    report.rounds.push_back(m);
    spdlog::debug("round {}: mIoU {:.4f}, pseudo-label accuracy {:.4f}", round, m.miou, m.pseudo_label_accuracy);
  }
  return report;
}

}  // namespace bpl::synthlab
