#include "bpl/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "bpl/assignment.hpp"
#include "bpl/grounding.hpp"
#include "bpl/instance.hpp"
#include "bpl/semantic.hpp"
#include "bpl/synthlab.hpp"
#include "bpl/tensorio.hpp"

namespace bpl::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

/// Splices flags from a flat JSON config (`--config file`) into the argument
/// list. Keys are long flag names ("p-tau" or "p_tau"); flags given on the
/// command line win, `true` stands for a bare flag.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  const auto it = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return a == "--config" || a.rfind("--config=", 0) == 0;
  });
  if (it == args.end()) return args;
  const auto pos = it - args.begin();
  std::string path;
  if (*it == "--config") {
    if (it + 1 == args.end()) throw Error(ErrorCode::InvalidArgument, "cli", "--config needs a file name");
    path = *(it + 1);
    args.erase(it, it + 2);
  } else {
    path = it->substr(9);
    args.erase(it);
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cli", "cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "cli", path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "cli", path + ": config must be a JSON object");

  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  std::vector<std::string> extra;
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (given(flag) || value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        extra.push_back(flag);
        extra.push_back(text(v));
      }
    } else {
      extra.push_back(flag);
      extra.push_back(text(value));
    }
  }
  args.insert(args.begin() + pos, extra.begin(), extra.end());
  return args;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json threshold_json(const Threshold& t) {
  json j;
  j["mode"] = to_string(t.mode);
  if (t.mode == ThresholdMode::Global) {
    j["tau"] = number_or_null(t.global);
  } else {
    json per = json::array();
    for (double v : t.per_class) per.push_back(number_or_null(v));
    j["tau_per_class"] = per;
  }
  return j;
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

fs::path sidecar_of(const fs::path& out) { return fs::path(out.string() + ".json"); }

void require_kind(const SceneManifest& m, SceneKind kind) {
  if (m.kind != kind) {
    throw Error(ErrorCode::InvalidArgument, "cli",
                "manifest '" + m.scene_id + "' is " + to_string(m.kind) + ", expected " + to_string(kind));
  }
}

void check_p_tau(double p_tau) {
  if (!(p_tau > 0.0 && p_tau <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "cli", "--p-tau must lie in (0, 1]");
  }
}

ThresholdMode parse_mode(const std::string& s) { return threshold_mode_from_string(s); }

// ---- pl-semantic ----------------------------------------------------------

struct SemanticArgs {
  std::string manifest;
  std::string out;
  double p_tau = 0.75;
  std::string mode = "global";
  std::string selector = "entropy";
  int vote_threshold = 0;
};

void run_pl_semantic(const SemanticArgs& a) {
  check_p_tau(a.p_tau);
  const auto m = load_manifest(a.manifest);
  require_kind(m, SceneKind::Semantic);
  std::vector<MatrixXf> passes;
  for (const auto& t : m.passes) passes.push_back(t.matrix<float>());
  const auto est = mc_aggregate<float>(passes, a.vote_threshold);
  const auto labels = select_pseudo_labels(est, a.p_tau, parse_mode(a.mode), selector_from_string(a.selector));

  json side;
  side["scene_id"] = m.scene_id;
  side["p_tau"] = a.p_tau;
  side.update(threshold_json(labels.threshold));
  side["selector"] = to_string(labels.selector);
  side["K"] = m.num_passes();
  side["vote_threshold"] = est.vote_threshold;
  side["num_points"] = est.num_points();
  side["consensus_count"] = labels.consensus_count;
  side["labeled_count"] = labels.labeled_count;
  write_tensor(to_tensor(labels.labels), a.out);
  write_json(sidecar_of(a.out), side);
  spdlog::info("{}: labeled {} of {} consensus points", m.scene_id, labels.labeled_count, labels.consensus_count);
}

// ---- pl-instance ----------------------------------------------------------

struct InstanceArgs {
  std::string manifest;
  std::string out;
  InstanceOptions options;
};

void run_pl_instance(const InstanceArgs& a) {
  check_p_tau(a.options.p_tau);
  const auto m = load_manifest(a.manifest);
  require_kind(m, SceneKind::Instance);
  const MatrixXd seed = m.seed->to_double_matrix();
  std::vector<Eigen::MatrixXd> passes;
  for (const auto& t : m.passes) passes.push_back(t.to_double_matrix());
  const auto result = generate_instance_pseudo_labels(seed, passes, a.options);

  json side;
  side["scene_id"] = m.scene_id;
  side["p_tau"] = a.options.p_tau;
  side["tau"] = number_or_null(result.tau);
  side["min_iou"] = a.options.min_iou;
  side["mask_threshold"] = a.options.mask_threshold;
  side["K"] = m.num_passes();
  side["num_points"] = m.num_points;
  side["kept_instances"] = result.kept_instances;
  side["point_counts"] = result.point_counts();
  json matching = json::array();
  for (const auto& pm : result.matches) {
    json iou = json::array();
    for (double v : pm.iou) iou.push_back(v);
    json entry;
    entry["seed_of"] = pm.seed_of;
    entry["iou"] = iou;
    matching.push_back(entry);
  }
  side["matching"] = matching;
  Masks masks = result.masks;
  if (masks.rows() == 0) masks.resize(0, static_cast<Index>(m.num_points));
  write_tensor(to_tensor(masks), a.out);
  write_json(sidecar_of(a.out), side);
  spdlog::info("{}: kept {} of {} seed instances", m.scene_id, result.kept_instances.size(), seed.rows());
}

// ---- pl-grounding ---------------------------------------------------------

struct GroundingArgs {
  std::string manifest;
  std::string matching;
  std::string out;
  double p_tau = 0.75;
  std::string mode = "global";
  int vote_threshold = 0;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cli", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "cli", path.string() + ": " + e.what());
  }
}

void run_pl_grounding(const GroundingArgs& a) {
  check_p_tau(a.p_tau);
  const auto m = load_manifest(a.manifest);
  require_kind(m, SceneKind::Grounding);
  const json match = read_json_file(a.matching);
  if (!match.contains("matching") || !match["matching"].is_array()) {
    throw Error(ErrorCode::MissingField, "cli", a.matching + ": missing 'matching' array");
  }
  const auto& per_pass = match["matching"];
  if (per_pass.size() != m.num_passes()) {
    throw Error(ErrorCode::ShapeMismatch, "cli",
                "matching covers " + std::to_string(per_pass.size()) + " passes, manifest has " +
                    std::to_string(m.num_passes()));
  }
  const MatrixXd seed = m.seed->to_double_matrix();
  std::vector<ReorderedScores> passes;
  std::size_t unaligned = 0;
  for (std::size_t k = 0; k < m.num_passes(); ++k) {
    std::vector<std::int32_t> alignment;
    try {
      alignment = per_pass[k].at("seed_of").get<std::vector<std::int32_t>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "cli", "matching for pass " + std::to_string(k) + ": " + e.what());
    }
    passes.push_back(reorder_scores(m.passes[k].to_double_matrix(), alignment, seed.cols()));
    for (bool b : passes.back().no_alignment) unaligned += b;
  }
  const auto result = solve_grounding(seed, passes, a.p_tau, parse_mode(a.mode), a.vote_threshold);

  json side;
  side["scene_id"] = m.scene_id;
  side["p_tau"] = a.p_tau;
  side.update(threshold_json(result.threshold));
  side["K"] = m.num_passes();
  side["vote_threshold"] = a.vote_threshold == 0 ? static_cast<int>(m.num_passes()) : a.vote_threshold;
  side["num_utterances"] = seed.rows();
  side["consensus_count"] = result.consensus_count;
  side["labeled_count"] = result.labeled_count;
  side["unaligned_rows"] = unaligned;
  write_tensor(to_tensor(result.selected), a.out);
  write_json(sidecar_of(a.out), side);
}

// ---- match ----------------------------------------------------------------

struct MatchArgs {
  std::string first;
  std::string second;
  double min_iou = 0.0;
};

void run_match(const MatchArgs& a) {
  const Masks A = read_tensor(a.first).matrix<std::uint8_t>();
  const Masks B = read_tensor(a.second).matrix<std::uint8_t>();
  if (A.rows() > 0 && B.rows() > 0 && A.cols() != B.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "cli",
                "mask sets cover " + std::to_string(A.cols()) + " and " + std::to_string(B.cols()) + " points");
  }
  const MatrixXd iou = iou_matrix(A, B);
  json pairs = json::array();
  double total = 0.0;
  if (iou.size() > 0) {
    for (const auto& [i, j] : lsa(-iou).pairs) {
      if (iou(i, j) < a.min_iou) continue;
      pairs.push_back({{"first", i}, {"second", j}, {"iou", iou(i, j)}});
      total += iou(i, j);
    }
  }
  json out;
  out["pairs"] = pairs;
  out["total_iou"] = total;
  out["min_iou"] = a.min_iou;
  std::cout << out.dump(2) << "\n";
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string out;
  int scenes = 1;
  std::uint64_t seed = 42;
  int K = 9;
  int jobs = 1;
  bool noiseless = false;
  synthlab::SceneConfig scene;
  synthlab::NoiseModel noise;
};

void run_simulate(SimulateArgs a) {
  if (a.scenes < 1) throw Error(ErrorCode::InvalidArgument, "cli", "--scenes must be >= 1");
  if (a.noiseless) a.noise = synthlab::NoiseModel::noiseless();
  if (!(a.noise.flip_prob >= 0.0 && a.noise.flip_prob < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "cli", "--flip-prob must lie in [0, 1)");
  }
  if (!(a.noise.dirichlet_sharpness > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "cli", "--sharpness must be > 0");
  }
  a.scene.world_seed = synthlab::derive_seed(a.seed, "world");
  const fs::path root(a.out);
  std::vector<std::string> ids(static_cast<std::size_t>(a.scenes));
  parallel_for(ids.size(), a.jobs, [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04zu", i);
    ids[i] = name;
    const auto scene = synthlab::generate_scene(a.scene, synthlab::derive_seed(a.seed, "scene", i));
    const auto sim = synthlab::simulate_passes(scene, a.noise, a.K, synthlab::derive_seed(a.seed, "passes", i));
    synthlab::write_simulation(root / name, name, scene, sim);
  });
  json index;
  index["seed"] = a.seed;
  index["K"] = a.K;
  index["scenes"] = ids;
  write_json(root / "scenes.json", index);
  spdlog::info("wrote {} scenes to {}", a.scenes, root.string());
}

// ---- selftrain ------------------------------------------------------------

struct SelfTrainArgs {
  synthlab::SelfTrainConfig config;
  std::string mode = "global";
  std::string report;
};

void run_selftrain(SelfTrainArgs a) {
  check_p_tau(a.config.p_tau);
  a.config.mode = parse_mode(a.mode);
  const auto r = synthlab::self_train_loop(a.config);
  json cfg;
  cfg["scenes"] = r.config.scenes;
  cfg["labeled"] = r.config.labeled_fraction;
  cfg["rounds"] = r.config.rounds;
  cfg["K"] = r.config.K;
  cfg["p_tau"] = r.config.p_tau;
  cfg["mode"] = to_string(r.config.mode);
  cfg["vote_threshold"] = r.config.vote_threshold == 0 ? r.config.K : r.config.vote_threshold;
  cfg["seed"] = r.config.seed;
  cfg["test_scenes"] = r.config.test_scenes;
  cfg["points"] = r.config.scene.num_points;
  cfg["dropout"] = r.config.learner.dropout;
  json rounds = json::array();
  for (const auto& m : r.rounds) {
    rounds.push_back({{"round", m.round},
                      {"miou", number_or_null(m.miou)},
                      {"accuracy", number_or_null(m.accuracy)},
                      {"unlabeled_accuracy", number_or_null(m.unlabeled_accuracy)},
                      {"source_accuracy", number_or_null(m.source_accuracy)},
                      {"pseudo_label_accuracy", number_or_null(m.pseudo_label_accuracy)},
                      {"labeled_fraction", m.labeled_fraction},
                      {"pseudo_labeled", m.pseudo_labeled}});
  }
  json out;
  out["config"] = cfg;
  out["labeled_points"] = r.labeled_points;
  out["unlabeled_points"] = r.unlabeled_points;
  out["rounds"] = rounds;
  write_json(a.report, out);
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string task = "semantic";
  std::string pred;
  std::string truth;
  int classes = 0;
  std::string out;
};

void run_eval(const EvalArgs& a) {
  const Tensor pred = read_tensor(a.pred);
  const Tensor truth = read_tensor(a.truth);
  json out;
  out["task"] = a.task;
  if (a.task == "semantic") {
    const auto& p = pred.values<std::int32_t>();
    const auto& t = truth.values<std::int32_t>();
    int C = a.classes;
    if (C <= 0) {
      for (auto v : t) C = std::max(C, v + 1);
      for (auto v : p) C = std::max(C, v + 1);
    }
    const auto m = synthlab::evaluate_semantic(p, t, C);
    json per = json::array();
    for (double v : m.per_class_iou) per.push_back(number_or_null(v));
    out["per_class_iou"] = per;
    out["miou"] = number_or_null(m.miou);
    out["accuracy"] = number_or_null(m.accuracy);
    out["labeled"] = m.labeled;
  } else if (a.task == "instance") {
    const auto m = synthlab::evaluate_instance(pred.matrix<std::uint8_t>(), truth.matrix<std::uint8_t>());
    out["accuracy"] = number_or_null(m.accuracy);
    out["correct"] = m.correct;
    out["total"] = m.total;
    out["ap50"] = number_or_null(m.ap50);
  } else if (a.task == "grounding") {
    const auto m = synthlab::evaluate_grounding(pred.values<std::int32_t>(), truth.values<std::int32_t>());
    out["accuracy"] = number_or_null(m.accuracy);
    out["labeled"] = m.labeled;
  } else {
    throw Error(ErrorCode::InvalidArgument, "cli", "unknown task '" + a.task + "'");
  }
  if (a.out.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    write_json(a.out, out);
  }
}

void configure_logging() {
  auto logger = spdlog::stderr_logger_mt("bayespl");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("BAYESPL_LOG")) {
    const std::string level(env);
    if (level == "error" || level == "warn" || level == "info" || level == "debug") {
      spdlog::set_level(spdlog::level::from_str(level));
    } else {
      spdlog::warn("ignoring BAYESPL_LOG={}; expected error, warn, info or debug", level);
    }
  }
}

CLI::App* subcommand(CLI::App& app, const std::string& name, const std::string& help) {
  CLI::App* sub = app.add_subcommand(name, help);
  // Consumed by expand_config before parsing; registered for --help.
  sub->add_option("--config")->type_name("FILE")->description("JSON file with flag values (keys are long flag names)");
  return sub;
}

}  // namespace

int run(int argc, char** argv) {
  if (!spdlog::get("bayespl")) configure_logging();

  CLI::App app{"Bayesian pseudo-labels for semi-supervised 3D segmentation", "bayespl"};
  app.require_subcommand(1);

  SemanticArgs sem;
  auto* s = subcommand(app, "pl-semantic", "Semantic pseudo-labels from K stochastic passes");
  s->add_option("--manifest", sem.manifest, "Semantic manifest")->required();
  s->add_option("--out", sem.out, "Output label tensor (I32 [N], -1 = ignore)")->required();
  s->add_option("--p-tau", sem.p_tau, "Fraction of consensus points to label")->capture_default_str();
  s->add_option("--mode", sem.mode, "global or per-class")->capture_default_str();
  s->add_option("--selector", sem.selector, "entropy, naive or class-balanced")->capture_default_str();
  s->add_option("--vote-threshold", sem.vote_threshold, "Passes that must agree (0 = all K)")->capture_default_str();

  InstanceArgs inst;
  auto* i = subcommand(app, "pl-instance", "Instance pseudo-masks from a seed and K passes");
  i->add_option("--manifest", inst.manifest, "Instance manifest")->required();
  i->add_option("--out", inst.out, "Output mask tensor (U8 [M, N])")->required();
  i->add_option("--p-tau", inst.options.p_tau, "Fraction of unanimous entries to keep")->capture_default_str();
  i->add_option("--min-iou", inst.options.min_iou, "Minimum IoU for a pass-to-seed match")->capture_default_str();
  i->add_option("--mask-threshold", inst.options.mask_threshold, "Soft score binarization threshold")
      ->capture_default_str();

  GroundingArgs gr;
  auto* g = subcommand(app, "pl-grounding", "Grounding pseudo-labels");
  g->add_option("--manifest", gr.manifest, "Grounding manifest")->required();
  g->add_option("--matching", gr.matching, "Sidecar JSON written by pl-instance")->required();
  g->add_option("--out", gr.out, "Output tensor (I32 [U], -1 = ignore)")->required();
  g->add_option("--p-tau", gr.p_tau, "Fraction of consensus utterances to label")->capture_default_str();
  g->add_option("--mode", gr.mode, "global or per-class")->capture_default_str();
  g->add_option("--vote-threshold", gr.vote_threshold, "Passes that must agree (0 = all K)")->capture_default_str();

  MatchArgs mt;
  auto* m = subcommand(app, "match", "Optimal IoU matching between two mask tensors, printed as JSON");
  m->add_option("first", mt.first, "U8 masks [M, N]")->required();
  m->add_option("second", mt.second, "U8 masks [M', N]")->required();
  m->add_option("--min-iou", mt.min_iou, "Drop pairs below this IoU")->capture_default_str();

  SimulateArgs sim;
  auto* sm = subcommand(app, "simulate", "Write synthetic scenes with stochastic passes and manifests");
  sm->add_option("--out", sim.out, "Output directory")->required();
  sm->add_option("--scenes", sim.scenes)->capture_default_str();
  sm->add_option("--seed", sim.seed)->capture_default_str();
  sm->add_option("-K,--passes", sim.K, "Stochastic passes per scene")->capture_default_str();
  sm->add_option("--jobs", sim.jobs, "Scenes processed in parallel")->capture_default_str();
  sm->add_option("--points", sim.scene.num_points)->capture_default_str();
  sm->add_option("--classes", sim.scene.num_classes)->capture_default_str();
  sm->add_option("--instances", sim.scene.num_instances)->capture_default_str();
  sm->add_option("--utterances", sim.scene.num_utterances)->capture_default_str();
  sm->add_option("--flip-prob", sim.noise.flip_prob, "Per-pass label corruption probability")
      ->capture_default_str();
  sm->add_option("--sharpness", sim.noise.dirichlet_sharpness, "Dirichlet concentration")->capture_default_str();
  sm->add_flag("--noiseless", sim.noiseless, "Passes reproduce ground truth");

  SelfTrainArgs st;
  auto* t = subcommand(app, "selftrain", "Run the synthetic self-training loop");
  t->add_option("--report", st.report, "Metrics JSON")->required();
  t->add_option("--scenes", st.config.scenes)->capture_default_str();
  t->add_option("--labeled", st.config.labeled_fraction, "Fraction of labeled scenes")->capture_default_str();
  t->add_option("--rounds", st.config.rounds)->capture_default_str();
  t->add_option("-K,--passes", st.config.K)->capture_default_str();
  t->add_option("--p-tau", st.config.p_tau)->capture_default_str();
  t->add_option("--mode", st.mode)->capture_default_str();
  t->add_option("--vote-threshold", st.config.vote_threshold)->capture_default_str();
  t->add_option("--seed", st.config.seed)->capture_default_str();
  t->add_option("--test-scenes", st.config.test_scenes)->capture_default_str();
  t->add_option("--points", st.config.scene.num_points)->capture_default_str();
  t->add_option("--dropout", st.config.learner.dropout)->capture_default_str();
  t->add_option("--jobs", st.config.jobs)->capture_default_str();

  EvalArgs ev;
  auto* e = subcommand(app, "eval", "Score predictions against ground truth");
  e->add_option("--task", ev.task, "semantic, instance or grounding")->capture_default_str();
  e->add_option("--pred", ev.pred, "Prediction tensor")->required();
  e->add_option("--truth", ev.truth, "Ground-truth tensor")->required();
  e->add_option("--classes", ev.classes, "Class count (semantic; 0 = infer)")->capture_default_str();
  e->add_option("--out", ev.out, "Metrics JSON (default: standard output)");

  std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const Error& err) {
    spdlog::error("{}", err.what());
    return err.code() == ErrorCode::Io ? 2 : 1;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) run_pl_semantic(sem);
    else if (*i) run_pl_instance(inst);
    else if (*g) run_pl_grounding(gr);
    else if (*m) run_match(mt);
    else if (*sm) run_simulate(sim);
    else if (*t) run_selftrain(st);
    else if (*e) run_eval(ev);
  } catch (const Error& err) {
    spdlog::error("{}", err.what());
    return err.code() == ErrorCode::Io ? 2 : 1;
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return 1;
  }
  return 0;
}

}  // namespace bpl::cli
