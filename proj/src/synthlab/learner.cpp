#include "bpl/synthlab/learner.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "bpl/semantic.hpp"

namespace bpl::synthlab {

namespace {

constexpr const char* kModule = "synthlab";

MatrixXd softmax_logits(const ToyLearner& learner, const MatrixXd& prototypes, const MatrixXd& X) {
  if (X.cols() != prototypes.cols()) {
    throw Error(ErrorCode::ShapeMismatch, kModule,
                "features have " + std::to_string(X.cols()) + " columns, prototypes " +
                    std::to_string(prototypes.cols()));
  }
  const Eigen::VectorXd xn = X.rowwise().squaredNorm();
  const Eigen::RowVectorXd pn = prototypes.rowwise().squaredNorm().transpose();
  MatrixXd sq = (-2.0 * (X * prototypes.transpose())).colwise() + xn;
  sq.rowwise() += pn;
  MatrixXd logits = (-0.5 * learner.config.beta) * sq;
  for (int c = 0; c < learner.num_classes(); ++c) {
    if (!learner.active[static_cast<std::size_t>(c)]) {
      logits.col(c).setConstant(-std::numeric_limits<double>::infinity());
    }
  }
  return logits;
}

void softmax_rows(MatrixXd& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    const double top = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - top).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace

ToyLearner toy_train(std::span<const LabeledBlock> data, int num_classes, const LearnerConfig& config) {
  if (num_classes < 1) throw Error(ErrorCode::InvalidArgument, kModule, "num_classes must be >= 1");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, kModule, "dropout must lie in [0, 1)");
  }
  Index D = -1;
  Index n = 0;
  for (const auto& block : data) {
    if (!block.features) throw Error(ErrorCode::InvalidArgument, kModule, "null feature block");
    if (static_cast<Index>(block.labels.size()) != block.features->rows()) {
      throw Error(ErrorCode::ShapeMismatch, kModule, "labels and features disagree in length");
    }
    if (D < 0) D = block.features->cols();
    if (block.features->cols() != D) throw Error(ErrorCode::ShapeMismatch, kModule, "feature widths differ");
    for (auto y : block.labels) {
      if (y == kIgnore) continue;
      if (y < 0 || y >= num_classes) {
        throw Error(ErrorCode::InvalidArgument, kModule, "label " + std::to_string(y) + " out of range");
      }
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::InvalidArgument, kModule, "no labeled training points");

  MatrixXd X(n, D);
  std::vector<std::int32_t> y;
  y.reserve(static_cast<std::size_t>(n));
  Index r = 0;
  for (const auto& block : data) {
    for (Index i = 0; i < block.features->rows(); ++i) {
      const auto label = block.labels[static_cast<std::size_t>(i)];
      if (label == kIgnore) continue;
      X.row(r++) = block.features->row(i);
      y.push_back(label);
    }
  }

  ToyLearner learner;
  learner.config = config;
  learner.prototypes = MatrixXd::Zero(num_classes, D);
  learner.active.assign(static_cast<std::size_t>(num_classes), false);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(num_classes);
  for (Index i = 0; i < n; ++i) {
    learner.prototypes.row(y[i]) += X.row(i);
    counts(y[i]) += 1.0;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts(c) > 0) {
      learner.prototypes.row(c) /= counts(c);
      learner.active[static_cast<std::size_t>(c)] = true;
    }
  }

  MatrixXd target = MatrixXd::Zero(n, num_classes);
  for (Index i = 0; i < n; ++i) target(i, y[i]) = 1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    MatrixXd P = softmax_logits(learner, learner.prototypes, X);
    softmax_rows(P);
    const MatrixXd G = target - P;
    // d(-CE)/d mu_c = beta * sum_i G_ic (x_i - mu_c)
    MatrixXd step = G.transpose() * X;
    step -= G.colwise().sum().transpose().asDiagonal() * learner.prototypes;
    learner.prototypes += (config.learning_rate * config.beta / static_cast<double>(n)) * step;
  }
  if (!learner.prototypes.allFinite()) throw Error(ErrorCode::NonFinite, kModule, "prototypes diverged");
  return learner;
}

MatrixXd predict_proba(const ToyLearner& learner, const MatrixXd& prototypes, const MatrixXd& features) {
  MatrixXd P = softmax_logits(learner, prototypes, features);
  softmax_rows(P);
  return P;
}

MatrixXd predict_proba(const ToyLearner& learner, const MatrixXd& features) {
  return predict_proba(learner, learner.prototypes, features);
}

std::vector<std::int32_t> predict(const ToyLearner& learner, const MatrixXd& features) {
  const MatrixXd L = softmax_logits(learner, learner.prototypes, features);
  std::vector<std::int32_t> out(static_cast<std::size_t>(L.rows()));
  for (Index i = 0; i < L.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_row(L.row(i));
  return out;
}

std::vector<MatrixXf> stochastic_infer(const ToyLearner& learner, const SyntheticScene& scene, double extent, int K,
                                       std::uint64_t seed) {
  if (K < 1) throw Error(ErrorCode::InvalidArgument, kModule, "K must be >= 1");
  const double p = learner.config.dropout;
  std::vector<MatrixXf> passes;
  passes.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    auto rng = make_stream(seed, "stochastic-pass", static_cast<std::uint64_t>(k));
    const AffineDraw aug = draw_affine(learner.config.jitter, rng);
    MatrixXd W = learner.prototypes;
    if (p > 0.0) {
      std::bernoulli_distribution keep(1.0 - p);
      for (Index i = 0; i < W.size(); ++i) W.data()[i] = keep(rng) ? W.data()[i] / (1.0 - p) : 0.0;
    }
    passes.push_back(predict_proba(learner, W, point_features(scene, extent, aug)).cast<float>());
  }
  return passes;
}

}  // namespace bpl::synthlab
