#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace bpl {

using Index = Eigen::Index;

// Row-major storage matches the on-disk tensor layout, so buffers map 1:1.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using MatrixXf = Mat<float>;
/// Binary instance masks, one row per instance, one column per point.
using Masks = Mat<std::uint8_t>;

/// Label value for points/utterances that receive no pseudo-label.
inline constexpr std::int32_t kIgnore = -1;
/// Vote value for points whose passes do not agree.
inline constexpr std::int32_t kNoConsensus = -1;

enum class ErrorCode {
  BadMagic,
  UnsupportedVersion,
  TruncatedPayload,
  UnknownDtype,
  RankOutOfRange,
  Io,
  MissingField,
  ShapeMismatch,
  SimplexViolation,
  InvalidArgument,
  EmptyConsensus,
  NonFinite,
  BoundExceeded,
  NonInjective,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `module()` names the owning module so
/// the CLI can print module-qualified diagnostics.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work is handed out by
/// index, so any result written to slot i is independent of the schedule.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Seeds an independent generator for a named purpose. Streams differ by
/// purpose and by each of the indices, so reordering work never changes draws.
std::mt19937_64 make_stream(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
                            std::uint64_t b = 0);

/// Order-independent sum: values are sorted ascending and accumulated left to
/// right. Used wherever a reduction must not depend on the order of passes.
double canonical_sum(std::span<double> values);

/// Natural-log entropy term with 0 ln 0 := 0.
inline double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

/// Shannon entropy (nats) of a probability row.
template <typename Derived>
double shannon_entropy(const Eigen::MatrixBase<Derived>& probs) {
  double h = 0.0;
  for (Index i = 0; i < probs.size(); ++i) h -= xlogx(static_cast<double>(probs(i)));
  return h;
}

/// Entropy (nats) of a Bernoulli(p); peaks at ln 2 for p = 0.5.
inline double binary_entropy(double p) { return -(xlogx(p) + xlogx(1.0 - p)); }

}  // namespace bpl
