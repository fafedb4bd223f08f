#pragma once

// Generators and independent reference computations shared by the test
// binaries. Nothing here calls into the library's numerics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "bpl/common.hpp"

namespace bpl::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("bpl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Rows drawn from a symmetric Dirichlet(alpha) via normalized gamma draws.
inline MatrixXd random_simplex(Index rows, Index cols, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    double s = 0.0;
    for (Index c = 0; c < cols; ++c) s += m(r, c) = g(rng) + 1e-12;
    m.row(r) /= s;
  }
  return m;
}

/// Rows concentrated on a per-row favourite class so that passes often agree.
inline std::vector<MatrixXd> peaked_passes(Index N, Index C, int K, double alpha, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> cls(0, C - 1);
  std::vector<Index> fav(static_cast<std::size_t>(N));
  for (auto& f : fav) f = cls(rng);
  std::vector<MatrixXd> passes;
  for (int k = 0; k < K; ++k) {
    MatrixXd m = random_simplex(N, C, alpha, rng);
    for (Index i = 0; i < N; ++i) {
      m(i, fav[static_cast<std::size_t>(i)]) += 2.0;
      m.row(i) /= m.row(i).sum();
    }
    passes.push_back(m);
  }
  return passes;
}

inline double ref_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

/// First index of the row maximum.
inline Index ref_argmax(const std::vector<double>& row) {
  return static_cast<Index>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// ceil(num * n / den) in integers.
inline std::size_t ref_quota(std::size_t num, std::size_t den, std::size_t n) { return (num * n + den - 1) / den; }

/// Random binary masks with roughly `density` ones.
inline Masks random_masks(Index rows, Index cols, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution b(density);
  Masks m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = b(rng) ? 1 : 0;
  return m;
}

inline double ref_iou(const Masks& a, Index i, const Masks& b, Index j) {
  long inter = 0, uni = 0;
  for (Index n = 0; n < a.cols(); ++n) {
    inter += a(i, n) && b(j, n);
    uni += a(i, n) || b(j, n);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Minimum assignment cost by enumerating permutations of the larger side.
inline double ref_min_assignment(const MatrixXd& cost) {
  const bool t = cost.rows() > cost.cols();
  const MatrixXd c = t ? MatrixXd(cost.transpose()) : cost;
  std::vector<Index> cols(static_cast<std::size_t>(c.cols()));
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = static_cast<Index>(j);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (Index r = 0; r < c.rows(); ++r) s += c(r, cols[static_cast<std::size_t>(r)]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return c.rows() == 0 ? 0.0 : best;
}

}  // namespace bpl::test
