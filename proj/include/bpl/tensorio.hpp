#pragma once

// BPLT binary tensor container and JSON scene manifests.
//
// Layout (all integers little-endian):
//   "BPLT" | version u8 (0x01) | dtype u8 | rank u8 | rank x u64 extents | payload
// dtype codes: F32 = 0x01, U8 = 0x02, I32 = 0x03. Payload is row-major.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bpl/common.hpp"

namespace bpl {

enum class DType : std::uint8_t { F32 = 0x01, U8 = 0x02, I32 = 0x03 };

std::size_t element_size(DType dtype);

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::U8; }
template <>
constexpr DType dtype_of<std::int32_t>() { return DType::I32; }

class Tensor {
 public:
  using Shape = std::vector<std::uint64_t>;
  using Storage =
      std::variant<std::vector<float>, std::vector<std::uint8_t>, std::vector<std::int32_t>>;

  Tensor() = default;

  template <typename T>
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate();
  }

  DType dtype() const { return static_cast<DType>(data_.index() + 1); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const;

  template <typename T>
  std::span<const T> values() const {
    if (dtype() != dtype_of<T>()) throw Error(ErrorCode::InvalidArgument, "tensorio", "dtype mismatch");
    return std::get<std::vector<T>>(data_);
  }

  /// Rank-2 view copied into an Eigen matrix of the stored scalar type.
  template <typename T>
  Mat<T> matrix() const {
    require_rank(2);
    auto v = values<T>();
    return Eigen::Map<const Mat<T>>(v.data(), static_cast<Index>(shape_[0]),
                                    static_cast<Index>(shape_[1]));
  }

  /// Rank-2 F32 tensor widened to double.
  MatrixXd to_double_matrix() const { return matrix<float>().cast<double>(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void validate() const;
  void require_rank(std::size_t r) const;

  Shape shape_;
  Storage data_;
};

template <typename Derived>
Tensor to_tensor(const Eigen::MatrixBase<Derived>& m) {
  using T = typename Derived::Scalar;
  Mat<T> rm = m;
  std::vector<T> data(rm.data(), rm.data() + rm.size());
  return Tensor({static_cast<std::uint64_t>(rm.rows()), static_cast<std::uint64_t>(rm.cols())},
                std::move(data));
}

template <typename T>
Tensor to_tensor(const std::vector<T>& v) {
  return Tensor({static_cast<std::uint64_t>(v.size())}, v);
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// `name` only labels error messages.
Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& name = "<buffer>");

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

enum class SceneKind { Semantic, Instance, Grounding };

std::string to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& s);

struct SceneManifest {
  std::string scene_id;
  SceneKind kind = SceneKind::Semantic;
  std::optional<std::filesystem::path> seed_path;
  std::vector<std::filesystem::path> pass_paths;
  std::uint64_t num_points = 0;   // N (points), or U (utterances) for grounding
  std::uint64_t num_classes = 0;  // C for semantic, seed candidate count M for grounding
  std::map<std::string, std::string> metadata;

  // Populated by load_manifest.
  std::optional<Tensor> seed;
  std::vector<Tensor> passes;

  std::size_t num_passes() const { return pass_paths.size(); }
};

/// Parses the manifest, loads every referenced tensor (paths are relative to
/// the manifest's directory) and checks the kind's shape/simplex invariants.
SceneManifest load_manifest(const std::filesystem::path& path);

/// Writes only the JSON; tensor paths are stored as given.
void save_manifest(const SceneManifest& manifest, const std::filesystem::path& path);

inline constexpr double kSimplexTolerance = 1e-5;

}  // namespace bpl
