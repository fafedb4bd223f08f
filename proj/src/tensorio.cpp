#include "bpl/tensorio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include "json.hpp"

namespace bpl {

namespace {

constexpr std::array<char, 4> kMagic{'B', 'P', 'L', 'T'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::size_t kHeaderFixed = 7;
constexpr const char* kModule = "tensorio";

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::array<std::uint8_t, sizeof(T)> raw;
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.insert(out.end(), raw.begin(), raw.end());
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::array<std::uint8_t, sizeof(T)> raw;
  std::memcpy(raw.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

std::string shape_string(const Tensor::Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

}  // namespace

std::size_t element_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::U8: return 1;
    case DType::I32: return 4;
  }
  throw Error(ErrorCode::UnknownDtype, kModule, "dtype code " + std::to_string(int(dtype)));
}

std::size_t Tensor::size() const {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

void Tensor::validate() const {
  if (shape_.empty() || shape_.size() > 4) {
    throw Error(ErrorCode::RankOutOfRange, kModule,
                "rank " + std::to_string(shape_.size()) + " outside [1, 4]");
  }
  const auto count = std::accumulate(shape_.begin(), shape_.end(), std::uint64_t{1},
                                     std::multiplies<>());
  if (count != size()) {
    throw Error(ErrorCode::ShapeMismatch, kModule,
                "shape " + shape_string(shape_) + " holds " + std::to_string(count) +
                    " elements but buffer has " + std::to_string(size()));
  }
}

void Tensor::require_rank(std::size_t r) const {
  if (rank() != r) {
    throw Error(ErrorCode::ShapeMismatch, kModule,
                "expected rank " + std::to_string(r) + ", got shape " + shape_string(shape_));
  }
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderFixed + 8 * t.rank() + element_size(t.dtype()) * t.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto extent : t.shape()) put_le<std::uint64_t>(out, extent);
  switch (t.dtype()) {
    case DType::F32:
      for (float v : t.values<float>()) put_le(out, v);
      break;
    case DType::U8: {
      auto v = t.values<std::uint8_t>();
      out.insert(out.end(), v.begin(), v.end());
      break;
    }
    case DType::I32:
      for (std::int32_t v : t.values<std::int32_t>()) put_le(out, v);
      break;
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() < kHeaderFixed || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, kModule, name + ": magic is not \"BPLT\"");
  }
  if (bytes[4] != kVersion) {
    throw Error(ErrorCode::UnsupportedVersion, kModule,
                name + ": version byte " + std::to_string(bytes[4]));
  }
  const std::uint8_t code = bytes[5];
  if (code < 0x01 || code > 0x03) {
    throw Error(ErrorCode::UnknownDtype, kModule, name + ": dtype code " + std::to_string(code));
  }
  const auto dtype = static_cast<DType>(code);
  const std::size_t rank = bytes[6];
  if (rank < 1 || rank > 4) {
    throw Error(ErrorCode::RankOutOfRange, kModule, name + ": rank byte " + std::to_string(rank));
  }
  if (bytes.size() < kHeaderFixed + 8 * rank) {
    throw Error(ErrorCode::TruncatedPayload, kModule, name + ": header extents truncated");
  }
  Tensor::Shape shape(rank);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_le<std::uint64_t>(bytes.data() + kHeaderFixed + 8 * i);
    count *= shape[i];
  }
  const std::size_t offset = kHeaderFixed + 8 * rank;
  const std::uint64_t expected = count * element_size(dtype);
  const std::uint64_t actual = bytes.size() - offset;
  if (actual < expected) {
    throw Error(ErrorCode::TruncatedPayload, kModule,
                name + ": payload has " + std::to_string(actual) + " bytes, shape " +
                    shape_string(shape) + " needs " + std::to_string(expected));
  }
  if (actual > expected) {
    throw Error(ErrorCode::TruncatedPayload, kModule,
                name + ": " + std::to_string(actual - expected) + " trailing bytes after payload");
  }
  const std::uint8_t* p = bytes.data() + offset;
  switch (dtype) {
    case DType::F32: {
      std::vector<float> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = get_le<float>(p + 4 * i);
      return Tensor(std::move(shape), std::move(v));
    }
    case DType::U8:
      return Tensor(std::move(shape), std::vector<std::uint8_t>(p, p + count));
    case DType::I32: {
      std::vector<std::int32_t> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = get_le<std::int32_t>(p + 4 * i);
      return Tensor(std::move(shape), std::move(v));
    }
  }
  throw Error(ErrorCode::UnknownDtype, kModule, name);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, kModule, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, kModule, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, kModule, "cannot rename onto " + path.string());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file_atomic(path, encode_tensor(t));
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, kModule, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes, path.string());
}

std::string to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::Semantic: return "semantic";
    case SceneKind::Instance: return "instance";
    case SceneKind::Grounding: return "grounding";
  }
  return "semantic";
}

SceneKind scene_kind_from_string(const std::string& s) {
  if (s == "semantic") return SceneKind::Semantic;
  if (s == "instance") return SceneKind::Instance;
  if (s == "grounding") return SceneKind::Grounding;
  throw Error(ErrorCode::InvalidArgument, kModule, "unknown scene kind \"" + s + "\"");
}

namespace {

using nlohmann::json;

const json& require(const json& j, const char* field, const std::filesystem::path& path) {
  if (!j.contains(field)) {
    throw Error(ErrorCode::MissingField, kModule, path.string() + ": missing field \"" + field + "\"");
  }
  return j.at(field);
}

void expect_shape(const Tensor& t, const Tensor::Shape& expected, const std::filesystem::path& p) {
  if (t.shape() != expected) {
    throw Error(ErrorCode::ShapeMismatch, kModule,
                p.string() + ": expected " + shape_string(expected) + ", got " + shape_string(t.shape()));
  }
}

void expect_rows(const Tensor& t, std::uint64_t rows, std::uint64_t cols_or_zero, bool cols_are_rows,
                 const std::filesystem::path& p) {
  // cols_are_rows: the fixed extent is the column count (instance [M_k, N]).
  const bool ok = t.rank() == 2 &&
                  (cols_are_rows ? t.shape()[1] == rows : t.shape()[0] == rows) &&
                  (cols_or_zero == 0 || (cols_are_rows ? t.shape()[0] : t.shape()[1]) == cols_or_zero);
  if (!ok) {
    std::string want = cols_are_rows ? "[*," + std::to_string(rows) + "]"
                                     : "[" + std::to_string(rows) + ",*]";
    throw Error(ErrorCode::ShapeMismatch, kModule,
                p.string() + ": expected " + want + ", got " + shape_string(t.shape()));
  }
}

void expect_f32(const Tensor& t, const std::filesystem::path& p) {
  if (t.dtype() != DType::F32) {
    throw Error(ErrorCode::ShapeMismatch, kModule, p.string() + ": expected F32 tensor");
  }
}

void check_simplex(const Tensor& t, const std::filesystem::path& p) {
  const auto m = t.matrix<float>();
  for (Index r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (!(v >= -kSimplexTolerance && v <= 1.0 + kSimplexTolerance)) {
        throw Error(ErrorCode::SimplexViolation, kModule,
                    p.string() + ": row " + std::to_string(r) + " has entry " + std::to_string(v));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      throw Error(ErrorCode::SimplexViolation, kModule,
                  p.string() + ": row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
  }
}

void check_unit_interval(const Tensor& t, const std::filesystem::path& p) {
  for (float v : t.values<float>()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::InvalidArgument, kModule,
                  p.string() + ": score " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

}  // namespace

SceneManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, kModule, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, kModule, path.string() + ": " + e.what());
  }

  SceneManifest m;
  try {
    m.scene_id = require(j, "scene_id", path).get<std::string>();
    m.kind = scene_kind_from_string(require(j, "kind", path).get<std::string>());
    for (const auto& p : require(j, "passes", path)) m.pass_paths.emplace_back(p.get<std::string>());
    m.num_points = require(j, "num_points", path).get<std::uint64_t>();
    if (m.kind == SceneKind::Semantic) {
      m.num_classes = require(j, "num_classes", path).get<std::uint64_t>();
    } else if (j.contains("num_classes") && !j.at("num_classes").is_null()) {
      m.num_classes = j.at("num_classes").get<std::uint64_t>();
    }
    if (m.kind != SceneKind::Semantic) require(j, "seed", path);
    if (j.contains("seed") && !j.at("seed").is_null()) m.seed_path = j.at("seed").get<std::string>();
    if (j.contains("metadata")) {
      for (const auto& [k, v] : j.at("metadata").items()) {
        m.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, kModule, path.string() + ": " + e.what());
  }
  if (m.pass_paths.empty()) {
    throw Error(ErrorCode::MissingField, kModule, path.string() + ": \"passes\" is empty");
  }
  if (m.kind != SceneKind::Semantic && !m.seed_path) {
    throw Error(ErrorCode::MissingField, kModule, path.string() + ": \"seed\" is null");
  }

  const auto base = path.parent_path();
  auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base / p; };

  if (m.seed_path) m.seed = read_tensor(resolve(*m.seed_path));
  for (const auto& p : m.pass_paths) m.passes.push_back(read_tensor(resolve(p)));

  const auto N = m.num_points;
  switch (m.kind) {
    case SceneKind::Semantic: {
      const Tensor::Shape shape{N, m.num_classes};
      auto check = [&](const Tensor& t, const std::filesystem::path& p) {
        expect_f32(t, p);
        expect_shape(t, shape, p);
        check_simplex(t, p);
      };
      if (m.seed) check(*m.seed, *m.seed_path);
      for (std::size_t k = 0; k < m.passes.size(); ++k) check(m.passes[k], m.pass_paths[k]);
      break;
    }
    case SceneKind::Instance: {
      auto check = [&](const Tensor& t, const std::filesystem::path& p) {
        expect_f32(t, p);
        expect_rows(t, N, 0, true, p);
        check_unit_interval(t, p);
      };
      check(*m.seed, *m.seed_path);
      for (std::size_t k = 0; k < m.passes.size(); ++k) check(m.passes[k], m.pass_paths[k]);
      break;
    }
    case SceneKind::Grounding: {
      expect_f32(*m.seed, *m.seed_path);
      expect_rows(*m.seed, N, m.num_classes, false, *m.seed_path);
      check_simplex(*m.seed, *m.seed_path);
      if (m.num_classes == 0) m.num_classes = m.seed->shape()[1];
      for (std::size_t k = 0; k < m.passes.size(); ++k) {
        expect_f32(m.passes[k], m.pass_paths[k]);
        expect_rows(m.passes[k], N, 0, false, m.pass_paths[k]);
        check_simplex(m.passes[k], m.pass_paths[k]);
      }
      break;
    }
  }
  return m;
}

void save_manifest(const SceneManifest& m, const std::filesystem::path& path) {
  json j;
  j["scene_id"] = m.scene_id;
  j["kind"] = to_string(m.kind);
  j["seed"] = m.seed_path ? json(m.seed_path->generic_string()) : json(nullptr);
  j["passes"] = json::array();
  for (const auto& p : m.pass_paths) j["passes"].push_back(p.generic_string());
  j["num_points"] = m.num_points;
  j["num_classes"] = m.num_classes;
  j["metadata"] = m.metadata;
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace bpl
