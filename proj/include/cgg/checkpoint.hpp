#pragma once

// Single-file model checkpoint:
//   "CGGMODEL" | u32 version | u64 header bytes | JSON header | arrays
// Arrays are raw little-endian values, row-major, in header order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cgg/error.hpp"
#include "cgg/json_io.hpp"
#include "cgg/nn/model.hpp"
#include "cgg/preprocess.hpp"
#include "cgg/training.hpp"

namespace cgg {

using nn::Index;
using nn::Mat;

inline constexpr char kCheckpointMagic[8] = {'C', 'G', 'G', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using AnyParams = std::variant<nn::ModelParams<double>, nn::ModelParams<float>>;

struct Checkpoint {
  AnyParams params;
  NormStats norm_stats;
  SensorGraph graph;
  std::optional<TrainConfig> train;

  const nn::ModelConfig& model_config() const {
    return std::visit([](const auto& p) -> const nn::ModelConfig& { return p.config; }, params);
  }
  bool is_float32() const { return std::holds_alternative<nn::ModelParams<float>>(params); }
};

namespace detail {

template <class Scalar>
constexpr const char* dtype_name() {
  return sizeof(Scalar) == 4 ? "f32" : "f64";
}

template <class T>
void put_raw(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void take(void* dst, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(CheckpointError::Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<Index> shape_of(const json& j) {
  return j.get<std::vector<Index>>();
}

}  // namespace detail

template <class Scalar>
std::string encode_checkpoint(const nn::ModelParams<Scalar>& params, const NormStats& stats, const SensorGraph& graph,
                              const std::optional<TrainConfig>& train = std::nullopt) {
  json header;
  header["model"] = to_json(params.config);
  if (train) header["train"] = to_json(*train);
  header["norm_stats"] = to_json(stats);
  header["graph"] = to_json(graph);
  header["dtype"] = detail::dtype_name<Scalar>();
  json arrays = json::array();
  nn::for_each_array(params, [&](const nn::ArrayInfo& info, const Mat<Scalar>&) {
    arrays.push_back({{"name", info.name}, {"shape", info.shape}, {"dtype", detail::dtype_name<Scalar>()}});
  });
  header["arrays"] = std::move(arrays);
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_raw(out, kCheckpointVersion);
  detail::put_raw(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  nn::for_each_array(params, [&](const nn::ArrayInfo&, const Mat<Scalar>& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) detail::put_raw(out, m(r, c));
  });
  return out;
}

template <class Scalar>
void save_checkpoint(const std::filesystem::path& path, const nn::ModelParams<Scalar>& params, const NormStats& stats,
                     const SensorGraph& graph, const std::optional<TrainConfig>& train = std::nullopt) {
  const auto bytes = encode_checkpoint(params, stats, graph, train);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "write failed for " + path.string());
}

namespace detail {

template <class Scalar>
nn::ModelParams<Scalar> read_arrays(Reader& rd, const nn::ModelConfig& cfg, const json& manifest) {
  auto params = nn::zero_params<Scalar>(cfg);
  std::size_t k = 0;
  nn::for_each_array(params, [&](const nn::ArrayInfo& info, Mat<Scalar>& m) {
    if (k >= manifest.size())
      throw CheckpointError(CheckpointError::Kind::shape, "array manifest is missing '" + info.name + "'");
    const auto& entry = manifest[k++];
    const auto name = entry.at("name").get<std::string>();
    if (name != info.name)
      throw CheckpointError(CheckpointError::Kind::shape,
                            "array manifest order mismatch: expected '" + info.name + "', found '" + name + "'");
    if (shape_of(entry.at("shape")) != info.shape)
      throw CheckpointError(CheckpointError::Kind::shape,
                            "array '" + info.name + "' has shape " + entry.at("shape").dump() +
                                " but the embedded config implies " + json(info.shape).dump());
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) rd.take(&m(r, c), sizeof(Scalar), info.name.c_str());
  });
  if (k != manifest.size())
    throw CheckpointError(CheckpointError::Kind::shape, "array manifest has unexpected extra entries");
  if (rd.remaining() != 0) throw CheckpointError(CheckpointError::Kind::format, "trailing bytes after last array");
  return params;
}

}  // namespace detail

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  detail::Reader rd(bytes);
  char magic[sizeof(kCheckpointMagic)];
  rd.take(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw CheckpointError(CheckpointError::Kind::version, "not a checkpoint file (bad magic bytes)");
  std::uint32_t version = 0;
  rd.take(&version, sizeof(version), "version");
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::version, "unsupported checkpoint version " + std::to_string(version) +
                                                              " (expected " + std::to_string(kCheckpointVersion) +
                                                              ")");
  std::uint64_t header_len = 0;
  rd.take(&header_len, sizeof(header_len), "header length");
  if (header_len > rd.remaining())
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated inside the header");
  std::string text(static_cast<std::size_t>(header_len), '\0');
  rd.take(text.data(), text.size(), "header");

  json header;
  try {
    header = json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw CheckpointError(CheckpointError::Kind::format, std::string("bad checkpoint header: ") + ex.what());
  }

  Checkpoint ck;
  try {
    const auto cfg = model_config_from_json(header.at("model"));
    if (header.contains("train")) ck.train = train_config_from_json(header.at("train"));
    ck.norm_stats = norm_stats_from_json(header.at("norm_stats"));
    ck.graph = sensor_graph_from_json(header.at("graph"));
    const auto dtype = header.at("dtype").get<std::string>();
    const auto& manifest = header.at("arrays");
    if (dtype == "f64")
      ck.params = detail::read_arrays<double>(rd, cfg, manifest);
    else if (dtype == "f32")
      ck.params = detail::read_arrays<float>(rd, cfg, manifest);
    else
      throw CheckpointError(CheckpointError::Kind::format, "unknown dtype '" + dtype + "'");
  } catch (const nlohmann::json::exception& ex) {
    throw CheckpointError(CheckpointError::Kind::format, std::string("bad checkpoint header: ") + ex.what());
  } catch (const ValidationError& ex) {
    throw CheckpointError(CheckpointError::Kind::format, std::string("bad checkpoint header: ") + ex.what());
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

// Raises a shape error naming the first array whose shape differs from
// what `expected` implies.
inline void require_compatible(const Checkpoint& ck, const nn::ModelConfig& expected) {
  std::vector<nn::ArrayInfo> want;
  auto ref = nn::zero_params<double>(expected);
  nn::for_each_array(ref, [&](const nn::ArrayInfo& info, const Mat<double>&) { want.push_back(info); });
  std::size_t k = 0;
  std::visit(
      [&](const auto& p) {
        nn::for_each_array(p, [&](const nn::ArrayInfo& info, const auto&) {
          if (k >= want.size())
            throw CheckpointError(CheckpointError::Kind::shape, "checkpoint has unexpected array '" + info.name + "'");
          if (want[k].name != info.name || want[k].shape != info.shape)
            throw CheckpointError(CheckpointError::Kind::shape,
                                  "array '" + want[k].name + "': expected shape " + json(want[k].shape).dump() +
                                      ", checkpoint has '" + info.name + "' " + json(info.shape).dump());
          ++k;
        });
      },
      ck.params);
  if (k != want.size())
    throw CheckpointError(CheckpointError::Kind::shape, "checkpoint lacks array '" + want[k].name + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const nn::ModelConfig& expected) {
  auto ck = load_checkpoint(path);
  require_compatible(ck, expected);
  return ck;
}

}  // namespace cgg
