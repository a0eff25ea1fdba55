#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "cgg/gaitdata.hpp"

namespace cgg::test {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cgg") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Recording with T rows; value(t, channel) fills channel 0..15 (left then right).
inline RawRecording make_recording(int rows, const std::function<double(int, int)>& value,
                                   const std::string& id = "SyCo001_01", int label = 0) {
  RawRecording r;
  r.meta.subject_id = id;
  r.meta.label = label;
  r.left.resize(rows, kSensorsPerFoot);
  r.right.resize(rows, kSensorsPerFoot);
  r.timestamps.resize(static_cast<std::size_t>(rows));
  r.total_left.resize(static_cast<std::size_t>(rows));
  r.total_right.resize(static_cast<std::size_t>(rows));
  for (int t = 0; t < rows; ++t) {
    r.timestamps[static_cast<std::size_t>(t)] = t * 0.01;
    double tl = 0, tr = 0;
    for (int k = 0; k < kSensorsPerFoot; ++k) {
      r.left(t, k) = value(t, k);
      r.right(t, k) = value(t, k + kSensorsPerFoot);
      tl += r.left(t, k);
      tr += r.right(t, k);
    }
    r.total_left[static_cast<std::size_t>(t)] = tl;
    r.total_right[static_cast<std::size_t>(t)] = tr;
  }
  return r;
}

}  // namespace cgg::test
