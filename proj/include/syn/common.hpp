#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace syn {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;
// Row-major so checkpoint payloads are plain row-major f64 streams.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class SynError : public std::runtime_error {
 public:
  explicit SynError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw SynError(msg); }

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Log verbosity from SYN_LOG: 0 = silent, 1 = info (default), 2 = debug.
inline int log_level() {
  static int lvl = [] {
    const char* e = std::getenv("SYN_LOG");
    return e ? std::atoi(e) : 1;
  }();
  return lvl;
}

template <typename... Args>
void log_info(const char* fmt, Args... args) {
  if (log_level() >= 1) {
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

template <typename... Args>
void log_debug(const char* fmt, Args... args) {
  if (log_level() >= 2) {
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

}  // namespace syn
