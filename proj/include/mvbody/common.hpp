#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mvb {

using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Points3 = Eigen::MatrixX3d;
using Points2 = Eigen::MatrixX2d;
using FaceList = Eigen::Matrix<std::uint32_t, Eigen::Dynamic, 3>;

/// Data/file problems (corrupt or missing inputs). CLI maps this to exit 3.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration or usage. CLI maps this to exit 2.
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw std::runtime_error(message);
}

inline void require_data(bool ok, const std::string& message) {
  if (!ok) throw io_error(message);
}

/// splitmix64 mix step; used to derive independent per-item seeds from a
/// master seed so work units stay reproducible under any parallel order.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic RNG: mt19937_64 (fully specified by the standard) with
/// explicit uniform/normal transforms, so streams are bit-reproducible
/// across platforms and standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1): 53 random mantissa bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no pair caching, one draw = two u64s).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mvb
