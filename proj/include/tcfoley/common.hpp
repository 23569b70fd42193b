#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace tcfoley {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;

/// Broad classes of failure, mapped onto CLI exit codes by the tool.
enum class ErrorKind {
  kUsage,     // bad arguments or configuration
  kData,      // malformed or inconsistent input data
  kIo,        // file system problems
  kNetwork,   // caption-provider transport
  kInternal,  // broken invariant inside the library
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error data_error(const std::string& what) { return Error(ErrorKind::kData, what); }
inline Error usage_error(const std::string& what) { return Error(ErrorKind::kUsage, what); }

using Rng = std::mt19937_64;

/// Derives an independent generator from a seed and a path of indices
/// (epoch, batch, item, ...). Used so that every random draw in training is a
/// pure function of its position, which makes resumed runs bit-identical.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = seed ^ 0x9E3779B97F4A7C15ull;
  auto mix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  h = mix(h);
  for (auto p : path) h = mix(h ^ (p + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2)));
  return Rng(h);
}

/// Standard normal draw via Box-Muller over the raw 64-bit stream, so results
/// do not depend on the standard library's distribution implementation.
inline double normal_draw(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  double u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

inline double uniform_draw(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename Scalar>
Mat<Scalar> normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev = 1.0) {
  Mat<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(stddev * normal_draw(rng));
  return m;
}

}  // namespace tcfoley
