#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace uavtrack {

/// Planar position or displacement in meters.
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

using Rng = std::mt19937_64;

enum class ErrorCode {
  ZeroRange,
  NonPositiveLb,
  NonFinite,
  ConfigInvalid,
  MobilityViolation,
  NonFiniteLoss,
  HashMismatch,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroRange: return "ZeroRange";
    case ErrorCode::NonPositiveLb: return "NonPositiveLb";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::MobilityViolation: return "MobilityViolation";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline bool is_finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

inline void require_finite(const Vec2& v, const char* what) {
  if (!is_finite(v)) throw Error(ErrorCode::NonFinite, what);
}

inline Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

// splitmix64 finalizer; used to derive independent stream seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return mix_seed(mix_seed(base) ^ mix_seed(tag + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag1, std::uint64_t tag2) {
  return derive_seed(derive_seed(base, tag1), tag2);
}

inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

}  // namespace uavtrack
