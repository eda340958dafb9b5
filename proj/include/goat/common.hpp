#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>

namespace goat {

// Millimeters and radians everywhere; degrees only at file/CLI boundaries.

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline Vec2 unit_dir(double angle_rad) {
  return {std::cos(angle_rad), std::sin(angle_rad)};
}

constexpr double deg2rad(double d) { return d * M_PI / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / M_PI; }

// Wraps into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

class GoatError : public std::runtime_error {
 public:
  GoatError(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define GOAT_ERROR_KIND(Name)                          \
  class Name : public GoatError {                      \
   public:                                             \
    explicit Name(const std::string& msg)              \
        : GoatError(#Name, msg) {}                     \
  }

GOAT_ERROR_KIND(MalformedSpec);
GOAT_ERROR_KIND(DisconnectedFingertip);
GOAT_ERROR_KIND(WrongMobility);
GOAT_ERROR_KIND(NoAssembly);
GOAT_ERROR_KIND(SingularJacobian);
GOAT_ERROR_KIND(Unreachable);
GOAT_ERROR_KIND(BranchViolation);
GOAT_ERROR_KIND(SingularTransmission);
GOAT_ERROR_KIND(NoContact);
GOAT_ERROR_KIND(DivisionByZero);
GOAT_ERROR_KIND(TooFewRecords);
GOAT_ERROR_KIND(NonPositiveValue);
GOAT_ERROR_KIND(DegenerateVariance);
GOAT_ERROR_KIND(SingularGram);
GOAT_ERROR_KIND(InfeasibleProblem);
GOAT_ERROR_KIND(NumericalBreakdown);
GOAT_ERROR_KIND(AllStartsFailed);

#undef GOAT_ERROR_KIND

// Round-trippable decimal form; identical numbers print identically, which the
// byte-identical output guarantees depend on.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// SplitMix64: stable stream derivation so sub-seeds never collide with the
// generator's own state progression.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace goat
