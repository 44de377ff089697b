#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ftmpc {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr int kNumMotors = 6;
inline constexpr double kPi = 3.14159265358979323846;

using MotorVec = Eigen::Matrix<double, kNumMotors, 1>;

/// Base class of everything this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bounds, dimensions, parameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numeric routine produced non-finite values or blew up.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Solver or closed loop left its region of validity.
class DivergedError : public Error {
 public:
  using Error::Error;
};

/// Text input (scenario, log, table) could not be parsed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace ftmpc
