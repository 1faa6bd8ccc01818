#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace hybridcal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points2 = std::vector<Vec2>;

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// The input is well-formed but geometrically or numerically degenerate
// (collinear points, identical poses, rank-deficient systems, ...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

// File-system or encoding failure. The message names the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

// Invalid configuration value. `field` is the dotted path of the offending key.
class ConfigError : public PreconditionError {
public:
    ConfigError(std::string field, const std::string& message)
        : PreconditionError(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct ImageSize {
    int width = 480;
    int height = 480;

    friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

}  // namespace hybridcal
