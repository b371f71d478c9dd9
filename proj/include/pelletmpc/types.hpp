#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace pelletmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Thrown when operands do not have compatible sizes.
class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when a computation produces NaN/Inf or otherwise loses meaning.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown for inputs that violate a documented precondition.
class InvalidArgument : public std::invalid_argument {
public:
    explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) throw InvalidArgument(message);
}

inline void require_dims(bool condition, const std::string& message)
{
    if (!condition) throw DimensionError(message);
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace pelletmpc
