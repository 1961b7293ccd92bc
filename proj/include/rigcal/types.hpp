#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rigcal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::MatrixXd;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat24 = Eigen::Matrix<double, 2, 4>;
using Mat34 = Eigen::Matrix<double, 3, 4>;

// Domain guard for denominators and norms.
inline constexpr double kDomainEps = 1e-12;

// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Input to a formula left its numerical domain (zero depth, vanishing denominator, ...).
struct NumericalDomain : Error {
    using Error::Error;
};

// A point projects onto the distortion center; the radial line is undefined.
struct DegenerateProjection : Error {
    using Error::Error;
};

// A solver received data it cannot determine a model from (rank deficiency, collinearity, ...).
struct DegenerateConfiguration : Error {
    using Error::Error;
};

// All candidate solutions were rejected by validity checks.
struct NoValidSolution : Error {
    using Error::Error;
};

// The rig poses cannot be determined because all involved principal axes are parallel.
struct ParallelAxesDegenerate : DegenerateConfiguration {
    using DegenerateConfiguration::DegenerateConfiguration;
};

// RANSAC could not find a model with the required inlier support.
struct NotEnoughInliers : Error {
    using Error::Error;
};

// The nonlinear solver failed beyond damping recovery.
struct NumericalFailure : Error {
    using Error::Error;
};

// No image passed pose estimation; the registration set is empty.
struct EmptyRegistration : Error {
    using Error::Error;
};

// The camera-frameset registration graph is not connected.
struct UnconnectedRig : Error {
    using Error::Error;
};

// No rig initialization trial reached closure.
struct AllTrialsFailed : Error {
    using Error::Error;
};

// A synthetic scenario cannot be generated as requested.
struct InfeasibleSpec : Error {
    using Error::Error;
};

// A file could not be parsed.
struct ParseError : Error {
    using Error::Error;
};

// A file parsed but violates referential integrity.
struct IntegrityError : Error {
    using Error::Error;
};

}  // namespace rigcal
