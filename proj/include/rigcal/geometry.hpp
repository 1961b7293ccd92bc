#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <string>

#include "rigcal/rng.hpp"
#include "rigcal/types.hpp"

namespace rigcal {

inline Mat3 skew(const Vec3 &v) {
    Mat3 s;
    s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return s;
}

// 3D rotation stored as a unit quaternion; normalized after every
// construction and composition.
class Rotation {
  public:
    Rotation() : q_(1, 0, 0, 0) {}

    explicit Rotation(const Eigen::Quaterniond &q) : q_(q.normalized()) {}

    static Rotation identity() { return Rotation(); }

    static Rotation from_matrix(const Mat3 &m) { return Rotation(Eigen::Quaterniond(m)); }

    // Exponential map: angle-axis vector to rotation.
    static Rotation exp(const Vec3 &w) {
        const double angle = w.norm();
        if (angle < 1e-14) {
            return Rotation(Eigen::Quaterniond(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()));
        }
        return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle)));
    }

    static Rotation random(Rng &rng) {
        Eigen::Quaterniond q(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
        if (q.norm() < 1e-9) q = Eigen::Quaterniond(1, 0, 0, 0);
        return Rotation(q);
    }

    // Logarithm map: angle-axis vector, |result| in [0, pi].
    Vec3 log() const {
        Eigen::Quaterniond q = q_;
        if (q.w() < 0) q.coeffs() = -q.coeffs();
        const double sin_half = q.vec().norm();
        if (sin_half < 1e-14) return 2.0 * q.vec();
        const double angle = 2.0 * std::atan2(sin_half, q.w());
        return (angle / sin_half) * q.vec();
    }

    Mat3 matrix() const { return q_.toRotationMatrix(); }

    const Eigen::Quaterniond &quat() const { return q_; }

    Rotation inverse() const { return Rotation(q_.conjugate()); }

    Rotation operator*(const Rotation &o) const { return Rotation(q_ * o.q_); }

    Vec3 operator*(const Vec3 &v) const { return q_ * v; }

    // Geodesic distance in radians.
    double angle_to(const Rotation &o) const { return (inverse() * o).log().norm(); }

    // Right-multiplicative tangent update: R * exp(w).
    Rotation retract(const Vec3 &w) const { return *this * exp(w); }

  private:
    Eigen::Quaterniond q_;
};

// Inverse of the SO(3) right Jacobian; maps a perturbation of the argument of
// log() to the perturbation of the log itself. Used by pose-graph residuals.
inline Mat3 so3_right_jacobian_inverse(const Vec3 &phi) {
    const double angle = phi.norm();
    const Mat3 W = skew(phi);
    if (angle < 1e-7) {
        return Mat3::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
    }
    const double cot_term = 1.0 / (angle * angle) - (1.0 + std::cos(angle)) / (2.0 * angle * std::sin(angle));
    return Mat3::Identity() + 0.5 * W + cot_term * W * W;
}

// Full SE(3) transform x -> R x + t.
struct RigidPose {
    Rotation rotation;
    Vec3 translation = Vec3::Zero();

    RigidPose() = default;
    RigidPose(const Rotation &r, const Vec3 &t) : rotation(r), translation(t) {}

    static RigidPose identity() { return RigidPose(); }

    Vec3 operator*(const Vec3 &x) const { return rotation * x + translation; }

    RigidPose compose(const RigidPose &o) const {
        return RigidPose(rotation * o.rotation, rotation * o.translation + translation);
    }

    RigidPose inverse() const {
        Rotation rinv = rotation.inverse();
        return RigidPose(rinv, -(rinv * translation));
    }

    Mat34 matrix3x4() const {
        Mat34 m;
        m.leftCols<3>() = rotation.matrix();
        m.col(3) = translation;
        return m;
    }

    Mat4 matrix4x4() const {
        Mat4 m = Mat4::Identity();
        m.topRows<3>() = matrix3x4();
        return m;
    }

    Vec3 center() const { return -(rotation.inverse() * translation); }
};

// Pose known only up to translation along the principal axis: the top two
// rows [A | b] of a pose matrix. Stored as a full rotation plus the first two
// translation components, which keeps the rows of A orthonormal by
// construction (the canonical normalization).
struct RadialPose {
    Rotation rotation;
    Vec2 translation_xy = Vec2::Zero();

    RadialPose() = default;
    RadialPose(const Rotation &r, const Vec2 &txy) : rotation(r), translation_xy(txy) {}

    static RadialPose identity() { return RadialPose(); }

    Mat23 row_block() const { return rotation.matrix().topRows<2>(); }

    Mat24 matrix2x4() const {
        Mat24 m;
        m.leftCols<3>() = row_block();
        m.col(3) = translation_xy;
        return m;
    }

    // First two components of R x + t.
    Vec2 apply(const Vec3 &x) const { return row_block() * x + translation_xy; }

    // 2-row composition with a full pose on the right: [A|b] * [R|t; 0 1].
    RadialPose compose(const RigidPose &o) const {
        return RadialPose(rotation * o.rotation, (rotation * o.translation).head<2>() + translation_xy);
    }

    // Extension to a full pose with the given forward translation.
    RigidPose extend(double t_z = 0.0) const {
        return RigidPose(rotation, Vec3(translation_xy.x(), translation_xy.y(), t_z));
    }

    // Builds the canonical radial pose from raw rows: A is replaced by its
    // nearest row-orthonormal matrix, the third row by the cross product of
    // the first two. The caller fixes the sign separately.
    static RadialPose from_rows(const Mat23 &a, const Vec2 &b) {
        Eigen::JacobiSVD<Mat23> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat23 ortho = svd.matrixU() * svd.matrixV().leftCols<2>().transpose();
        Mat3 r;
        r.topRows<2>() = ortho;
        r.row(2) = ortho.row(0).cross(ortho.row(1));
        return RadialPose(Rotation::from_matrix(r), b);
    }

    // Flips to the pose projecting points to the opposite radial side.
    RadialPose negated() const {
        Mat3 r = rotation.matrix();
        r.row(0) = -r.row(0);
        r.row(1) = -r.row(1);
        return RadialPose(Rotation::from_matrix(r), -translation_xy);
    }
};

// Top two rows of the pose matrix.
inline RadialPose radial_from_full(const RigidPose &pose) {
    return RadialPose(pose.rotation, pose.translation.head<2>());
}

enum class CameraModel { RadTan, Equidistant };

inline std::string to_string(CameraModel m) {
    return m == CameraModel::RadTan ? "radtan" : "equidistant";
}

// Pinhole camera with a single focal length and one of two distortion models:
// radial-tangential (k1, k2, p1, p2) applied to the normalized image point,
// or the equidistant angle polynomial (k1..k4).
struct CameraIntrinsics {
    CameraModel model = CameraModel::RadTan;
    double focal = 1.0;
    Vec2 principal_point = Vec2::Zero();
    Vec4 distortion = Vec4::Zero();
};

// Orthogonal projection of v onto the line spanned by u.
inline Vec2 project_onto_line(const Vec2 &u, const Vec2 &v) {
    return (u.dot(v) / u.dot(u)) * u;
}

// Projection into image space under the full camera model.
inline Vec2 project(const CameraIntrinsics &cam, const Vec3 &x_cam) {
    if (cam.model == CameraModel::RadTan) {
        if (x_cam.z() <= kDomainEps) {
            throw NumericalDomain("project: point depth is not positive");
        }
        const double x = x_cam.x() / x_cam.z();
        const double y = x_cam.y() / x_cam.z();
        const double r2 = x * x + y * y;
        const double k1 = cam.distortion[0], k2 = cam.distortion[1];
        const double p1 = cam.distortion[2], p2 = cam.distortion[3];
        const double radial = 1.0 + r2 * (k1 + r2 * k2);
        const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
        const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
        return cam.focal * Vec2(xd, yd) + cam.principal_point;
    }
    // Equidistant (angle polynomial).
    if (x_cam.norm() <= kDomainEps) {
        throw NumericalDomain("project: point norm is not positive");
    }
    const double rt = x_cam.head<2>().norm();
    if (rt <= kDomainEps) {
        if (x_cam.z() <= 0.0) {
            throw NumericalDomain("project: ray opposite to the principal axis");
        }
        return cam.principal_point;
    }
    const double theta = std::atan2(rt, x_cam.z());
    const double t2 = theta * theta;
    const double theta_d =
        theta * (1.0 + t2 * (cam.distortion[0] +
                             t2 * (cam.distortion[1] + t2 * (cam.distortion[2] + t2 * cam.distortion[3]))));
    return cam.focal * (theta_d / rt) * x_cam.head<2>() + cam.principal_point;
}

// Numerical monotonicity check of the radial profile r -> r_distorted over
// the working range. For RadTan the argument is the maximum normalized
// radius, for Equidistant the maximum incidence angle in radians.
inline bool is_distortion_monotone(const CameraIntrinsics &cam, double max_arg, int samples = 64) {
    double prev = 0.0;
    for (int i = 1; i <= samples; ++i) {
        const double a = max_arg * static_cast<double>(i) / samples;
        double r;
        if (cam.model == CameraModel::RadTan) {
            const double r2 = a * a;
            r = a * (1.0 + r2 * (cam.distortion[0] + r2 * cam.distortion[1]));
        } else {
            const double t2 = a * a;
            r = a * (1.0 + t2 * (cam.distortion[0] +
                                 t2 * (cam.distortion[1] + t2 * (cam.distortion[2] + t2 * cam.distortion[3]))));
        }
        if (!(r > prev)) return false;
        prev = r;
    }
    return true;
}

// Radial reprojection residual pi_r(u, v) - v with u = A X + b the radial
// projection and v the observation centered at the principal point. Its norm
// is the distance from v to the radial line through u.
inline Vec2 radial_residual(const RadialPose &pose, const Vec2 &principal_point, const Vec3 &x_map,
                            const Vec2 &pixel) {
    const Vec2 u = pose.apply(x_map);
    const double n = u.squaredNorm();
    if (n <= kDomainEps * kDomainEps) {
        throw DegenerateProjection("radial_residual: point projects onto the distortion center");
    }
    const Vec2 v = pixel - principal_point;
    return (u.dot(v) / n) * u - v;
}

// Division-model undistortion r_u = r / (1 + mu_1 r^2 + mu_2 r^4).
struct DivisionModel {
    std::array<double, 2> mu = {0.0, 0.0};
    int order = 0;  // number of active coefficients, 0..2

    double denominator(double radius) const {
        const double r2 = radius * radius;
        double d = 1.0;
        if (order >= 1) d += mu[0] * r2;
        if (order >= 2) d += mu[1] * r2 * r2;
        return d;
    }
};

inline double undistort_division(double radius, const DivisionModel &model) {
    const double d = model.denominator(radius);
    if (d <= kDomainEps) {
        throw NumericalDomain("undistort_division: denominator is not positive");
    }
    return radius / d;
}

// The division model maps distorted to undistorted radii; the mapping must be
// increasing and positive over the observed radius range for the model to be
// physically usable.
inline bool is_division_model_valid(const DivisionModel &model, double max_radius, int samples = 64) {
    double prev = 0.0;
    for (int i = 1; i <= samples; ++i) {
        const double r = max_radius * static_cast<double>(i) / samples;
        if (model.denominator(r) <= kDomainEps) return false;
        const double ru = r / model.denominator(r);
        if (!(ru > prev)) return false;
        prev = ru;
    }
    return true;
}

}  // namespace rigcal
