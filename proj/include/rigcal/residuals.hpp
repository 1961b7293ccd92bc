#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>

#include "rigcal/geometry.hpp"
#include "rigcal/lm.hpp"
#include "rigcal/types.hpp"

namespace rigcal {

using Mat27 = Eigen::Matrix<double, 2, 7>;

// Full projection with Jacobians w.r.t. the camera-frame point and the
// intrinsics vector [f, cx, cy, d0..d3]. Returns false when the point cannot
// be projected (behind a pinhole camera / at the optical center), in which
// case nothing is written.
inline bool project_full(const CameraIntrinsics &cam, const Vec3 &z, Vec2 *pix, Mat23 *dz, Mat27 *dtheta) {
    if (cam.model == CameraModel::RadTan) {
        if (z.z() <= kDomainEps) return false;
        const double x = z.x() / z.z(), y = z.y() / z.z();
        const double r2 = x * x + y * y;
        const double k1 = cam.distortion[0], k2 = cam.distortion[1];
        const double p1 = cam.distortion[2], p2 = cam.distortion[3];
        const double rad = 1.0 + r2 * (k1 + r2 * k2);
        const double xd = x * rad + 2 * p1 * x * y + p2 * (r2 + 2 * x * x);
        const double yd = y * rad + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y;
        *pix = cam.focal * Vec2(xd, yd) + cam.principal_point;
        if (dz) {
            const double drad = k1 + 2 * k2 * r2;
            Mat2 dd;
            dd(0, 0) = rad + 2 * x * x * drad + 2 * p1 * y + 6 * p2 * x;
            dd(0, 1) = 2 * x * y * drad + 2 * p1 * x + 2 * p2 * y;
            dd(1, 0) = dd(0, 1);
            dd(1, 1) = rad + 2 * y * y * drad + 6 * p1 * y + 2 * p2 * x;
            Mat23 dxy;
            dxy << 1.0 / z.z(), 0, -x / z.z(), 0, 1.0 / z.z(), -y / z.z();
            *dz = cam.focal * dd * dxy;
        }
        if (dtheta) {
            dtheta->col(0) = Vec2(xd, yd);
            dtheta->col(1) = Vec2(1, 0);
            dtheta->col(2) = Vec2(0, 1);
            dtheta->col(3) = cam.focal * r2 * Vec2(x, y);
            dtheta->col(4) = cam.focal * r2 * r2 * Vec2(x, y);
            dtheta->col(5) = cam.focal * Vec2(2 * x * y, r2 + 2 * y * y);
            dtheta->col(6) = cam.focal * Vec2(r2 + 2 * x * x, 2 * x * y);
        }
        return true;
    }

    // Equidistant: pixel = f * theta_d(theta) * unit(z_xy) + c.
    const double rho = z.head<2>().norm();
    if (rho <= 1e-12) {
        if (z.z() <= kDomainEps) return false;
        *pix = cam.focal * (z.head<2>() / z.z()) + cam.principal_point;
        if (dz) {
            dz->setZero();
            (*dz)(0, 0) = (*dz)(1, 1) = cam.focal / z.z();
        }
        if (dtheta) {
            dtheta->setZero();
            dtheta->col(0) = z.head<2>() / z.z();
            (*dtheta)(0, 1) = (*dtheta)(1, 2) = 1.0;
        }
        return true;
    }
    const double theta = std::atan2(rho, z.z());
    const double t2 = theta * theta;
    const double k1 = cam.distortion[0], k2 = cam.distortion[1], k3 = cam.distortion[2], k4 = cam.distortion[3];
    const double poly = 1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4)));
    const double theta_d = theta * poly;
    const Vec2 e = z.head<2>() / rho;
    *pix = cam.focal * theta_d * e + cam.principal_point;
    if (dz || dtheta) {
        const double q = rho * rho + z.z() * z.z();
        const double dtd = 1.0 + t2 * (3 * k1 + t2 * (5 * k2 + t2 * (7 * k3 + t2 * 9 * k4)));
        if (dz) {
            const Mat2 ee = e * e.transpose();
            dz->leftCols<2>() = cam.focal * (dtd * (z.z() / q) * ee + (theta_d / rho) * (Mat2::Identity() - ee));
            dz->col(2) = cam.focal * dtd * (-rho / q) * e;
        }
        if (dtheta) {
            dtheta->col(0) = theta_d * e;
            dtheta->col(1) = Vec2(1, 0);
            dtheta->col(2) = Vec2(0, 1);
            double tp = theta * t2;
            for (int m = 0; m < 4; ++m) {
                dtheta->col(3 + m) = cam.focal * tp * e;
                tp *= t2;
            }
        }
    }
    return true;
}

namespace residuals {

// Residual on observations that cannot be projected; large enough that such
// trial steps are rejected, finite so the minimizer survives them.
inline constexpr double kInvalidResidual = 1e8;

// Radial reprojection term: blocks [camera rotation q_i, camera 2-row
// translation b_i, rig-pose rotation q_j, rig-pose translation t_j,
// principal point c_i], fixed 3D point baked in.
class RadialReprojection final : public Residual {
  public:
    RadialReprojection(const Vec3 &point, const Vec2 &pixel) : x_(point), pixel_(pixel) {}

    int dim() const override { return 2; }

    void evaluate(const double *const *params, double *residual, MatX **jac) const override {
        const Eigen::Map<const Eigen::Quaterniond> qi(params[0]);
        const Eigen::Map<const Vec2> bi(params[1]);
        const Eigen::Map<const Eigen::Quaterniond> qj(params[2]);
        const Eigen::Map<const Vec3> tj(params[3]);
        const Eigen::Map<const Vec2> pp(params[4]);
        Eigen::Map<Vec2> res(residual);

        const Mat3 ri = qi.toRotationMatrix(), rj = qj.toRotationMatrix();
        const Vec3 y = rj * x_ + tj;
        const Vec2 u = (ri * y).head<2>() + bi;
        const Vec2 v = pixel_ - pp;
        const double n = u.squaredNorm();
        if (n <= kDomainEps * kDomainEps) {
            res = -v;
            if (jac)
                for (int k = 0; k < 5; ++k)
                    if (jac[k]) jac[k]->setZero();
            return;
        }
        const double s = u.dot(v);
        res = (s / n) * u - v;
        if (!jac) return;

        const Mat2 uut = u * u.transpose();
        const Mat2 dpi_du = (s / n) * Mat2::Identity() + (u * v.transpose()) / n - (2.0 * s / (n * n)) * uut;
        const Mat23 ai = ri.topRows<2>();
        if (jac[0]) *jac[0] = dpi_du * (-(ri * skew(y)).topRows<2>());
        if (jac[1]) *jac[1] = dpi_du;
        if (jac[2]) *jac[2] = dpi_du * (ai * (-rj * skew(x_)));
        if (jac[3]) *jac[3] = dpi_du * ai;
        if (jac[4]) *jac[4] = Mat2::Identity() - uut / n;
    }

  private:
    Vec3 x_;
    Vec2 pixel_;
};

// Full reprojection term: blocks [q_i, t_i, q_j, t_j, intrinsics
// (f, cx, cy, d0..d3)] plus an optional trailing 3D-point block.
class FullReprojection final : public Residual {
  public:
    FullReprojection(CameraModel model, const Vec2 &pixel, const Vec3 &point, bool point_is_block)
        : model_(model), pixel_(pixel), x_(point), point_block_(point_is_block) {}

    int dim() const override { return 2; }

    void evaluate(const double *const *params, double *residual, MatX **jac) const override {
        const Eigen::Map<const Eigen::Quaterniond> qi(params[0]);
        const Eigen::Map<const Vec3> ti(params[1]);
        const Eigen::Map<const Eigen::Quaterniond> qj(params[2]);
        const Eigen::Map<const Vec3> tj(params[3]);
        const Eigen::Map<const Eigen::Matrix<double, 7, 1>> th(params[4]);
        const Vec3 x = point_block_ ? Vec3(Eigen::Map<const Vec3>(params[5])) : x_;
        Eigen::Map<Vec2> res(residual);

        CameraIntrinsics cam;
        cam.model = model_;
        cam.focal = th(0);
        cam.principal_point = th.segment<2>(1);
        cam.distortion = th.tail<4>();

        const Mat3 ri = qi.toRotationMatrix(), rj = qj.toRotationMatrix();
        const Vec3 y = rj * x + tj;
        const Vec3 z = ri * y + ti;

        Vec2 pix;
        Mat23 dz;
        Mat27 dth;
        const int nb = point_block_ ? 6 : 5;
        if (!project_full(cam, z, &pix, jac ? &dz : nullptr, jac ? &dth : nullptr)) {
            res.setConstant(kInvalidResidual);
            if (jac)
                for (int k = 0; k < nb; ++k)
                    if (jac[k]) jac[k]->setZero();
            return;
        }
        res = pix - pixel_;
        if (!jac) return;
        if (jac[0]) *jac[0] = dz * (-(ri * skew(y)));
        if (jac[1]) *jac[1] = dz;
        if (jac[2]) *jac[2] = dz * (-(ri * rj * skew(x)));
        if (jac[3]) *jac[3] = dz * ri;
        if (jac[4]) *jac[4] = dth;
        if (point_block_ && jac[5]) *jac[5] = dz * (ri * rj);
    }

  private:
    CameraModel model_;
    Vec2 pixel_;
    Vec3 x_;
    bool point_block_;
};

// Upgrade refinement term: blocks [t_z, (f, d0..d3)]; the principal point is
// held at its stage-3 value and the camera-frame point Z (up to t_z) is data.
class UpgradeReprojection final : public Residual {
  public:
    UpgradeReprojection(CameraModel model, const Vec2 &principal_point, const Vec2 &pixel, const Vec3 &z_partial)
        : model_(model), pp_(principal_point), pixel_(pixel), z_(z_partial) {}

    int dim() const override { return 2; }

    void evaluate(const double *const *params, double *residual, MatX **jac) const override {
        const double t_z = params[0][0];
        const Eigen::Map<const Eigen::Matrix<double, 5, 1>> fd(params[1]);
        Eigen::Map<Vec2> res(residual);

        CameraIntrinsics cam;
        cam.model = model_;
        cam.focal = fd(0);
        cam.principal_point = pp_;
        cam.distortion = fd.tail<4>();

        const Vec3 z = z_ + Vec3(0, 0, t_z);
        Vec2 pix;
        Mat23 dz;
        Mat27 dth;
        if (!project_full(cam, z, &pix, jac ? &dz : nullptr, jac ? &dth : nullptr)) {
            res.setConstant(kInvalidResidual);
            if (jac)
                for (int k = 0; k < 2; ++k)
                    if (jac[k]) jac[k]->setZero();
            return;
        }
        res = pix - pixel_;
        if (!jac) return;
        if (jac[0]) *jac[0] = dz.col(2);
        if (jac[1]) {
            jac[1]->col(0) = dth.col(0);
            jac[1]->rightCols(4) = dth.rightCols(4);
        }
    }

  private:
    CameraModel model_;
    Vec2 pp_;
    Vec2 pixel_;
    Vec3 z_;
};

// Pose-graph consistency term between a measured radial pose and the
// composition of camera extrinsic and rig pose: blocks [q_i, b_i, q_j, t_j].
// Residual stacks the rotation log-discrepancy and the weighted 2-row
// translation discrepancy.
class PoseGraphDiscrepancy final : public Residual {
  public:
    PoseGraphDiscrepancy(const RadialPose &measured, double translation_weight)
        : rm_(measured.rotation.matrix()), dm_(measured.translation_xy),
          sqrt_lambda_(std::sqrt(translation_weight)) {}

    int dim() const override { return 5; }

    void evaluate(const double *const *params, double *residual, MatX **jac) const override {
        const Eigen::Map<const Eigen::Quaterniond> qi(params[0]);
        const Eigen::Map<const Vec2> bi(params[1]);
        const Eigen::Map<const Eigen::Quaterniond> qj(params[2]);
        const Eigen::Map<const Vec3> tj(params[3]);
        Eigen::Map<Eigen::Matrix<double, 5, 1>> res(residual);

        const Mat3 ri = qi.toRotationMatrix(), rj = qj.toRotationMatrix();
        const Rotation err(Eigen::Quaterniond(rm_.transpose() * ri * rj));
        const Vec3 phi = err.log();
        res.head<3>() = phi;
        res.tail<2>() = sqrt_lambda_ * ((ri * tj).head<2>() + bi - dm_);
        if (!jac) return;

        const Mat3 jr_inv = so3_right_jacobian_inverse(phi);
        if (jac[0]) {
            jac[0]->topRows(3) = jr_inv * rj.transpose();
            jac[0]->bottomRows(2) = sqrt_lambda_ * (-(ri * skew(tj)).topRows<2>());
        }
        if (jac[1]) {
            jac[1]->setZero();
            jac[1]->bottomRows(2) = sqrt_lambda_ * Mat2::Identity();
        }
        if (jac[2]) {
            jac[2]->setZero();
            jac[2]->topRows(3) = jr_inv;
        }
        if (jac[3]) {
            jac[3]->setZero();
            jac[3]->bottomRows(2) = sqrt_lambda_ * ri.topRows<2>();
        }
    }

  private:
    Mat3 rm_;
    Vec2 dm_;
    double sqrt_lambda_;
};

}  // namespace residuals
}  // namespace rigcal
