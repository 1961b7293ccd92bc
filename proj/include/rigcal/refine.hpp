#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "rigcal/geometry.hpp"
#include "rigcal/lm.hpp"
#include "rigcal/residuals.hpp"
#include "rigcal/robust.hpp"
#include "rigcal/types.hpp"

namespace rigcal {

// One 2D observation tied to a camera, a rig pose and a map point.
struct BaObservation {
    int camera = 0;
    int pose = 0;
    Vec2 pixel = Vec2::Zero();
    Vec3 point = Vec3::Zero();
    int point_index = -1;  // used only when optimizing points
};

// Robustified radial reprojection objective (the stage-3 cost), evaluated
// without touching the parameters.
inline double radial_objective(const std::vector<RadialPose> &extrinsics, const std::vector<Vec2> &principal_points,
                               const std::vector<RigidPose> &rig_poses, const std::vector<BaObservation> &obs,
                               const RobustLoss &loss = RobustLoss::cauchy()) {
    double cost = 0.0;
    for (const auto &o : obs) {
        const RadialPose composed = extrinsics[o.camera].compose(rig_poses[o.pose]);
        Vec2 r;
        try {
            r = radial_residual(composed, principal_points[o.camera], o.point, o.pixel);
        } catch (const DegenerateProjection &) {
            r = -(o.pixel - principal_points[o.camera]);
        }
        cost += loss.cost(r.squaredNorm());
    }
    return cost;
}

// Robustified full reprojection objective (the stage-5 cost).
inline double full_objective(const std::vector<RigidPose> &extrinsics, const std::vector<CameraIntrinsics> &intrinsics,
                             const std::vector<RigidPose> &rig_poses, const std::vector<BaObservation> &obs,
                             const RobustLoss &loss = RobustLoss::cauchy()) {
    double cost = 0.0;
    for (const auto &o : obs) {
        const Vec3 z = extrinsics[o.camera] * (rig_poses[o.pose] * o.point);
        Vec2 pix;
        Vec2 r;
        if (project_full(intrinsics[o.camera], z, &pix, nullptr, nullptr)) {
            r = pix - o.pixel;
        } else {
            r = Vec2::Constant(residuals::kInvalidResidual);
        }
        cost += loss.cost(r.squaredNorm());
    }
    return cost;
}

// Joint refinement of radial extrinsics, rig poses and principal points over
// the radial reprojection error; 3D points stay fixed. The first rig pose is
// pinned as the gauge. Principal points of cameras with fewer than
// `min_pp_observations` observations or seen in fewer than 2 framesets are
// held fixed.
inline LmSummary radial_bundle_adjust(std::vector<RadialPose> &extrinsics, std::vector<Vec2> &principal_points,
                                      std::vector<RigidPose> &rig_poses, const std::vector<BaObservation> &obs,
                                      const LmConfig &config = {}, const RobustLoss &loss = RobustLoss::cauchy(),
                                      int min_pp_observations = 30) {
    const int ncam = static_cast<int>(extrinsics.size());
    const int npose = static_cast<int>(rig_poses.size());
    Problem problem;
    std::vector<int> cam_q(ncam), cam_b(ncam), cam_pp(ncam), pose_q(npose), pose_t(npose);
    for (int i = 0; i < ncam; ++i) {
        cam_q[i] = problem.add_rotation_block(extrinsics[i].rotation);
        cam_b[i] = problem.add_block(extrinsics[i].translation_xy);
        cam_pp[i] = problem.add_block(principal_points[i]);
    }
    for (int j = 0; j < npose; ++j) {
        pose_q[j] = problem.add_rotation_block(rig_poses[j].rotation);
        pose_t[j] = problem.add_block(rig_poses[j].translation);
    }
    problem.set_constant(pose_q[0]);
    problem.set_constant(pose_t[0]);

    std::vector<int> cam_obs(ncam, 0);
    std::vector<std::vector<bool>> cam_seen(ncam, std::vector<bool>(npose, false));
    for (const auto &o : obs) {
        ++cam_obs[o.camera];
        cam_seen[o.camera][o.pose] = true;
        problem.add_residual(std::make_unique<residuals::RadialReprojection>(o.point, o.pixel),
                             {cam_q[o.camera], cam_b[o.camera], pose_q[o.pose], pose_t[o.pose], cam_pp[o.camera]});
    }
    for (int i = 0; i < ncam; ++i) {
        int seen = 0;
        for (bool s : cam_seen[i]) seen += s ? 1 : 0;
        if (cam_obs[i] < min_pp_observations || seen < 2) problem.set_constant(cam_pp[i]);
    }

    const LmSummary summary = lm_minimize(problem, loss, config);
    for (int i = 0; i < ncam; ++i) {
        extrinsics[i] = RadialPose(problem.rotation(cam_q[i]), problem.value(cam_b[i]));
        principal_points[i] = problem.value(cam_pp[i]);
    }
    for (int j = 0; j < npose; ++j) {
        rig_poses[j] = RigidPose(problem.rotation(pose_q[j]), problem.value(pose_t[j]));
    }
    return summary;
}

// Initial target-model intrinsics from a division-model upgrade: the focal
// carries over and the radial profile is matched at 64 radii by linear least
// squares (tangential / higher-order terms start at zero).
inline CameraIntrinsics upgrade_to_intrinsics(const UpgradeSolution &up, CameraModel model,
                                              const Vec2 &principal_point, double max_radius_px) {
    CameraIntrinsics cam;
    cam.model = model;
    cam.focal = up.focal;
    cam.principal_point = principal_point;
    cam.distortion = Vec4::Zero();
    if (max_radius_px <= 0.0) return cam;

    constexpr int kSamples = 64;
    const int terms = model == CameraModel::RadTan ? 2 : 4;
    MatX a(kSamples, terms);
    VecX b(kSamples);
    for (int k = 0; k < kSamples; ++k) {
        const double rd = max_radius_px * (k + 1) / kSamples;  // distorted pixel radius
        const double ru = undistort_division(rd, up.division);
        if (model == CameraModel::RadTan) {
            const double nu = ru / up.focal;  // undistorted normalized radius
            const double nd = rd / up.focal;
            a(k, 0) = nu * nu * nu;
            a(k, 1) = nu * nu * nu * nu * nu;
            b(k) = nd - nu;
        } else {
            const double theta = std::atan(ru / up.focal);
            const double td = rd / up.focal;
            double tp = theta * theta * theta;
            for (int m = 0; m < 4; ++m) {
                a(k, m) = tp;
                tp *= theta * theta;
            }
            b(k) = td - theta;
        }
    }
    const VecX coeffs = a.colPivHouseholderQr().solve(b);
    for (int m = 0; m < terms; ++m) cam.distortion[m] = coeffs(m);
    return cam;
}

// Per-camera refinement of focal length, distortion and forward translation
// over the full reprojection error; the principal point stays at its stage-3
// value. Observations are (pixel, Z) with Z the camera-frame point up to t_z.
inline LmSummary refine_upgrade(CameraIntrinsics &cam, double &t_z,
                                const std::vector<std::pair<Vec2, Vec3>> &observations,
                                const LmConfig &config = {}, const RobustLoss &loss = RobustLoss::cauchy()) {
    Problem problem;
    const int tz_id = problem.add_block(VecX::Constant(1, t_z));
    Eigen::Matrix<double, 5, 1> fd;
    fd << cam.focal, cam.distortion;
    const int fd_id = problem.add_block(fd);
    for (const auto &[pixel, z] : observations) {
        problem.add_residual(
            std::make_unique<residuals::UpgradeReprojection>(cam.model, cam.principal_point, pixel, z),
            {tz_id, fd_id});
    }
    const LmSummary summary = lm_minimize(problem, loss, config);

    t_z = problem.value(tz_id)(0);
    cam.focal = problem.value(fd_id)(0);
    cam.distortion = problem.value(fd_id).tail<4>();
    if (cam.focal <= 0.0) throw NoValidSolution("refine_upgrade: focal collapsed to non-positive");

    double max_arg = 0.0;
    int valid = 0;
    for (const auto &[pixel, z] : observations) {
        const Vec3 zc = z + Vec3(0, 0, t_z);
        if (cam.model == CameraModel::RadTan) {
            if (zc.z() <= kDomainEps) continue;
            max_arg = std::max(max_arg, zc.head<2>().norm() / zc.z());
        } else {
            if (zc.norm() <= kDomainEps) continue;
            max_arg = std::max(max_arg, std::atan2(zc.head<2>().norm(), zc.z()));
        }
        ++valid;
    }
    if (valid == 0) throw NoValidSolution("refine_upgrade: no observation projects");
    if (!is_distortion_monotone(cam, max_arg)) {
        throw NoValidSolution("refine_upgrade: non-monotone distortion over the working range");
    }
    return summary;
}

// Final joint refinement of everything over the full reprojection error. The
// first rig pose is pinned as the gauge; when points are optimized they are
// Schur-eliminated and the first point is additionally pinned to remove the
// remaining scale freedom.
inline LmSummary full_bundle_adjust(std::vector<RigidPose> &extrinsics, std::vector<CameraIntrinsics> &intrinsics,
                                    std::vector<RigidPose> &rig_poses, std::vector<Vec3> &points,
                                    const std::vector<BaObservation> &obs, bool optimize_points = false,
                                    const LmConfig &config = {}, const RobustLoss &loss = RobustLoss::cauchy()) {
    const int ncam = static_cast<int>(extrinsics.size());
    const int npose = static_cast<int>(rig_poses.size());
    Problem problem;
    std::vector<int> cam_q(ncam), cam_t(ncam), cam_th(ncam), pose_q(npose), pose_t(npose);
    for (int i = 0; i < ncam; ++i) {
        cam_q[i] = problem.add_rotation_block(extrinsics[i].rotation);
        cam_t[i] = problem.add_block(extrinsics[i].translation);
        Eigen::Matrix<double, 7, 1> th;
        th << intrinsics[i].focal, intrinsics[i].principal_point, intrinsics[i].distortion;
        cam_th[i] = problem.add_block(th);
    }
    for (int j = 0; j < npose; ++j) {
        pose_q[j] = problem.add_rotation_block(rig_poses[j].rotation);
        pose_t[j] = problem.add_block(rig_poses[j].translation);
    }
    problem.set_constant(pose_q[0]);
    problem.set_constant(pose_t[0]);

    std::vector<int> point_ids;
    if (optimize_points) {
        point_ids.resize(points.size());
        for (size_t p = 0; p < points.size(); ++p) {
            point_ids[p] = problem.add_block(points[p]);
            problem.mark_point(point_ids[p]);
        }
        if (!points.empty()) problem.set_constant(point_ids[0]);
    }

    for (const auto &o : obs) {
        const bool as_block = optimize_points && o.point_index >= 0;
        std::vector<int> ids = {cam_q[o.camera], cam_t[o.camera], pose_q[o.pose], pose_t[o.pose], cam_th[o.camera]};
        if (as_block) ids.push_back(point_ids[o.point_index]);
        problem.add_residual(
            std::make_unique<residuals::FullReprojection>(intrinsics[o.camera].model, o.pixel, o.point, as_block),
            std::move(ids));
    }

    const LmSummary summary = lm_minimize(problem, loss, config);
    for (int i = 0; i < ncam; ++i) {
        extrinsics[i] = RigidPose(problem.rotation(cam_q[i]), problem.value(cam_t[i]));
        const VecX &th = problem.value(cam_th[i]);
        intrinsics[i].focal = th(0);
        intrinsics[i].principal_point = th.segment<2>(1);
        intrinsics[i].distortion = th.tail<4>();
    }
    for (int j = 0; j < npose; ++j) {
        rig_poses[j] = RigidPose(problem.rotation(pose_q[j]), problem.value(pose_t[j]));
    }
    if (optimize_points) {
        for (size_t p = 0; p < points.size(); ++p) points[p] = problem.value(point_ids[p]);
    }
    return summary;
}

struct PoseGraphEdge {
    int camera = 0;
    int pose = 0;
    RadialPose measured;
};

// Pose-graph polish of the greedy rig initialization: minimizes the
// robustified rotation + weighted 2-row translation discrepancy between
// measured radial poses and extrinsic-composed rig poses. First rig pose
// pinned as the gauge.
inline LmSummary optimize_pose_graph(std::vector<RadialPose> &extrinsics, std::vector<RigidPose> &rig_poses,
                                     const std::vector<PoseGraphEdge> &edges, double translation_weight = 1.0,
                                     const LmConfig &config = {}, const RobustLoss &loss = RobustLoss::cauchy()) {
    const int ncam = static_cast<int>(extrinsics.size());
    const int npose = static_cast<int>(rig_poses.size());
    Problem problem;
    std::vector<int> cam_q(ncam), cam_b(ncam), pose_q(npose), pose_t(npose);
    for (int i = 0; i < ncam; ++i) {
        cam_q[i] = problem.add_rotation_block(extrinsics[i].rotation);
        cam_b[i] = problem.add_block(extrinsics[i].translation_xy);
    }
    for (int j = 0; j < npose; ++j) {
        pose_q[j] = problem.add_rotation_block(rig_poses[j].rotation);
        pose_t[j] = problem.add_block(rig_poses[j].translation);
    }
    problem.set_constant(pose_q[0]);
    problem.set_constant(pose_t[0]);

    for (const auto &e : edges) {
        problem.add_residual(std::make_unique<residuals::PoseGraphDiscrepancy>(e.measured, translation_weight),
                             {cam_q[e.camera], cam_b[e.camera], pose_q[e.pose], pose_t[e.pose]});
    }
    const LmSummary summary = lm_minimize(problem, loss, config);
    for (int i = 0; i < ncam; ++i) {
        extrinsics[i] = RadialPose(problem.rotation(cam_q[i]), problem.value(cam_b[i]));
    }
    for (int j = 0; j < npose; ++j) {
        rig_poses[j] = RigidPose(problem.rotation(pose_q[j]), problem.value(pose_t[j]));
    }
    return summary;
}

// Pose-graph objective value at the current parameters.
inline double pose_graph_objective(const std::vector<RadialPose> &extrinsics, const std::vector<RigidPose> &rig_poses,
                                   const std::vector<PoseGraphEdge> &edges, double translation_weight = 1.0,
                                   const RobustLoss &loss = RobustLoss::cauchy()) {
    double cost = 0.0;
    for (const auto &e : edges) {
        const RadialPose pred = extrinsics[e.camera].compose(rig_poses[e.pose]);
        const double rot = pred.rotation.angle_to(e.measured.rotation);
        const double trans2 = (pred.translation_xy - e.measured.translation_xy).squaredNorm();
        cost += loss.cost(rot * rot + translation_weight * trans2);
    }
    return cost;
}

}  // namespace rigcal
