#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rigcal/geometry.hpp"
#include "rigcal/solvers.hpp"
#include "rigcal/types.hpp"

namespace rigcal {

// All images captured by the rig at one timestamp, as 2D-3D correspondences
// against the shared sparse map.
struct Frameset {
    std::int64_t id = 0;
    double timestamp = 0.0;
    std::vector<std::vector<Correspondence2D3D>> observations;  // per camera
};

// Input to calibration: a sparse map plus synchronized correspondences.
struct CalibrationSession {
    int camera_count = 0;
    std::vector<Eigen::Vector2i> image_sizes;  // (width, height) per camera
    double map_scale = 1.0;                    // metres per map unit
    std::map<std::int64_t, Vec3> map_points;
    std::vector<Frameset> framesets;

    Vec2 image_center(int camera) const {
        return 0.5 * image_sizes[camera].cast<double>();
    }

    // Checks referential integrity; every correspondence must name a map
    // point and carry its coordinates.
    void validate() const {
        if (camera_count <= 0) throw IntegrityError("session: camera_count must be positive");
        if (static_cast<int>(image_sizes.size()) != camera_count) {
            throw IntegrityError("session: image_sizes does not match camera_count");
        }
        for (const auto &fs : framesets) {
            if (static_cast<int>(fs.observations.size()) != camera_count) {
                throw IntegrityError("session: frameset " + std::to_string(fs.id) +
                                     " does not cover every camera slot");
            }
            for (const auto &cam_obs : fs.observations) {
                for (const auto &c : cam_obs) {
                    if (!c.pixel.allFinite() || !c.point.allFinite()) {
                        throw IntegrityError("session: non-finite correspondence in frameset " +
                                             std::to_string(fs.id));
                    }
                    if (map_points.find(c.point_id) == map_points.end()) {
                        throw IntegrityError("session: dangling point_id " + std::to_string(c.point_id) +
                                             " in frameset " + std::to_string(fs.id));
                    }
                }
            }
        }
    }
};

// A calibrated rig: per-camera intrinsics, camera-from-rig extrinsics, and
// the rig-from-world pose of every registered frameset.
struct RigCalibration {
    std::vector<CameraIntrinsics> intrinsics;
    std::vector<RigidPose> extrinsics;
    std::vector<std::int64_t> frameset_ids;
    std::vector<RigidPose> rig_poses;  // parallel to frameset_ids

    int camera_count() const { return static_cast<int>(extrinsics.size()); }
};

}  // namespace rigcal
