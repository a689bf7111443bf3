#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voxlift/util/rng.hpp"

// Camera convention: camera-to-world rigid transforms, camera looks down +z,
// x right, y down. The renderable volume is the axis-aligned box [-1,1]^3 in
// whatever frame rays are expressed in.

namespace voxlift::geom {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;
};

struct CameraPose {
  std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  Vec3 trans;

  static CameraPose identity() { return {}; }
  Vec3 rotate(const Vec3& v) const;
  Vec3 rotate_transposed(const Vec3& v) const;
  Vec3 apply(const Vec3& v) const { return rotate(v) + trans; }
  CameraPose inverse() const;
  CameraPose compose(const CameraPose& other) const;  // this after other
  bool orthonormal(double tol = 1e-6) const;
  Vec3 optical_axis() const { return {rot[2], rot[5], rot[8]}; }
};

struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int res = 0;
};

struct RayBatch {
  std::vector<Vec3> origins;
  std::vector<Vec3> dirs;  // unit length
  std::vector<double> near, far;
  std::vector<std::uint8_t> hit;  // 0 where the ray misses [-1,1]^3
  std::size_t size() const { return origins.size(); }
};

// Rotation about a unit axis by `angle` radians (Rodrigues).
CameraPose from_axis_angle(const Vec3& axis, double angle);

// Position a camera at `position` looking at `target`; the image-up direction
// is derived from `up_hint` (with a fallback when nearly collinear).
CameraPose look_at(const Vec3& position, const Vec3& target,
                   const Vec3& up_hint = {0, 1, 0});

// target expressed in the canonical view's camera frame: canonical^-1 o target.
CameraPose relative_pose(const CameraPose& canonical, const CameraPose& target);

// Unit world-space direction through continuous pixel coordinates (px, py).
Vec3 pixel_ray_direction(const CameraPose& pose, const Intrinsics& K, double px,
                         double py);

// One ray per pixel center; near/far from intersection with [-1,1]^3.
RayBatch generate_rays(const CameraPose& pose, const Intrinsics& K, int res);

// Entry/exit of a ray with [-1,1]^3 clipped to t >= 0; false on miss.
bool ray_aabb(const Vec3& origin, const Vec3& dir, double& t_near,
              double& t_far);

// Rotation composed with a random axis-angle (angle ~ |N(0, sigma_rot)|),
// translation shifted by N(0, sigma_trans) along a random unit direction.
CameraPose perturb_pose(const CameraPose& pose, double sigma_rot,
                        double sigma_trans, util::Rng& rng);

// Euclidean distances from points to the infinite line through the ray.
std::vector<double> point_to_ray_distance(const std::vector<Vec3>& points,
                                          const Vec3& origin, const Vec3& dir);

}  // namespace voxlift::geom
