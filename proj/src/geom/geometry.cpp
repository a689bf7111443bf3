#include "voxlift/geom/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace voxlift::geom {

double Vec3::norm() const { return std::sqrt(dot(*this)); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n == 0) throw std::invalid_argument("cannot normalize a zero vector");
  return *this * (1.0 / n);
}

Vec3 CameraPose::rotate(const Vec3& v) const {
  return {rot[0] * v.x + rot[1] * v.y + rot[2] * v.z,
          rot[3] * v.x + rot[4] * v.y + rot[5] * v.z,
          rot[6] * v.x + rot[7] * v.y + rot[8] * v.z};
}

Vec3 CameraPose::rotate_transposed(const Vec3& v) const {
  return {rot[0] * v.x + rot[3] * v.y + rot[6] * v.z,
          rot[1] * v.x + rot[4] * v.y + rot[7] * v.z,
          rot[2] * v.x + rot[5] * v.y + rot[8] * v.z};
}

CameraPose CameraPose::inverse() const {
  CameraPose inv;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inv.rot[static_cast<size_t>(i * 3 + j)] = rot[static_cast<size_t>(j * 3 + i)];
  const Vec3 it = inv.rotate(trans);
  inv.trans = {-it.x, -it.y, -it.z};
  return inv;
}

CameraPose CameraPose::compose(const CameraPose& other) const {
  CameraPose out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int l = 0; l < 3; ++l)
        acc += rot[static_cast<size_t>(i * 3 + l)] * other.rot[static_cast<size_t>(l * 3 + j)];
      out.rot[static_cast<size_t>(i * 3 + j)] = acc;
    }
  out.trans = rotate(other.trans) + trans;
  return out;
}

bool CameraPose::orthonormal(double tol) const {
  // R^T R = I
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int l = 0; l < 3; ++l)
        acc += rot[static_cast<size_t>(l * 3 + i)] * rot[static_cast<size_t>(l * 3 + j)];
      if (std::abs(acc - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  const double det =
      rot[0] * (rot[4] * rot[8] - rot[5] * rot[7]) -
      rot[1] * (rot[3] * rot[8] - rot[5] * rot[6]) +
      rot[2] * (rot[3] * rot[7] - rot[4] * rot[6]);
  return std::abs(det - 1.0) <= tol;
}

CameraPose from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 u = axis.normalized();
  const double c = std::cos(angle), s = std::sin(angle), ic = 1.0 - c;
  CameraPose p;
  p.rot = {c + u.x * u.x * ic,        u.x * u.y * ic - u.z * s, u.x * u.z * ic + u.y * s,
           u.y * u.x * ic + u.z * s,  c + u.y * u.y * ic,       u.y * u.z * ic - u.x * s,
           u.z * u.x * ic - u.y * s,  u.z * u.y * ic + u.x * s, c + u.z * u.z * ic};
  return p;
}

CameraPose look_at(const Vec3& position, const Vec3& target, const Vec3& up_hint) {
  const Vec3 forward = (target - position).normalized();
  Vec3 hint = up_hint;
  if (std::abs(forward.dot(hint.normalized())) > 0.99) hint = {1, 0, 0};
  const Vec3 right = hint.cross(forward).normalized();
  const Vec3 down = forward.cross(right);  // y axis (image down)
  CameraPose p;
  p.rot = {right.x, down.x, forward.x,
           right.y, down.y, forward.y,
           right.z, down.z, forward.z};
  p.trans = position;
  return p;
}

CameraPose relative_pose(const CameraPose& canonical, const CameraPose& target) {
  return canonical.inverse().compose(target);
}

Vec3 pixel_ray_direction(const CameraPose& pose, const Intrinsics& K, double px,
                         double py) {
  const Vec3 cam_dir{(px - K.cx) / K.fx, (py - K.cy) / K.fy, 1.0};
  return pose.rotate(cam_dir).normalized();
}

bool ray_aabb(const Vec3& origin, const Vec3& dir, double& t_near,
              double& t_far) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  const double o[3] = {origin.x, origin.y, origin.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < -1.0 || o[a] > 1.0) return false;
      continue;
    }
    double ta = (-1.0 - o[a]) / d[a];
    double tb = (1.0 - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 <= t0) return false;
  t_near = t0;
  t_far = t1;
  return true;
}

RayBatch generate_rays(const CameraPose& pose, const Intrinsics& K, int res) {
  RayBatch batch;
  const auto n = static_cast<size_t>(res) * static_cast<size_t>(res);
  batch.origins.reserve(n);
  batch.dirs.reserve(n);
  batch.near.reserve(n);
  batch.far.reserve(n);
  batch.hit.reserve(n);
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const Vec3 dir = pixel_ray_direction(pose, K, j + 0.5, i + 0.5);
      double t0 = 0, t1 = 0;
      const bool hit = ray_aabb(pose.trans, dir, t0, t1);
      batch.origins.push_back(pose.trans);
      batch.dirs.push_back(dir);
      batch.near.push_back(hit ? t0 : 0.0);
      batch.far.push_back(hit ? t1 : 0.0);
      batch.hit.push_back(hit ? 1 : 0);
    }
  }
  return batch;
}

CameraPose perturb_pose(const CameraPose& pose, double sigma_rot,
                        double sigma_trans, util::Rng& rng) {
  if (sigma_rot < 0 || sigma_trans < 0)
    throw std::invalid_argument("perturb_pose: sigmas must be >= 0");
  auto random_unit = [&rng] {
    while (true) {
      Vec3 v{rng.normal(), rng.normal(), rng.normal()};
      if (v.norm() > 1e-9) return v.normalized();
    }
  };
  CameraPose out = pose;
  const Vec3 axis = random_unit();
  const double angle = std::abs(rng.normal(0.0, 1.0)) * sigma_rot;
  const Vec3 shift_dir = random_unit();
  const double shift = rng.normal(0.0, 1.0) * sigma_trans;
  if (sigma_rot > 0) out = out.compose(from_axis_angle(axis, angle));
  if (sigma_trans > 0) out.trans = out.trans + shift_dir * shift;
  return out;
}

std::vector<double> point_to_ray_distance(const std::vector<Vec3>& points,
                                          const Vec3& origin, const Vec3& dir) {
  const Vec3 d = dir.normalized();
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const Vec3 rel = p - origin;
    const Vec3 perp = rel - d * rel.dot(d);
    out.push_back(perp.norm());
  }
  return out;
}

}  // namespace voxlift::geom
