#include "voxlift/data/scene.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace voxlift::data {

using geom::CameraPose;
using geom::Vec3;

namespace {

constexpr double kContentBound = 0.78;  // keep every primitive inside this ball

const double kPalette[][3] = {
    {0.90, 0.25, 0.21}, {0.22, 0.56, 0.92}, {0.27, 0.77, 0.36},
    {0.95, 0.77, 0.21}, {0.75, 0.32, 0.85}, {0.22, 0.80, 0.78},
    {0.93, 0.47, 0.17}, {0.83, 0.83, 0.85}, {0.55, 0.38, 0.23},
    {0.95, 0.45, 0.65}, {0.45, 0.52, 0.24}, {0.35, 0.37, 0.80},
};
constexpr int kPaletteSize = 12;

enum class PrimKind { kBox, kSphere, kCylinder };

struct Primitive {
  PrimKind kind;
  Vec3 center;
  Vec3 half;  // box half extents / (radius, radius, half_height) / sphere r
  CameraPose orient;  // rotation only
  Vec3 color;

  bool contains(const Vec3& world) const {
    const Vec3 local = orient.rotate_transposed(world - center);
    switch (kind) {
      case PrimKind::kBox:
        return std::abs(local.x) <= half.x && std::abs(local.y) <= half.y &&
               std::abs(local.z) <= half.z;
      case PrimKind::kSphere:
        return local.dot(local) <= half.x * half.x;
      case PrimKind::kCylinder:
        return local.x * local.x + local.y * local.y <= half.x * half.x &&
               std::abs(local.z) <= half.z;
    }
    return false;
  }

  double bound_radius() const {
    switch (kind) {
      case PrimKind::kBox:
        return half.norm();
      case PrimKind::kSphere:
        return half.x;
      case PrimKind::kCylinder:
        return std::sqrt(half.x * half.x + half.z * half.z);
    }
    return 0;
  }
};

Vec3 random_unit(util::Rng& rng) {
  while (true) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    if (v.norm() > 1e-9) return v.normalized();
  }
}

Primitive sample_primitive(util::Rng& rng, const Vec3& anchor, double max_span) {
  Primitive p;
  const int kind = static_cast<int>(rng.below(3));
  p.kind = static_cast<PrimKind>(kind);
  switch (p.kind) {
    case PrimKind::kBox:
      p.half = {rng.uniform(0.10, 0.30), rng.uniform(0.10, 0.30),
                rng.uniform(0.10, 0.30)};
      break;
    case PrimKind::kSphere: {
      const double r = rng.uniform(0.12, 0.32);
      p.half = {r, r, r};
      break;
    }
    case PrimKind::kCylinder:
      p.half = {rng.uniform(0.10, 0.25), 0.0, rng.uniform(0.15, 0.35)};
      p.half.y = p.half.x;
      break;
  }
  p.orient = geom::from_axis_angle(random_unit(rng), rng.uniform(0, std::numbers::pi));
  const double room = std::max(0.0, max_span - p.bound_radius());
  const double dist = room * std::cbrt(rng.uniform());
  p.center = anchor + random_unit(rng) * dist;
  const int ci = static_cast<int>(rng.below(kPaletteSize));
  p.color = {kPalette[ci][0], kPalette[ci][1], kPalette[ci][2]};
  return p;
}

std::vector<Primitive> sample_scene_primitives(const SceneSpec& spec,
                                               util::Rng& rng) {
  std::vector<Primitive> prims;
  if (spec.preset == "dot") {
    Primitive dot;
    dot.kind = PrimKind::kSphere;
    const double voxel = 2.0 / static_cast<double>(spec.grid_res - 1);
    dot.half = {voxel, voxel, voxel};  // 1-voxel radius
    dot.orient = CameraPose::identity();
    dot.center = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                  rng.uniform(-0.5, 0.5)};
    dot.color = {1.0, 1.0, 1.0};
    prims.push_back(dot);
    return prims;
  }
  const int budget =
      spec.min_primitives +
      static_cast<int>(rng.below(
          static_cast<std::uint64_t>(spec.max_primitives - spec.min_primitives + 1)));
  int emitted = 0;
  while (emitted < budget) {
    // occasionally a composite: a small cluster sharing one anchor
    const bool composite = rng.uniform() < 0.25 && budget - emitted >= 2;
    if (composite) {
      const Vec3 anchor = random_unit(rng) * (kContentBound - 0.45) *
                          std::cbrt(rng.uniform());
      const int parts = 2 + static_cast<int>(rng.below(2));
      for (int s = 0; s < parts && emitted < budget; ++s, ++emitted) {
        Primitive p = sample_primitive(rng, anchor, 0.18);
        prims.push_back(p);
      }
    } else {
      prims.push_back(sample_primitive(rng, {0, 0, 0}, kContentBound));
      ++emitted;
    }
  }
  return prims;
}

}  // namespace

geom::Intrinsics make_intrinsics(const SceneSpec& spec) {
  geom::Intrinsics K;
  K.res = spec.res;
  K.fx = K.fy = spec.focal_scale * spec.res;
  K.cx = K.cy = spec.res / 2.0;
  return K;
}

SceneRecord make_scene(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.grid_res < 2) throw std::invalid_argument("grid_res must be >= 2");
  util::Rng rng(util::Rng::derive(seed, 0));
  const auto prims = sample_scene_primitives(spec, rng);

  SceneRecord scene;
  scene.seed = seed;
  scene.intrinsics = make_intrinsics(spec);
  const std::int64_t G = spec.grid_res;
  scene.occupancy = Tensor::zeros({G, G, G}, core::DType::kF32);
  scene.albedo = Tensor::zeros({G, G, G, 3}, core::DType::kF32);

  // Grid nodes follow the sampler's align-corners convention.
  auto node = [G](std::int64_t i) {
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(G - 1);
  };
  for (std::int64_t i = 0; i < G; ++i)
    for (std::int64_t j = 0; j < G; ++j)
      for (std::int64_t l = 0; l < G; ++l) {
        const Vec3 world{node(i), node(j), node(l)};
        for (const auto& p : prims) {
          if (!p.contains(world)) continue;
          const std::int64_t flat = (i * G + j) * G + l;
          scene.occupancy.set(flat, 1.0);
          scene.albedo.set(flat * 3 + 0, p.color.x);
          scene.albedo.set(flat * 3 + 1, p.color.y);
          scene.albedo.set(flat * 3 + 2, p.color.z);
          break;  // first primitive wins
        }
      }
  return scene;
}

std::vector<CameraPose> sample_cameras(std::uint64_t seed, int k,
                                       double radius_min, double radius_max) {
  if (k < 1) throw std::invalid_argument("sample_cameras: k must be >= 1");
  util::Rng rng(util::Rng::derive(seed, 1));
  std::vector<CameraPose> poses;
  poses.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double radius = rng.uniform(radius_min, radius_max);
    const Vec3 pos = Vec3{rxy * std::cos(phi), rxy * std::sin(phi), z} * radius;
    poses.push_back(geom::look_at(pos, {0, 0, 0}));
  }
  return poses;
}

std::pair<Tensor, Tensor> oracle_render(const SceneRecord& scene,
                                        const CameraPose& pose,
                                        const geom::Intrinsics& K, int res,
                                        double sigma_max, int n_samples) {
  core::NoGradGuard no_grad;
  render::RadianceField field;
  field.sigma = core::mul_scalar(scene.occupancy, sigma_max);
  field.feat = scene.albedo;
  render::VolumeFrame frame;
  frame.world_frame = true;  // ground-truth grids live on [-1,1]^3 world
  render::SampleConfig cfg;
  cfg.n_samples = n_samples;
  auto [featmap, alpha] = render::render_features(field, pose, K, res, frame, cfg);

  Tensor mask = Tensor::zeros({res, res}, core::DType::kF32);
  for (std::int64_t i = 0; i < mask.numel(); ++i)
    mask.set(i, alpha.at(i) > 0.5 ? 1.0 : 0.0);
  return {featmap, mask};
}

SceneRecord synthesize_scene(const SceneSpec& spec, std::uint64_t seed) {
  SceneRecord scene = make_scene(spec, seed);
  const auto poses =
      sample_cameras(seed, spec.k, spec.radius_min, spec.radius_max);
  for (const auto& pose : poses) {
    SceneView view;
    view.pose = pose;
    auto [image, mask] = oracle_render(scene, pose, scene.intrinsics, spec.res,
                                       spec.sigma_max, spec.oracle_samples);
    view.image = image;
    view.mask = mask;
    scene.views.push_back(std::move(view));
  }
  return scene;
}

geom::Vec3 occupancy_centroid(const SceneRecord& scene) {
  const std::int64_t G = scene.occupancy.dim(0);
  auto node = [G](std::int64_t i) {
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(G - 1);
  };
  Vec3 acc{0, 0, 0};
  double count = 0;
  for (std::int64_t i = 0; i < G; ++i)
    for (std::int64_t j = 0; j < G; ++j)
      for (std::int64_t l = 0; l < G; ++l)
        if (scene.occupancy.at((i * G + j) * G + l) > 0.5) {
          acc = acc + Vec3{node(i), node(j), node(l)};
          count += 1;
        }
  if (count == 0) throw std::runtime_error("occupancy_centroid: empty scene");
  return acc * (1.0 / count);
}

}  // namespace voxlift::data
