#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxlift/core/tensor.hpp"
#include "voxlift/geom/geometry.hpp"
#include "voxlift/render/renderer.hpp"

namespace voxlift::data {

using core::Tensor;

// Procedural stand-in for the photographic datasets: unions of colored
// primitives rasterized into occupancy/albedo grids over [-1,1]^3 world,
// viewed by cameras on a spherical shell around the origin.
struct SceneSpec {
  int res = 32;            // rendered image resolution
  int k = 6;               // views generated per scene
  int grid_res = 64;       // ground-truth grid resolution
  int min_primitives = 2;
  int max_primitives = 5;
  double radius_min = 2.1;  // camera distance range
  double radius_max = 2.5;
  double focal_scale = 1.1;  // fx = fy = focal_scale * res
  std::string preset = "shapes";  // "shapes" | "dot"
  double sigma_max = 200.0;       // oracle density inside occupied space
  int oracle_samples = 192;
};

struct SceneView {
  Tensor image;  // [res,res,3] in [0,1]
  Tensor mask;   // [res,res] binary
  geom::CameraPose pose;
};

struct SceneRecord {
  std::uint64_t seed = 0;
  geom::Intrinsics intrinsics;
  std::vector<SceneView> views;
  Tensor occupancy;  // [G,G,G] binary at grid nodes
  Tensor albedo;     // [G,G,G,3]
};

geom::Intrinsics make_intrinsics(const SceneSpec& spec);

// Geometry only: rasterized occupancy + albedo, deterministic per seed.
SceneRecord make_scene(const SceneSpec& spec, std::uint64_t seed);

// Positions uniform on a shell with ||p|| in the radius range, aimed at the
// origin; deterministic per seed.
std::vector<geom::CameraPose> sample_cameras(std::uint64_t seed, int k,
                                             double radius_min,
                                             double radius_max);

// Renders ground-truth grids through the shared compositing path (density =
// occupancy * sigma_max, color = albedo, flat shading).
std::pair<Tensor, Tensor> oracle_render(const SceneRecord& scene,
                                        const geom::CameraPose& pose,
                                        const geom::Intrinsics& K, int res,
                                        double sigma_max, int n_samples);

// make_scene + cameras + oracle views.
SceneRecord synthesize_scene(const SceneSpec& spec, std::uint64_t seed);

// World-space centroid of the occupied nodes (probe target for dot scenes).
geom::Vec3 occupancy_centroid(const SceneRecord& scene);

}  // namespace voxlift::data
