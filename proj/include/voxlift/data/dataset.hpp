#pragma once

#include <string>
#include <vector>

#include "voxlift/data/scene.hpp"

// On-disk layout: <root>/scene_%05d/manifest.json plus per-view
// image_%d.vltb / mask_%d.vltb and the ground-truth occupancy.vltb /
// albedo.vltb grids. Poses are row-major 3x4 camera-to-world matrices inside
// the manifest.

namespace voxlift::data {

void write_scene(const SceneRecord& scene, const std::string& dir);
SceneRecord read_scene(const std::string& dir, bool load_grids = true);

void write_dataset(const std::vector<SceneRecord>& scenes,
                   const std::string& root);
std::vector<SceneRecord> read_dataset(const std::string& root,
                                      bool load_grids = true);
std::vector<std::string> list_scene_dirs(const std::string& root);

}  // namespace voxlift::data
