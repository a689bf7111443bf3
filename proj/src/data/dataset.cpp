#include "voxlift/data/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "voxlift/core/blob.hpp"

namespace voxlift::data {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json pose_to_json(const geom::CameraPose& pose) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) {
    rows.push_back(pose.rot[static_cast<size_t>(i * 3 + 0)]);
    rows.push_back(pose.rot[static_cast<size_t>(i * 3 + 1)]);
    rows.push_back(pose.rot[static_cast<size_t>(i * 3 + 2)]);
    rows.push_back(i == 0 ? pose.trans.x : (i == 1 ? pose.trans.y : pose.trans.z));
  }
  return rows;
}

geom::CameraPose pose_from_json(const json& rows, const std::string& where) {
  if (!rows.is_array() || rows.size() != 12)
    throw std::runtime_error(where + ": pose must be a row-major 3x4 array");
  geom::CameraPose pose;
  for (int i = 0; i < 3; ++i) {
    pose.rot[static_cast<size_t>(i * 3 + 0)] = rows[static_cast<size_t>(i * 4 + 0)].get<double>();
    pose.rot[static_cast<size_t>(i * 3 + 1)] = rows[static_cast<size_t>(i * 4 + 1)].get<double>();
    pose.rot[static_cast<size_t>(i * 3 + 2)] = rows[static_cast<size_t>(i * 4 + 2)].get<double>();
    const double t = rows[static_cast<size_t>(i * 4 + 3)].get<double>();
    (i == 0 ? pose.trans.x : i == 1 ? pose.trans.y : pose.trans.z) = t;
  }
  return pose;
}

}  // namespace

void write_scene(const SceneRecord& scene, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["seed"] = scene.seed;
  manifest["k"] = scene.views.size();
  manifest["intrinsics"] = {{"fx", scene.intrinsics.fx},
                            {"fy", scene.intrinsics.fy},
                            {"cx", scene.intrinsics.cx},
                            {"cy", scene.intrinsics.cy},
                            {"res", scene.intrinsics.res}};
  json views = json::array();
  for (size_t v = 0; v < scene.views.size(); ++v) {
    char image_name[32], mask_name[32];
    std::snprintf(image_name, sizeof image_name, "image_%zu.vltb", v);
    std::snprintf(mask_name, sizeof mask_name, "mask_%zu.vltb", v);
    core::save_blob((fs::path(dir) / image_name).string(), scene.views[v].image);
    core::save_blob((fs::path(dir) / mask_name).string(), scene.views[v].mask);
    views.push_back({{"pose", pose_to_json(scene.views[v].pose)},
                     {"image", image_name},
                     {"mask", mask_name}});
  }
  manifest["views"] = views;
  core::save_blob((fs::path(dir) / "occupancy.vltb").string(), scene.occupancy);
  core::save_blob((fs::path(dir) / "albedo.vltb").string(), scene.albedo);

  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw std::runtime_error(dir + "/manifest.json: cannot open");
  os << manifest.dump(2) << "\n";
}

SceneRecord read_scene(const std::string& dir, bool load_grids) {
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error(manifest_path + ": cannot open");
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path + ": " + e.what());
  }

  SceneRecord scene;
  scene.seed = manifest.at("seed").get<std::uint64_t>();
  const auto& K = manifest.at("intrinsics");
  scene.intrinsics.fx = K.at("fx").get<double>();
  scene.intrinsics.fy = K.at("fy").get<double>();
  scene.intrinsics.cx = K.at("cx").get<double>();
  scene.intrinsics.cy = K.at("cy").get<double>();
  scene.intrinsics.res = K.at("res").get<int>();

  const auto k = manifest.at("k").get<size_t>();
  const auto& views = manifest.at("views");
  if (!views.is_array() || views.size() != k)
    throw std::runtime_error(manifest_path + ": manifest lists " +
                             std::to_string(k) + " views but has " +
                             std::to_string(views.size()));
  for (const auto& v : views) {
    SceneView view;
    view.pose = pose_from_json(v.at("pose"), manifest_path);
    view.image = core::load_blob(
        (fs::path(dir) / v.at("image").get<std::string>()).string());
    view.mask = core::load_blob(
        (fs::path(dir) / v.at("mask").get<std::string>()).string());
    if (view.image.rank() != 3 || view.image.dim(2) != 3 ||
        view.image.dim(0) != scene.intrinsics.res)
      throw std::runtime_error(manifest_path + ": image shape mismatch for " +
                               v.at("image").get<std::string>());
    scene.views.push_back(std::move(view));
  }
  if (load_grids) {
    scene.occupancy = core::load_blob((fs::path(dir) / "occupancy.vltb").string());
    scene.albedo = core::load_blob((fs::path(dir) / "albedo.vltb").string());
  }
  return scene;
}

void write_dataset(const std::vector<SceneRecord>& scenes,
                   const std::string& root) {
  fs::create_directories(root);
  for (size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%05zu", i);
    write_scene(scenes[i], (fs::path(root) / name).string());
  }
}

std::vector<std::string> list_scene_dirs(const std::string& root) {
  std::vector<std::string> dirs;
  if (!fs::is_directory(root))
    throw std::runtime_error(root + ": dataset directory does not exist");
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() &&
        entry.path().filename().string().rfind("scene_", 0) == 0)
      dirs.push_back(entry.path().string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<SceneRecord> read_dataset(const std::string& root, bool load_grids) {
  std::vector<SceneRecord> scenes;
  for (const auto& dir : list_scene_dirs(root))
    scenes.push_back(read_scene(dir, load_grids));
  return scenes;
}

}  // namespace voxlift::data
