#pragma once

#include <vector>

#include "voxlift/geom/geometry.hpp"
#include "voxlift/model/model.hpp"

// Pose-BASED baseline: voxel features come from averaging bilinear samples of
// per-view token grids at each voxel's pinhole projection. Only the 2D-3D
// mapping differs from the pose-free model; encoder, decoder and renderer are
// the same machinery.

namespace voxlift::model {

struct Projected {
  double px = 0, py = 0;
  bool valid = false;  // false when behind the camera or outside the image
};

// X is in the canonical camera frame; view_pose is that view's camera-to-
// canonical transform.
Projected project_point(const geom::Vec3& x_canonical,
                        const geom::CameraPose& view_pose,
                        const geom::Intrinsics& K);

// Mean of valid per-view bilinear samples for every voxel center; zeros when
// no view sees the voxel. Token grids are [h,w,c]; poses are camera-to-
// canonical per view.
Tensor aggregate_projected(const std::vector<geom::Vec3>& voxel_centers,
                           const std::vector<Tensor>& view_token_grids,
                           const std::vector<geom::CameraPose>& view_poses,
                           const geom::Intrinsics& K);

// Voxel node centers of the latent volume in the canonical camera frame.
std::vector<geom::Vec3> volume_voxel_centers(const ModelConfig& cfg);

class ProjectionModel {
 public:
  ProjectionModel(ModelConfig cfg, std::uint64_t seed,
                  core::DType dtype = core::DType::kF32);

  // `view_poses` are the absolute camera poses handed to the aggregation —
  // the experiment knob for pose-noise runs. Supervision poses stay with the
  // caller.
  render::RadianceField forward(const std::vector<Tensor>& images,
                                const std::vector<geom::CameraPose>& view_poses,
                                const geom::Intrinsics& K, int canonical_index,
                                InspectSink* inspect = nullptr) const;

  const ModelConfig& config() const { return cfg_; }
  const render::RgbReadout& readout() const { return readout_; }

  nn::ParamMap named_params() const;
  std::vector<Tensor> backbone_params() const;
  std::vector<Tensor> other_params() const;

  void save(const std::string& checkpoint_path,
            const std::string& manifest_path) const;
  static ProjectionModel load(const std::string& checkpoint_path,
                              const std::string& manifest_path);

 private:
  ModelConfig cfg_;
  ImageEncoder encoder_;
  nn::LayerNorm mixer_norm_;
  nn::Ffn mixer_;
  VolumeDecoder decoder_;
  render::RgbReadout readout_;
};

}  // namespace voxlift::model
