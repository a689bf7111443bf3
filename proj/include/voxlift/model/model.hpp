#pragma once

#include <string>
#include <vector>

#include "voxlift/model/config.hpp"
#include "voxlift/nn/layers.hpp"
#include "voxlift/render/renderer.hpp"

namespace voxlift::model {

using core::Tensor;

// Attention matrices collected during a forward pass (head-averaged, detached).
struct InspectSink {
  std::vector<std::pair<std::string, Tensor>> maps;
};

// Cyclic view order placing the canonical view first.
std::vector<int> rotated_view_order(int k, int canonical_index);

// Patch embedding + per-view backbone + multi-view encoder (NVU/GCR),
// shared between the pose-free model and the projection baseline.
struct ImageEncoder {
  nn::PatchEmbed patch_embed;
  std::vector<nn::TransformerBlock> base_blocks;
  std::vector<nn::TransformerBlock> nvu_blocks;
  std::vector<nn::TransformerBlock> gcr_blocks;
  EncoderMode mode = EncoderMode::kFull;

  static ImageEncoder init(const ModelConfig& cfg, util::Rng& rng,
                           core::DType dtype);

  // Per-view tokens in rotated order (canonical first).
  std::vector<Tensor> encode_views(const std::vector<Tensor>& images,
                                   int canonical_index) const;
  // Alternating NVU/GCR refinement; returns the updated per-view tokens.
  std::vector<Tensor> multi_view_encode(std::vector<Tensor> tokens,
                                        InspectSink* inspect = nullptr) const;

  void collect_backbone(nn::ParamMap& params) const;
  void collect_encoder(nn::ParamMap& params) const;
};

// Upsamples volume tokens to the radiance field with 3D convolutions.
struct VolumeDecoder {
  nn::Conv3dLayer proj;        // 1x1x1, width -> d0
  nn::Conv3dLayer up1, up2;    // 3x3x3 after each nearest-neighbor x2
  nn::Conv3dLayer head_sigma;  // 1x1x1 -> 1, softplus
  nn::Conv3dLayer head_feat;   // 1x1x1 -> C
  static VolumeDecoder init(const ModelConfig& cfg, util::Rng& rng,
                            core::DType dtype);
  render::RadianceField operator()(const Tensor& volume_tokens,
                                   const ModelConfig& cfg) const;
  void collect(nn::ParamMap& params) const;
};

// Pose-free network: images -> tokens -> latent volume -> radiance field.
// No camera pose enters this path; poses matter only when the caller renders
// the returned field.
class PoseFreeModel {
 public:
  PoseFreeModel(ModelConfig cfg, std::uint64_t seed,
                core::DType dtype = core::DType::kF32);

  render::RadianceField forward(const std::vector<Tensor>& images,
                                int canonical_index,
                                InspectSink* inspect = nullptr) const;

  // Mapping stages exposed for tests and probes.
  Tensor map_to_volume(const Tensor& all_tokens,
                       InspectSink* inspect = nullptr) const;

  const ModelConfig& config() const { return cfg_; }
  const ImageEncoder& encoder() const { return encoder_; }
  const render::RgbReadout& readout() const { return readout_; }
  const Tensor& volume() const { return volume_; }

  nn::ParamMap named_params() const;
  std::vector<Tensor> backbone_params() const;
  std::vector<Tensor> other_params() const;

  void save(const std::string& checkpoint_path,
            const std::string& manifest_path) const;
  static PoseFreeModel load(const std::string& checkpoint_path,
                            const std::string& manifest_path);

 private:
  ModelConfig cfg_;
  ImageEncoder encoder_;
  Tensor volume_;  // [H*W*D, width] learnable, shared across scenes
  std::vector<nn::TransformerBlock> map_cross_;
  std::vector<nn::TransformerBlock> map_self_;
  VolumeDecoder decoder_;
  render::RgbReadout readout_;
};

// Copies checkpoint entries into the given parameter map (by name).
void load_params(const std::string& checkpoint_path, nn::ParamMap& params);

}  // namespace voxlift::model
