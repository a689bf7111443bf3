#pragma once

#include <string>

#include <json.hpp>

#include "voxlift/render/renderer.hpp"

namespace voxlift::model {

enum class ModelKind { kPoseFree, kProjection };
enum class EncoderMode { kFull, kGcrOnly, kNvuOnly, kNone };

const char* to_string(ModelKind kind);
const char* to_string(EncoderMode mode);
ModelKind model_kind_from_string(const std::string& s);
EncoderMode encoder_mode_from_string(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::kPoseFree;
  int k_views = 3;
  int image_res = 32;
  int patch = 4;
  int width = 64;  // token/volume channel width
  int heads = 4;
  int ffn_mult = 4;
  int n_base = 2;  // backbone self-attention depth
  int n_e = 2;     // multi-view encoder blocks
  int n_m = 4;     // 2D-3D mapping blocks
  int volume_dim = 8;
  int feat_channels = 8;  // radiance feature width C
  int n_samples = 32;     // ray samples at render time
  EncoderMode encoder_mode = EncoderMode::kFull;
  render::VolumeFrame frame;

  int field_dim() const { return 4 * volume_dim; }  // two x2 upsample stages
  std::int64_t tokens_per_view() const {
    const auto g = static_cast<std::int64_t>(image_res / patch);
    return g * g;
  }
  std::int64_t voxel_tokens() const {
    const auto v = static_cast<std::int64_t>(volume_dim);
    return v * v * v;
  }

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

}  // namespace voxlift::model
