#pragma once

#include <utility>

#include "voxlift/core/ops.hpp"
#include "voxlift/geom/geometry.hpp"
#include "voxlift/nn/layers.hpp"
#include "voxlift/util/rng.hpp"

namespace voxlift::render {

using core::Tensor;

// Density grid plus view-independent appearance features.
struct RadianceField {
  Tensor sigma;  // [H',W',D'], >= 0
  Tensor feat;   // [H',W',D',C]
};

// Where the [-1,1]^3 render box sits. In the default (canonical-camera) mode
// volume coordinates are the canonical camera frame shifted forward by
// depth_offset and shrunk by scale; in world mode they are world coordinates.
struct VolumeFrame {
  double scale = 1.1;
  double depth_offset = 2.3;
  bool world_frame = false;
};

// Camera pose re-expressed in volume coordinates. `pose` is relative to the
// canonical camera (or absolute when the frame is world mode).
geom::CameraPose volume_camera(const geom::CameraPose& pose,
                               const VolumeFrame& frame);

struct SampleConfig {
  int n_samples = 32;
  bool stratified = false;
  std::uint64_t jitter_seed = 0;
};

struct RenderOutput {
  Tensor image;    // [res,res,3] in [0,1]
  Tensor mask;     // [res,res] in [0,1]
  Tensor featmap;  // [res,res,C]
};

// Alpha compositing along each ray. weights w_i = T_i (1 - exp(-sigma_i d_i))
// with T_i the transmittance before sample i; deltas are constants.
Tensor composite_features(const Tensor& sigma, const Tensor& feats,
                          const Tensor& deltas);  // [R,S],[R,S,C],[R,S]->[R,C]
Tensor composite_alpha(const Tensor& sigma, const Tensor& deltas);  // ->[R]

// Feature map + accumulated alpha, no RGB readout. Rays that miss the box
// contribute exact zeros.
std::pair<Tensor, Tensor> render_features(const RadianceField& field,
                                          const geom::CameraPose& pose,
                                          const geom::Intrinsics& K, int res,
                                          const VolumeFrame& frame,
                                          const SampleConfig& samples);

// Two 3x3 convolutions and a sigmoid turn the feature map into RGB.
struct RgbReadout {
  nn::Conv2dLayer conv1, conv2;
  static RgbReadout init(std::int64_t channels, util::Rng& rng, core::DType dtype);
  Tensor operator()(const Tensor& featmap) const;
  void collect(const std::string& prefix, nn::ParamMap& params) const;
};

RenderOutput render(const RadianceField& field, const geom::CameraPose& pose,
                    const geom::Intrinsics& K, int res, const VolumeFrame& frame,
                    const SampleConfig& samples, const RgbReadout& readout);

// Alpha channel only; skips feature sampling and the readout entirely.
Tensor mask_render(const RadianceField& field, const geom::CameraPose& pose,
                   const geom::Intrinsics& K, int res, const VolumeFrame& frame,
                   const SampleConfig& samples);

}  // namespace voxlift::render
