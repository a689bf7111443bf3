#include "voxlift/render/renderer.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace voxlift::render {

using namespace voxlift::core;

geom::CameraPose volume_camera(const geom::CameraPose& pose,
                               const VolumeFrame& frame) {
  if (frame.world_frame) return pose;
  geom::CameraPose out = pose;
  out.trans = {pose.trans.x / frame.scale, pose.trans.y / frame.scale,
               (pose.trans.z - frame.depth_offset) / frame.scale};
  return out;
}

namespace {

void check_composite_args(const Tensor& sigma, const Tensor& deltas) {
  if (sigma.rank() != 2 || deltas.rank() != 2 || sigma.shape() != deltas.shape())
    throw std::invalid_argument("composite: sigma/deltas must share [R,S]");
  if (deltas.requires_grad())
    throw std::invalid_argument("composite: deltas are constants");
}

}  // namespace

Tensor composite_features(const Tensor& sigma, const Tensor& feats,
                          const Tensor& deltas) {
  check_composite_args(sigma, deltas);
  if (feats.rank() != 3 || feats.dim(0) != sigma.dim(0) ||
      feats.dim(1) != sigma.dim(1))
    throw std::invalid_argument("composite: feats must be [R,S,C]");
  const std::int64_t R = sigma.dim(0), S = sigma.dim(1), C = feats.dim(2);

  Tensor out = make_node(
      {R, C}, sigma.dtype(), {sigma, feats, deltas},
      [sigma, feats, deltas, R, S, C](Node& self) {
        auto run = [&](auto tag) {
          using T = decltype(tag);
          const T* sg = sigma.node()->template data<T>();
          const T* fe = feats.node()->template data<T>();
          const T* de = deltas.node()->template data<T>();
          const T* g = self.grad<T>();
          T* gsig = sigma.requires_grad() ? sigma.node()->template grad<T>() : nullptr;
          T* gfeat = feats.requires_grad() ? feats.node()->template grad<T>() : nullptr;
          std::vector<T> trans(static_cast<size_t>(S));
          for (std::int64_t r = 0; r < R; ++r) {
            const T* gr = g + r * C;
            // transmittance before each sample
            T t_acc = 1;
            for (std::int64_t i = 0; i < S; ++i) {
              trans[static_cast<size_t>(i)] = t_acc;
              t_acc *= std::exp(-sg[r * S + i] * de[r * S + i]);
            }
            T suffix = 0;  // sum_{j>i} G_j w_j
            for (std::int64_t i = S - 1; i >= 0; --i) {
              const T s = sg[r * S + i] * de[r * S + i];
              const T e = std::exp(-s);
              const T w = trans[static_cast<size_t>(i)] * (T(1) - e);
              T gdotf = 0;
              const T* fr = fe + (r * S + i) * C;
              for (std::int64_t c = 0; c < C; ++c) gdotf += gr[c] * fr[c];
              if (gfeat) {
                T* gfr = gfeat + (r * S + i) * C;
                for (std::int64_t c = 0; c < C; ++c) gfr[c] += w * gr[c];
              }
              if (gsig)
                gsig[r * S + i] +=
                    de[r * S + i] *
                    (gdotf * trans[static_cast<size_t>(i)] * e - suffix);
              suffix += gdotf * w;
            }
          }
        };
        self.dtype == DType::kF32 ? run(float{}) : run(double{});
      });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* sg = sigma.node()->template data<T>();
    const T* fe = feats.node()->template data<T>();
    const T* de = deltas.node()->template data<T>();
    T* y = out.node()->template data<T>();
    for (std::int64_t r = 0; r < R; ++r) {
      T t_acc = 1;
      T* yr = y + r * C;
      for (std::int64_t i = 0; i < S; ++i) {
        const T e = std::exp(-sg[r * S + i] * de[r * S + i]);
        const T w = t_acc * (T(1) - e);
        const T* fr = fe + (r * S + i) * C;
        for (std::int64_t c = 0; c < C; ++c) yr[c] += w * fr[c];
        t_acc *= e;
      }
    }
  };
  sigma.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

Tensor composite_alpha(const Tensor& sigma, const Tensor& deltas) {
  check_composite_args(sigma, deltas);
  const std::int64_t R = sigma.dim(0), S = sigma.dim(1);
  Tensor out = make_node({R}, sigma.dtype(), {sigma, deltas},
                         [sigma, deltas, R, S](Node& self) {
                           if (!sigma.requires_grad()) return;
                           auto run = [&](auto tag) {
                             using T = decltype(tag);
                             const T* sg = sigma.node()->template data<T>();
                             const T* de = deltas.node()->template data<T>();
                             const T* g = self.grad<T>();
                             T* gsig = sigma.node()->template grad<T>();
                             for (std::int64_t r = 0; r < R; ++r) {
                               T total = 0;
                               for (std::int64_t i = 0; i < S; ++i)
                                 total += sg[r * S + i] * de[r * S + i];
                               const T t_final = std::exp(-total);
                               for (std::int64_t i = 0; i < S; ++i)
                                 gsig[r * S + i] += g[r] * t_final * de[r * S + i];
                             }
                           };
                           self.dtype == DType::kF32 ? run(float{}) : run(double{});
                         });
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* sg = sigma.node()->template data<T>();
    const T* de = deltas.node()->template data<T>();
    T* y = out.node()->template data<T>();
    for (std::int64_t r = 0; r < R; ++r) {
      // alpha = 1 - prod exp(-s_i): stays in [0,1] by construction
      T t_acc = 1;
      for (std::int64_t i = 0; i < S; ++i)
        t_acc *= std::exp(-sg[r * S + i] * de[r * S + i]);
      y[r] = T(1) - t_acc;
    }
  };
  sigma.dtype() == DType::kF32 ? fwd(float{}) : fwd(double{});
  return out;
}

namespace {

struct RaySamples {
  Tensor points;  // [R*S, 3] constants
  Tensor deltas;  // [R,S] constants
};

RaySamples sample_rays(const geom::CameraPose& pose_vol,
                       const geom::Intrinsics& K, int res,
                       const SampleConfig& cfg, DType dtype) {
  const geom::RayBatch rays = geom::generate_rays(pose_vol, K, res);
  const std::int64_t R = static_cast<std::int64_t>(rays.size());
  const std::int64_t S = cfg.n_samples;
  RaySamples out;
  out.points = Tensor::zeros({R * S, 3}, dtype);
  out.deltas = Tensor::zeros({R, S}, dtype);
  util::Rng jitter(cfg.jitter_seed);
  for (std::int64_t r = 0; r < R; ++r) {
    if (!rays.hit[static_cast<size_t>(r)]) {
      if (cfg.stratified)
        for (std::int64_t i = 0; i < S; ++i) jitter.uniform();
      continue;  // points at origin with delta 0 contribute exactly nothing
    }
    const double near = rays.near[static_cast<size_t>(r)];
    const double far = rays.far[static_cast<size_t>(r)];
    const double step = (far - near) / static_cast<double>(S);
    const auto& o = rays.origins[static_cast<size_t>(r)];
    const auto& d = rays.dirs[static_cast<size_t>(r)];
    for (std::int64_t i = 0; i < S; ++i) {
      const double u = cfg.stratified ? jitter.uniform() : 0.5;
      const double t = near + (static_cast<double>(i) + u) * step;
      out.points.set((r * S + i) * 3 + 0, o.x + t * d.x);
      out.points.set((r * S + i) * 3 + 1, o.y + t * d.y);
      out.points.set((r * S + i) * 3 + 2, o.z + t * d.z);
      out.deltas.set(r * S + i, step);
    }
  }
  return out;
}

}  // namespace

std::pair<Tensor, Tensor> render_features(const RadianceField& field,
                                          const geom::CameraPose& pose,
                                          const geom::Intrinsics& K, int res,
                                          const VolumeFrame& frame,
                                          const SampleConfig& samples) {
  if (field.sigma.rank() != 3 || field.feat.rank() != 4)
    throw std::invalid_argument("render: field must be sigma[H,W,D], feat[H,W,D,C]");
  const std::int64_t H = field.sigma.dim(0), W = field.sigma.dim(1),
                     D = field.sigma.dim(2), C = field.feat.dim(3);
  const geom::CameraPose pose_vol = volume_camera(pose, frame);
  const RaySamples rs = sample_rays(pose_vol, K, res, samples, field.sigma.dtype());
  const std::int64_t R = static_cast<std::int64_t>(res) * res;
  const std::int64_t S = samples.n_samples;

  Tensor sig_samples = reshape(
      trilinear_sample(reshape(field.sigma, {H, W, D, 1}), rs.points), {R, S});
  Tensor feat_samples =
      reshape(trilinear_sample(field.feat, rs.points), {R, S, C});
  Tensor featvec = composite_features(sig_samples, feat_samples, rs.deltas);
  Tensor alpha = composite_alpha(sig_samples, rs.deltas);
  return {reshape(featvec, {res, res, C}), reshape(alpha, {res, res})};
}

RgbReadout RgbReadout::init(std::int64_t channels, util::Rng& rng,
                            core::DType dtype) {
  RgbReadout r;
  r.conv1 = nn::Conv2dLayer::init(3, channels, channels, rng, dtype);
  r.conv2 = nn::Conv2dLayer::init(3, channels, 3, rng, dtype);
  return r;
}

Tensor RgbReadout::operator()(const Tensor& featmap) const {
  return sigmoid(conv2(nn::smooth_act(conv1(featmap))));
}

void RgbReadout::collect(const std::string& prefix, nn::ParamMap& params) const {
  conv1.collect(prefix + ".conv1", params);
  conv2.collect(prefix + ".conv2", params);
}

RenderOutput render(const RadianceField& field, const geom::CameraPose& pose,
                    const geom::Intrinsics& K, int res, const VolumeFrame& frame,
                    const SampleConfig& samples, const RgbReadout& readout) {
  if (readout.conv1.kernel.dim(2) != field.feat.dim(3))
    throw std::invalid_argument("render: readout channels do not match field");
  auto [featmap, alpha] = render_features(field, pose, K, res, frame, samples);
  RenderOutput out;
  out.featmap = featmap;
  out.mask = alpha;
  out.image = readout(featmap);
  return out;
}

Tensor mask_render(const RadianceField& field, const geom::CameraPose& pose,
                   const geom::Intrinsics& K, int res, const VolumeFrame& frame,
                   const SampleConfig& samples) {
  const std::int64_t H = field.sigma.dim(0), W = field.sigma.dim(1),
                     D = field.sigma.dim(2);
  const geom::CameraPose pose_vol = volume_camera(pose, frame);
  const RaySamples rs = sample_rays(pose_vol, K, res, samples, field.sigma.dtype());
  const std::int64_t R = static_cast<std::int64_t>(res) * res;
  Tensor sig_samples = reshape(
      trilinear_sample(reshape(field.sigma, {H, W, D, 1}), rs.points),
      {R, samples.n_samples});
  return reshape(composite_alpha(sig_samples, rs.deltas), {res, res});
}

}  // namespace voxlift::render
