#include "voxlift/core/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace voxlift::core {

AdamW::AdamW(std::vector<ParamGroup> groups, AdamWConfig config)
    : groups_(std::move(groups)), config_(config) {
  for (const auto& g : groups_)
    for (const auto& p : g.params) {
      if (!p.requires_grad())
        throw std::invalid_argument("AdamW: parameter without requires_grad");
      m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
      v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

void AdamW::step(double lr_scale) {
  // Validate every gradient before touching any parameter.
  for (const auto& g : groups_)
    for (const auto& p : g.params) {
      if (!p.has_grad()) continue;
      const Node* n = p.node();
      const std::int64_t count = p.numel();
      for (std::int64_t i = 0; i < count; ++i) {
        const double gv = n->dtype == DType::kF32
                              ? static_cast<double>(n->grad_f32[static_cast<size_t>(i)])
                              : n->grad_f64[static_cast<size_t>(i)];
        if (!std::isfinite(gv))
          throw std::runtime_error(
              "AdamW: non-finite gradient encountered; step aborted");
      }
    }

  t_ += 1;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));

  size_t slot = 0;
  for (const auto& g : groups_) {
    const double lr = g.peak_lr * lr_scale;
    for (const auto& p : g.params) {
      auto& m = m_[slot];
      auto& v = v_[slot];
      ++slot;
      Node* n = p.node();
      const std::int64_t count = p.numel();
      const bool has_grad = p.has_grad();
      for (std::int64_t i = 0; i < count; ++i) {
        const size_t ui = static_cast<size_t>(i);
        const double gv =
            !has_grad ? 0.0
            : (n->dtype == DType::kF32 ? static_cast<double>(n->grad_f32[ui])
                                       : n->grad_f64[ui]);
        m[ui] = config_.beta1 * m[ui] + (1.0 - config_.beta1) * gv;
        v[ui] = config_.beta2 * v[ui] + (1.0 - config_.beta2) * gv * gv;
        const double mhat = m[ui] / bc1;
        const double vhat = v[ui] / bc2;
        const double pv = p.at(i);
        const double updated =
            pv - lr * (mhat / (std::sqrt(vhat) + config_.eps) +
                       config_.weight_decay * pv);
        n->dtype == DType::kF32
            ? void(n->data_f32[ui] = static_cast<float>(updated))
            : void(n->data_f64[ui] = updated);
      }
    }
  }
}

void AdamW::zero_grad() {
  for (auto& g : groups_)
    for (auto& p : g.params) p.zero_grad();
}

double lr_schedule_scale(std::int64_t step, std::int64_t warmup,
                         std::int64_t total, LrSchedule schedule) {
  if (warmup > 0 && step < warmup)
    return static_cast<double>(step) / static_cast<double>(warmup);
  if (schedule == LrSchedule::kWarmupConstant) return 1.0;
  const std::int64_t span = std::max<std::int64_t>(total - warmup, 1);
  const double frac = static_cast<double>(step - warmup) / static_cast<double>(span);
  return std::max(0.0, 1.0 - frac);
}

}  // namespace voxlift::core
