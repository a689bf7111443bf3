#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxlift/core/tensor.hpp"

namespace voxlift::core {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Parameters sharing a peak learning rate; step() scales every group's peak
// by the schedule factor.
struct ParamGroup {
  std::vector<Tensor> params;
  double peak_lr = 1e-3;
};

class AdamW {
 public:
  AdamW(std::vector<ParamGroup> groups, AdamWConfig config);

  // One decoupled-weight-decay update. Throws std::runtime_error on
  // non-finite gradients (the step is not applied).
  void step(double lr_scale = 1.0);
  void zero_grad();
  std::int64_t step_count() const { return t_; }

 private:
  std::vector<ParamGroup> groups_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;  // state kept in f64
  std::int64_t t_ = 0;
};

enum class LrSchedule { kWarmupConstant, kWarmupLinearDecay };

// Linear warmup from 0 over `warmup` steps, then constant or linear decay to
// zero at `total`. Returns the multiplier applied to each group's peak lr.
double lr_schedule_scale(std::int64_t step, std::int64_t warmup,
                         std::int64_t total, LrSchedule schedule);

}  // namespace voxlift::core
