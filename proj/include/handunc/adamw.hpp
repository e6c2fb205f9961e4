#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace handunc::net {

struct AdamWOptions {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with decoupled weight decay:
///   p <- p * (1 - lr * wd)
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// One moment slot per parameter tensor, addressed by index.
class AdamW {
 public:
  explicit AdamW(AdamWOptions opts) : opts_(opts) {}

  /// Advances the shared step counter; call once per iteration before update().
  void begin_step() {
    ++t_;
    bc1_ = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    bc2_ = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  }

  void update(std::size_t slot, std::span<double> param, std::span<const double> grad) {
    if (slot >= slots_.size()) slots_.resize(slot + 1);
    auto& s = slots_[slot];
    if (s.m.size() != param.size()) {
      s.m.assign(param.size(), 0.0);
      s.v.assign(param.size(), 0.0);
    }
    const double decay = 1.0 - opts_.lr * opts_.weight_decay;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = grad[i];
      s.m[i] = opts_.beta1 * s.m[i] + (1.0 - opts_.beta1) * g;
      s.v[i] = opts_.beta2 * s.v[i] + (1.0 - opts_.beta2) * g * g;
      const double m_hat = s.m[i] / bc1_;
      const double v_hat = s.v[i] / bc2_;
      param[i] = param[i] * decay - opts_.lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
    }
  }

  long steps() const { return t_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamWOptions opts_;
  std::vector<Slot> slots_;
  long t_ = 0;
  double bc1_ = 1.0, bc2_ = 1.0;
};

}  // namespace handunc::net
