#pragma once

#include "dctx/autodiff.hpp"

#include <map>
#include <memory>
#include <random>
#include <string>

namespace dctx {

/// Named parameter collection with deterministic initialization.
/// Map is ordered so iteration (init, updates, serialization) is stable.
class ParamSet {
 public:
  explicit ParamSet(uint64_t seed = 0) : rng_(seed), seed_(seed) {}

  /// Glorot-uniform weight matrix; draws from the set's RNG stream.
  Param& add_weight(const std::string& name, long rows, long cols);
  /// Zero-initialized (biases etc.).
  Param& add_zeros(const std::string& name, long rows, long cols);
  Param& add(const std::string& name, Mat value);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const {
    return params_.count(name) > 0;
  }

  void zero_grads();
  uint64_t seed() const { return seed_; }

  std::map<std::string, std::unique_ptr<Param>>& all() { return params_; }
  const std::map<std::string, std::unique_ptr<Param>>& all() const {
    return params_;
  }

 private:
  std::map<std::string, std::unique_ptr<Param>> params_;
  std::mt19937_64 rng_;
  uint64_t seed_;
};

/// Adam with bias correction. Moment tensors are keyed by parameter name and
/// created lazily on first step.
class AdamState {
 public:
  explicit AdamState(double lr = 1e-3, double beta1 = 0.9,
                     double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update from accumulated gradients, then zeroes them.
  void step(ParamSet& params);

  long steps() const { return t_; }
  double lr() const { return lr_; }

 private:
  struct Moments {
    Mat m, v;
  };
  std::map<std::string, Moments> moments_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace dctx
