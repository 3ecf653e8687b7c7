#include "dctx/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dctx {

Param& ParamSet::add(const std::string& name, Mat value) {
  if (params_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>(name, std::move(value));
  Param& ref = *p;
  params_[name] = std::move(p);
  return ref;
}

Param& ParamSet::add_weight(const std::string& name, long rows, long cols) {
  double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat w(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) w(i, j) = u(rng_);
  return add(name, std::move(w));
}

Param& ParamSet::add_zeros(const std::string& name, long rows, long cols) {
  return add(name, Mat::Zero(rows, cols));
}

Param& ParamSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("no such parameter: " + name);
  return *it->second;
}

const Param& ParamSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("no such parameter: " + name);
  return *it->second;
}

void ParamSet::zero_grads() {
  for (auto& [name, p] : params_) p->zero_grad();
}

void AdamState::step(ParamSet& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params.all()) {
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      it = moments_
               .emplace(name, Moments{Mat::Zero(p->value.rows(),
                                                p->value.cols()),
                                      Mat::Zero(p->value.rows(),
                                                p->value.cols())})
               .first;
    }
    Moments& mo = it->second;
    mo.m = beta1_ * mo.m + (1.0 - beta1_) * p->grad;
    mo.v = beta2_ * mo.v.array().matrix() +
           (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    Mat mhat = mo.m / bc1;
    Mat vhat = mo.v / bc2;
    p->value.array() -=
        lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    p->zero_grad();
  }
}

}  // namespace dctx
