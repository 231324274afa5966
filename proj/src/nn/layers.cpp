#include "advbiom/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace advbiom::nn {

Var& ParameterSet::create(const std::string& name, Tensor init) {
  auto [it, inserted] = params_.emplace(name, Var::parameter(std::move(init)));
  if (!inserted) throw std::logic_error("duplicate parameter " + name);
  return it->second;
}

Tensor& ParameterSet::create_buffer(const std::string& name, Tensor init) {
  auto [it, inserted] = buffers_.emplace(name, std::move(init));
  if (!inserted) throw std::logic_error("duplicate buffer " + name);
  return it->second;
}

Var& ParameterSet::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter " + name);
  return it->second;
}

const Var& ParameterSet::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter " + name);
  return it->second;
}

Tensor& ParameterSet::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw std::out_of_range("no buffer " + name);
  return it->second;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

namespace {

Tensor he_normal(Shape shape, int fan_in, double gain, Rng& rng) {
  Tensor t(std::move(shape));
  const double std = gain * std::sqrt(2.0 / fan_in);
  for (auto& v : t.values()) v = std * normal(rng);
  return t;
}

}  // namespace

Conv2d::Conv2d(ParameterSet& ps, const std::string& name, int in, int out, int kernel, int stride_,
               int pad_, Rng& rng, bool with_bias, double gain)
    : stride(stride_), pad(pad_) {
  weight = ps.create(name + ".weight", he_normal({out, in, kernel, kernel}, in * kernel * kernel, gain, rng));
  if (with_bias) bias = ps.create(name + ".bias", Tensor({out}));
}

Linear::Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias) {
  weight = ps.create(name + ".weight", he_normal({out, in}, in, std::sqrt(0.5), rng));
  if (with_bias) bias = ps.create(name + ".bias", Tensor({out}));
}

InstanceNorm2d::InstanceNorm2d(ParameterSet& ps, const std::string& name, int channels) {
  gamma = ps.create(name + ".gamma", Tensor({channels}, 1.0));
  beta = ps.create(name + ".beta", Tensor({channels}));
}

BatchNorm2d::BatchNorm2d(ParameterSet& ps, const std::string& name, int channels) {
  gamma = ps.create(name + ".gamma", Tensor({channels}, 1.0));
  beta = ps.create(name + ".beta", Tensor({channels}));
  running_mean = &ps.create_buffer(name + ".running_mean", Tensor({channels}));
  running_var = &ps.create_buffer(name + ".running_var", Tensor({channels}, 1.0));
}

}  // namespace advbiom::nn
