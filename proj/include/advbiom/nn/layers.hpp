#pragma once

#include <map>
#include <string>

#include "advbiom/core/random.hpp"
#include "advbiom/nn/ops.hpp"

namespace advbiom::nn {

/// Named trainable parameters plus non-trainable buffers (batch-norm statistics).
/// Entries live in ordered maps, so references stay valid and iteration order is
/// stable across runs.
class ParameterSet {
 public:
  Var& create(const std::string& name, Tensor init);
  Tensor& create_buffer(const std::string& name, Tensor init);

  Var& param(const std::string& name);
  const Var& param(const std::string& name) const;
  Tensor& buffer(const std::string& name);

  std::map<std::string, Var>& params() { return params_; }
  const std::map<std::string, Var>& params() const { return params_; }
  std::map<std::string, Tensor>& buffers() { return buffers_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::map<std::string, Var> params_;
  std::map<std::string, Tensor> buffers_;
};

/// He-normal weights scaled by `gain`, zero bias.
struct Conv2d {
  Var weight, bias;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParameterSet& ps, const std::string& name, int in, int out, int kernel, int stride,
         int pad, Rng& rng, bool with_bias = true, double gain = 1.0);
  Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct Linear {
  Var weight, bias;

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias = true);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
};

struct InstanceNorm2d {
  Var gamma, beta;

  InstanceNorm2d() = default;
  InstanceNorm2d(ParameterSet& ps, const std::string& name, int channels);
  Var operator()(const Var& x) const { return instance_norm(x, gamma, beta); }
};

struct BatchNorm2d {
  Var gamma, beta;
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;

  BatchNorm2d() = default;
  BatchNorm2d(ParameterSet& ps, const std::string& name, int channels);
  Var operator()(const Var& x, bool training) const {
    return batch_norm(x, gamma, beta, *running_mean, *running_var, training);
  }
};

}  // namespace advbiom::nn
