#pragma once

#include <map>
#include <string>

#include "advbiom/nn/layers.hpp"

namespace advbiom::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// Adam over every parameter of a ParameterSet. Parameters without a gradient this
/// step are left untouched (their moments do not decay either).
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig cfg);

  void step();
  long step_count() const { return t_; }

  const AdamConfig& config() const { return cfg_; }
  /// Moment buffers keyed "<param>.m" / "<param>.v", for checkpointing.
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& state, long step_count);

 private:
  ParameterSet* params_;
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace advbiom::nn
