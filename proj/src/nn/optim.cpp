#include "advbiom/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace advbiom::nn {

Adam::Adam(ParameterSet& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
  for (const auto& [name, p] : params.params()) {
    m_.emplace(name, Tensor(p.shape()));
    v_.emplace(name, Tensor(p.shape()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params_->params()) {
    if (!p.has_grad()) continue;
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    const Tensor& g = p.grad();
    Tensor& w = p.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
}

std::map<std::string, Tensor> Adam::state() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, m] : m_) out.emplace(name + ".m", m);
  for (const auto& [name, v] : v_) out.emplace(name + ".v", v);
  return out;
}

void Adam::load_state(const std::map<std::string, Tensor>& state, long step_count) {
  for (auto& [name, m] : m_) {
    auto it = state.find(name + ".m");
    if (it == state.end() || it->second.size() != m.size()) {
      throw std::runtime_error("optimizer state missing or mismatched for " + name);
    }
    m = it->second;
  }
  for (auto& [name, v] : v_) {
    auto it = state.find(name + ".v");
    if (it == state.end() || it->second.size() != v.size()) {
      throw std::runtime_error("optimizer state missing or mismatched for " + name);
    }
    v = it->second;
  }
  t_ = step_count;
}

}  // namespace advbiom::nn
