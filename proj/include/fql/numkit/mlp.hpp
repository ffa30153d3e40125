#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fql/numkit/tape.hpp"
#include "fql/numkit/tensor.hpp"

namespace fql::numkit {

enum class Act { identity, relu, tanh };

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  bool use_bias = true;
  Act hidden_act = Act::relu;
  Act output_act = Act::identity;
};

/// Ordered named parameter tensors. Order is fixed at construction so that
/// optimizer state, tape leaves and checkpoints all line up by index.
class ParamStore {
 public:
  void add(std::string name, Tensor t) {
    items_.emplace_back(std::move(name), std::move(t));
  }

  std::size_t size() const { return items_.size(); }

  const std::string& name(std::size_t i) const { return items_[i].first; }
  Tensor& tensor(std::size_t i) { return items_[i].second; }
  const Tensor& tensor(std::size_t i) const { return items_[i].second; }

  Tensor& at(const std::string& name) {
    for (auto& [n, t] : items_) {
      if (n == name) return t;
    }
    throw std::out_of_range("ParamStore: no parameter named " + name);
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

/// target <- tau * main + (1 - tau) * target, elementwise over all params.
inline void polyak_update(ParamStore& target, const ParamStore& main,
                          double tau) {
  if (tau < 0.0 || tau > 1.0) {
    throw std::invalid_argument("polyak_update: tau must be in [0, 1]");
  }
  if (target.size() != main.size()) {
    throw std::invalid_argument("polyak_update: param stores disagree");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    Tensor& t = target.tensor(i);
    const Tensor& m = main.tensor(i);
    for (std::size_t j = 0; j < t.size(); ++j) {
      t[j] = tau * m[j] + (1.0 - tau) * t[j];
    }
  }
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over one ParamStore.
class Adam {
 public:
  Adam() = default;

  Adam(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params.tensor(i).shape());
      v_.emplace_back(params.tensor(i).shape());
    }
  }

  void step(ParamStore& params, const std::vector<Tensor>& grads) {
    if (grads.size() != m_.size()) {
      throw std::invalid_argument("Adam::step: gradient count mismatch");
    }
    ++steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      Tensor& p = params.tensor(i);
      const Tensor& g = grads[i];
      if (!p.same_shape(g)) {
        throw std::invalid_argument("Adam::step: gradient shape mismatch at " +
                                    params.name(i));
      }
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::size_t step_count() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t steps_ = 0;
};

/// Fully connected net. Weights are [in x out]; inputs are [batch x in].
class Mlp {
 public:
  Mlp() = default;

  Mlp(MlpSpec spec, std::mt19937_64& rng) : spec_(std::move(spec)) {
    std::vector<std::size_t> dims;
    dims.push_back(spec_.input_dim);
    for (std::size_t h : spec_.hidden_dims) dims.push_back(h);
    dims.push_back(spec_.output_dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      Tensor w = Tensor::zeros(dims[l], dims[l + 1]);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = u(rng);
      params_.add("W" + std::to_string(l), std::move(w));
      if (spec_.use_bias) {
        Tensor b = Tensor::zeros(1, dims[l + 1]);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = u(rng);
        params_.add("b" + std::to_string(l), std::move(b));
      }
    }
  }

  const MlpSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t num_layers() const { return spec_.hidden_dims.size() + 1; }

  /// Copy all parameters onto the tape. trainable=false makes the forward
  /// pass treat them as constants (no gradients tracked through them).
  std::vector<Tape::Id> push(Tape& tape, bool trainable) const {
    std::vector<Tape::Id> ids;
    ids.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ids.push_back(tape.leaf(params_.tensor(i), trainable));
    }
    return ids;
  }

  /// Forward pass through previously pushed parameters.
  Tape::Id apply(Tape& tape, const std::vector<Tape::Id>& pushed,
                 Tape::Id input) const {
    if (tape.value(input).cols() != spec_.input_dim) {
      throw std::invalid_argument("Mlp::apply: input dim mismatch");
    }
    const std::size_t layers = num_layers();
    Tape::Id x = input;
    std::size_t p = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      x = tape.matmul(x, pushed[p++]);
      if (spec_.use_bias) x = tape.add_rowvec(x, pushed[p++]);
      const Act act = (l + 1 == layers) ? spec_.output_act : spec_.hidden_act;
      switch (act) {
        case Act::identity: break;
        case Act::relu: x = tape.relu(x); break;
        case Act::tanh: x = tape.tanh_act(x); break;
      }
    }
    return x;
  }

  /// Convenience: push + apply with trainable parameters.
  std::pair<Tape::Id, std::vector<Tape::Id>> forward(Tape& tape,
                                                     Tape::Id input) const {
    auto ids = push(tape, true);
    return {apply(tape, ids, input), std::move(ids)};
  }

  /// Plain forward pass without a tape, for rollouts and targets.
  Tensor eval(const Tensor& input) const {
    if (input.cols() != spec_.input_dim) {
      throw std::invalid_argument("Mlp::eval: input dim mismatch");
    }
    const std::size_t layers = num_layers();
    Tensor x = input;
    std::size_t p = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      Tensor y = matmul(x, params_.tensor(p++));
      if (spec_.use_bias) {
        const Tensor& b = params_.tensor(p++);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) += b[c];
        }
      }
      const Act act = (l + 1 == layers) ? spec_.output_act : spec_.hidden_act;
      if (act == Act::relu) {
        for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
      } else if (act == Act::tanh) {
        for (double& v : y.values()) v = std::tanh(v);
      }
      x = std::move(y);
    }
    return x;
  }

 private:
  MlpSpec spec_;
  ParamStore params_;
};

/// KL(N(mu, diag sigma^2) || N(0, I)) summed over every entry of mu/logvar.
inline double gaussian_kl(std::span<const double> mu,
                          std::span<const double> log_sigma_sq) {
  if (mu.size() != log_sigma_sq.size()) {
    throw std::invalid_argument("gaussian_kl: size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!std::isfinite(mu[i]) || !std::isfinite(log_sigma_sq[i])) {
      throw std::invalid_argument("gaussian_kl: non-finite input");
    }
    acc += mu[i] * mu[i] + std::exp(log_sigma_sq[i]) - 1.0 - log_sigma_sq[i];
  }
  return 0.5 * acc;
}

/// Tape form of gaussian_kl; sums over all rows and columns.
inline Tape::Id gaussian_kl(Tape& tape, Tape::Id mu, Tape::Id log_sigma_sq) {
  Tape::Id sq = tape.mul(mu, mu);
  Tape::Id var = tape.exp_elem(log_sigma_sq);
  Tape::Id inner =
      tape.add_scalar(tape.sub(tape.add(sq, var), log_sigma_sq), -1.0);
  return tape.scale(tape.sum(inner), 0.5);
}

}  // namespace fql::numkit
