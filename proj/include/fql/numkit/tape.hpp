#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fql/numkit/tensor.hpp"

namespace fql::numkit {

/// Reverse-mode autodiff tape. Nodes are appended in forward order, so a
/// single reverse sweep over the node list is a valid topological order.
/// The tape is rebuilt every training step and thrown away after the
/// parameter update.
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, {}});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  Id constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Id id) const { return nodes_[check(id)].value; }

  /// Gradient of the last backward() loss w.r.t. node `id`. Zero tensor if
  /// the node never received one.
  const Tensor& grad(Id id) const {
    const Node& n = nodes_[check(id)];
    if (n.grad.size() == 0) {
      throw std::logic_error("Tape::grad before backward, or on constant");
    }
    return n.grad;
  }

  bool requires_grad(Id id) const { return nodes_[check(id)].requires_grad; }

  std::size_t num_nodes() const { return nodes_.size(); }

  void backward(Id loss) {
    check(loss);
    if (nodes_[loss].value.size() != 1) {
      throw std::invalid_argument("Tape::backward: loss must be a scalar");
    }
    if (!nodes_[loss].requires_grad) {
      throw std::invalid_argument("Tape::backward: loss is detached");
    }
    for (Node& n : nodes_) {
      if (n.requires_grad) {
        n.grad = Tensor(n.value.shape());
      }
    }
    nodes_[loss].grad[0] = 1.0;
    for (Id i = static_cast<Id>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backprop && n.requires_grad) {
        cursor_ = i;
        n.backprop(*this);
      }
    }
    cursor_ = -1;
  }

  std::vector<Tensor> grads_of(const std::vector<Id>& ids) const {
    std::vector<Tensor> out;
    out.reserve(ids.size());
    for (Id id : ids) out.push_back(grad(id));
    return out;
  }

  // --- op builders -------------------------------------------------------

  Id matmul(Id a, Id b) {
    Tensor v = numkit::matmul(value(a), value(b));
    return emit(std::move(v), {a, b}, [a, b](Tape& t) {
      const Tensor& g = t.node(t.cursor_).grad;
      if (t.node(a).requires_grad) {
        t.accumulate(a, matmul_nt(g, t.node(b).value));
      }
      if (t.node(b).requires_grad) {
        t.accumulate(b, matmul_tn(t.node(a).value, g));
      }
    });
  }

  /// a [n x m] + b [1 x m], b broadcast over rows.
  Id add_rowvec(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (bv.rows() != 1 || bv.cols() != av.cols()) {
      throw std::invalid_argument("add_rowvec: bias must be [1 x cols]");
    }
    Tensor v = av;
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) v.at(r, c) += bv[c];
    }
    return emit(std::move(v), {a, b}, [a, b](Tape& t) {
      const Tensor& g = t.node(t.cursor_).grad;
      if (t.node(a).requires_grad) t.accumulate(a, g);
      if (t.node(b).requires_grad) {
        Tensor gb = Tensor::zeros(1, g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
        }
        t.accumulate(b, gb);
      }
    });
  }

  Id add(Id a, Id b) {
    Tensor v = zip(a, b, [](double x, double y) { return x + y; }, "add");
    return emit(std::move(v), {a, b}, [a, b](Tape& t) {
      const Tensor& g = t.node(t.cursor_).grad;
      if (t.node(a).requires_grad) t.accumulate(a, g);
      if (t.node(b).requires_grad) t.accumulate(b, g);
    });
  }

  Id sub(Id a, Id b) {
    Tensor v = zip(a, b, [](double x, double y) { return x - y; }, "sub");
    return emit(std::move(v), {a, b}, [a, b](Tape& t) {
      const Tensor& g = t.node(t.cursor_).grad;
      if (t.node(a).requires_grad) t.accumulate(a, g);
      if (t.node(b).requires_grad) t.accumulate_scaled(b, g, -1.0);
    });
  }

  Id mul(Id a, Id b) {
    Tensor v = zip(a, b, [](double x, double y) { return x * y; }, "mul");
    return emit(std::move(v), {a, b}, [a, b](Tape& t) {
      const Tensor& g = t.node(t.cursor_).grad;
      if (t.node(a).requires_grad) t.accumulate_prod(a, g, t.node(b).value);
      if (t.node(b).requires_grad) t.accumulate_prod(b, g, t.node(a).value);
    });
  }

  Id scale(Id a, double c) {
    Tensor v = map(a, [c](double x) { return c * x; });
    return emit(std::move(v), {a}, [a, c](Tape& t) {
      if (t.node(a).requires_grad) {
        t.accumulate_scaled(a, t.node(t.cursor_).grad, c);
      }
    });
  }

  Id add_scalar(Id a, double c) {
    Tensor v = map(a, [c](double x) { return x + c; });
    return emit(std::move(v), {a}, [a](Tape& t) {
      if (t.node(a).requires_grad) t.accumulate(a, t.node(t.cursor_).grad);
    });
  }

  Id relu(Id a) {
    Tensor v = map(a, [](double x) { return x > 0.0 ? x : 0.0; });
    return emit(std::move(v), {a}, [a](Tape& t) {
      if (!t.node(a).requires_grad) return;
      const Tensor& g = t.node(t.cursor_).grad;
      const Tensor& in = t.node(a).value;
      Tensor ga(in.shape());
      for (std::size_t i = 0; i < in.size(); ++i) {
        ga[i] = in[i] > 0.0 ? g[i] : 0.0;
      }
      t.accumulate(a, ga);
    });
  }

  Id tanh_act(Id a) {
    Tensor v = map(a, [](double x) { return std::tanh(x); });
    return emit(std::move(v), {a}, [a](Tape& t) {
      if (!t.node(a).requires_grad) return;
      const Tensor& g = t.node(t.cursor_).grad;
      const Tensor& out = t.node(t.cursor_).value;
      Tensor ga(out.shape());
      for (std::size_t i = 0; i < out.size(); ++i) {
        ga[i] = g[i] * (1.0 - out[i] * out[i]);
      }
      t.accumulate(a, ga);
    });
  }

  Id sigmoid(Id a) {
    Tensor v = map(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return emit(std::move(v), {a}, [a](Tape& t) {
      if (!t.node(a).requires_grad) return;
      const Tensor& g = t.node(t.cursor_).grad;
      const Tensor& out = t.node(t.cursor_).value;
      Tensor ga(out.shape());
      for (std::size_t i = 0; i < out.size(); ++i) {
        ga[i] = g[i] * out[i] * (1.0 - out[i]);
      }
      t.accumulate(a, ga);
    });
  }

  Id exp_elem(Id a) {
    Tensor v = map(a, [](double x) { return std::exp(x); });
    return emit(std::move(v), {a}, [a](Tape& t) {
      if (!t.node(a).requires_grad) return;
      const Tensor& g = t.node(t.cursor_).grad;
      const Tensor& out = t.node(t.cursor_).value;
      Tensor ga(out.shape());
      for (std::size_t i = 0; i < out.size(); ++i) ga[i] = g[i] * out[i];
      t.accumulate(a, ga);
    });
  }

  /// log(1 + e^x), numerically stable for large x.
  Id softplus(Id a) {
    Tensor v = map(a, [](double x) {
      return x > 30.0 ? x : std::log1p(std::exp(x));
    });
    return emit(std::move(v), {a}, [a](Tape& t) {
      if (!t.node(a).requires_grad) return;
      const Tensor& g = t.node(t.cursor_).grad;
      const Tensor& in = t.node(a).value;
      Tensor ga(in.shape());
      for (std::size_t i = 0; i < in.size(); ++i) {
        ga[i] = g[i] / (1.0 + std::exp(-in[i]));
      }
      t.accumulate(a, ga);
    });
  }

  Id sum(Id a) {
    double s = 0.0;
    for (double x : value(a).values()) s += x;
    return emit(Tensor::scalar(s), {a}, [a](Tape& t) {
      if (!t.node(a).requires_grad) return;
      double g = t.node(t.cursor_).grad[0];
      t.accumulate(a, Tensor::full(t.node(a).value.rows(),
                                   t.node(a).value.cols(), g));
    });
  }

  Id mean(Id a) { return scale(sum(a), 1.0 / static_cast<double>(value(a).size())); }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (Id p : parts) {
      if (value(p).rows() != rows) {
        throw std::invalid_argument("concat_cols: row counts disagree");
      }
      cols += value(p).cols();
    }
    Tensor v = Tensor::zeros(rows, cols);
    std::size_t off = 0;
    for (Id p : parts) {
      const Tensor& pv = value(p);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < pv.cols(); ++c) {
          v.at(r, off + c) = pv.at(r, c);
        }
      }
      off += pv.cols();
    }
    std::vector<Id> deps = parts;
    return emit(std::move(v), deps, [parts](Tape& t) {
      const Tensor& g = t.node(t.cursor_).grad;
      std::size_t off = 0;
      for (Id p : parts) {
        const Tensor& pv = t.node(p).value;
        if (t.node(p).requires_grad) {
          Tensor gp = Tensor::zeros(pv.rows(), pv.cols());
          for (std::size_t r = 0; r < pv.rows(); ++r) {
            for (std::size_t c = 0; c < pv.cols(); ++c) {
              gp.at(r, c) = g.at(r, off + c);
            }
          }
          t.accumulate(p, gp);
        }
        off += pv.cols();
      }
    });
  }

  /// Columns [begin, end) of a.
  Id slice_cols(Id a, std::size_t begin, std::size_t end) {
    const Tensor& av = value(a);
    if (begin >= end || end > av.cols()) {
      throw std::invalid_argument("slice_cols: bad range");
    }
    Tensor v = Tensor::zeros(av.rows(), end - begin);
    for (std::size_t r = 0; r < av.rows(); ++r) {
      for (std::size_t c = begin; c < end; ++c) v.at(r, c - begin) = av.at(r, c);
    }
    return emit(std::move(v), {a}, [a, begin](Tape& t) {
      if (!t.node(a).requires_grad) return;
      const Tensor& g = t.node(t.cursor_).grad;
      Tensor ga = Tensor::zeros(t.node(a).value.rows(), t.node(a).value.cols());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) {
          ga.at(r, begin + c) = g.at(r, c);
        }
      }
      t.accumulate(a, ga);
    });
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;
  };

  Id check(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw std::out_of_range("Tape: bad node id");
    }
    return id;
  }

  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }

  Id emit(Tensor value, const std::vector<Id>& deps,
          std::function<void(Tape&)> backprop) {
    bool rg = false;
    for (Id d : deps) rg = rg || nodes_[check(d)].requires_grad;
    Node n{std::move(value), Tensor{}, rg, {}};
    if (rg) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  template <typename F>
  Tensor map(Id a, F f) const {
    const Tensor& av = nodes_[check(a)].value;
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return out;
  }

  template <typename F>
  Tensor zip(Id a, Id b, F f, const char* opname) const {
    const Tensor& av = nodes_[check(a)].value;
    const Tensor& bv = nodes_[check(b)].value;
    if (!av.same_shape(bv)) {
      throw std::invalid_argument(std::string(opname) + ": shape mismatch");
    }
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
    return out;
  }

  void accumulate(Id id, const Tensor& g) {
    Tensor& dst = node(id).grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  void accumulate_scaled(Id id, const Tensor& g, double c) {
    Tensor& dst = node(id).grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * g[i];
  }

  void accumulate_prod(Id id, const Tensor& g, const Tensor& w) {
    Tensor& dst = node(id).grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * w[i];
  }

  // Index of the node whose backprop closure is currently running. Set by
  // backward() so closures can reach their own output grad without capturing
  // a self-id before it exists.
  Id cursor_ = -1;

  std::vector<Node> nodes_;
};

}  // namespace fql::numkit
