#include "madg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "madg/errors.hpp"

namespace madg {

namespace {

void require_matrix(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

void check_labels(std::span<const std::size_t> labels, const Tensor& x, std::string_view op) {
  require_matrix(x, op);
  if (labels.size() != x.rows()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(x.rows()) + " rows");
  }
  for (std::size_t y : labels) {
    if (y >= x.cols()) {
      throw IndexError(std::string(op) + ": label " + std::to_string(y) + " out of range for " +
                       std::to_string(x.cols()) + " classes");
    }
  }
}

double row_logsumexp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

double row_logsumexp_except(std::span<const double> z, std::size_t skip) {
  double m = -INFINITY;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != skip) m = std::max(m, z[j]);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != skip) s += std::exp(z[j] - m);
  }
  return m + std::log(s);
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::add_bias: return "add_bias";
    case OpKind::relu: return "relu";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::gather_label: return "gather_label";
    case OpKind::mean: return "mean";
    case OpKind::scale: return "scale";
    case OpKind::negate: return "negate";
    case OpKind::grl: return "grl";
    case OpKind::add: return "add";
    case OpKind::clamp: return "clamp";
    case OpKind::log1m_softmax_at: return "log1m_softmax_at";
  }
  return "unknown";
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw IndexError("variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
OpKind Tape::kind(Var v) const { return node(v).kind; }

Var Tape::leaf(Tensor& tensor) {
  Node n{OpKind::leaf, {}, tensor, {}, 0.0, 0.0, &tensor};
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  value.clear_grad();
  return push(Node{OpKind::constant, {}, std::move(value), {}, 0.0, 0.0, nullptr});
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& w = value(b);
  require_matrix(x, "matmul");
  require_matrix(w, "matmul");
  if (x.cols() != w.rows()) {
    throw DimensionError("matmul inner dimensions differ: " + shape_string(x.shape()) + " x " +
                         shape_string(w.shape()));
  }
  const std::size_t n = x.rows(), m = x.cols(), p = w.cols();
  std::vector<double> out(n * p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double xik = x[i * m + k];
      for (std::size_t j = 0; j < p; ++j) out[i * p + j] += xik * w[k * p + j];
    }
  }
  return push(Node{OpKind::matmul, {a.id, b.id}, Tensor({n, p}, std::move(out)), {}, 0.0, 0.0, nullptr});
}

Var Tape::add_bias(Var xv, Var bv) {
  const Tensor& x = value(xv);
  const Tensor& b = value(bv);
  require_matrix(x, "add_bias");
  if (b.rank() != 1 || b.size() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const std::size_t p = x.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % p];
  return push(Node{OpKind::add_bias, {xv.id, bv.id}, Tensor(x.shape(), std::move(out)), {}, 0.0, 0.0, nullptr});
}

Var Tape::relu(Var xv) {
  const Tensor& x = value(xv);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return push(Node{OpKind::relu, {xv.id}, Tensor(x.shape(), std::move(out)), {}, 0.0, 0.0, nullptr});
}

Var Tape::log_softmax(Var xv) {
  const Tensor& x = value(xv);
  require_matrix(x, "log_softmax");
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(n * k);
  for (std::size_t r = 0; r < n; ++r) {
    const double lse = row_logsumexp(x.row(r));
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] = x[r * k + c] - lse;
  }
  return push(Node{OpKind::log_softmax, {xv.id}, Tensor({n, k}, std::move(out)), {}, 0.0, 0.0, nullptr});
}

Var Tape::gather_label(Var xv, std::span<const std::size_t> labels) {
  const Tensor& x = value(xv);
  check_labels(labels, x, "gather_label");
  const std::size_t k = x.cols();
  std::vector<double> out(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) out[r] = x[r * k + labels[r]];
  return push(Node{OpKind::gather_label, {xv.id}, Tensor::vector(std::move(out)),
                   std::vector<std::size_t>(labels.begin(), labels.end()), 0.0, 0.0, nullptr});
}

Var Tape::mean(Var xv) {
  const Tensor& x = value(xv);
  double s = 0.0;
  for (double v : x.data()) s += v;
  return push(Node{OpKind::mean, {xv.id}, Tensor::scalar(s / static_cast<double>(x.size())), {}, 0.0, 0.0, nullptr});
}

Var Tape::scale(Var xv, double factor) {
  const Tensor& x = value(xv);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x[i];
  return push(Node{OpKind::scale, {xv.id}, Tensor(x.shape(), std::move(out)), {}, factor, 0.0, nullptr});
}

Var Tape::negate(Var xv) {
  const Tensor& x = value(xv);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -x[i];
  return push(Node{OpKind::negate, {xv.id}, Tensor(x.shape(), std::move(out)), {}, 0.0, 0.0, nullptr});
}

Var Tape::grl(Var xv, double eta) {
  Tensor out(value(xv).shape(), std::vector<double>(value(xv).data().begin(), value(xv).data().end()));
  return push(Node{OpKind::grl, {xv.id}, std::move(out), {}, eta, 0.0, nullptr});
}

Var Tape::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.shape() != y.shape()) {
    throw DimensionError("add: shapes differ " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return push(Node{OpKind::add, {a.id, b.id}, Tensor(x.shape(), std::move(out)), {}, 0.0, 0.0, nullptr});
}

Var Tape::clamp(Var xv, double lo, double hi, ClampGrad mode) {
  if (!(lo <= hi)) throw ContractError("clamp: lower bound exceeds upper bound");
  const Tensor& x = value(xv);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i], lo, hi);
  return push(Node{OpKind::clamp, {xv.id}, Tensor(x.shape(), std::move(out)), {}, lo, hi, nullptr,
                   mode == ClampGrad::pass_through});
}

Var Tape::log1m_softmax_at(Var xv, std::span<const std::size_t> labels, double prob_floor, ClampGrad mode) {
  const Tensor& x = value(xv);
  check_labels(labels, x, "log1m_softmax_at");
  if (x.cols() < 2) throw DimensionError("log1m_softmax_at needs at least two classes");
  const std::size_t n = x.rows();
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto z = x.row(r);
    const double lse = row_logsumexp(z);
    const double p = std::exp(z[labels[r]] - lse);
    if (p > 1.0 - prob_floor) {
      out[r] = std::log(prob_floor);
    } else if (p < prob_floor) {
      out[r] = std::log1p(-prob_floor);
    } else {
      out[r] = row_logsumexp_except(z, labels[r]) - lse;
    }
  }
  return push(Node{OpKind::log1m_softmax_at, {xv.id}, Tensor::vector(std::move(out)),
                   std::vector<std::size_t>(labels.begin(), labels.end()), prob_floor, 0.0, nullptr,
                   mode == ClampGrad::pass_through});
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw ContractError("backward on an empty tape");
  if (value(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(value(loss).shape()));
  }
  grads_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i <= loss.id; ++i) grads_[i].assign(nodes_[i].value.size(), 0.0);
  grads_[loss.id][0] = 1.0;

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    const std::vector<double>& g = grads_[id];
    if (n.kind == OpKind::leaf) {
      if (n.target != nullptr && n.target->requires_grad()) {
        auto tg = n.target->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) tg[i] += g[i];
      }
      continue;
    }
    if (n.kind == OpKind::constant) continue;
    backprop(n, g);
  }
}

void Tape::backprop(const Node& n, std::span<const double> g) {
  switch (n.kind) {
    case OpKind::matmul: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const Tensor& w = nodes_[n.inputs[1]].value;
      auto& gx = grads_[n.inputs[0]];
      auto& gw = grads_[n.inputs[1]];
      const std::size_t rows = x.rows(), m = x.cols(), p = w.cols();
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
          double acc = 0.0;
          const double xik = x[i * m + k];
          for (std::size_t j = 0; j < p; ++j) {
            acc += g[i * p + j] * w[k * p + j];
            gw[k * p + j] += xik * g[i * p + j];
          }
          gx[i * m + k] += acc;
        }
      }
      break;
    }
    case OpKind::add_bias: {
      auto& gx = grads_[n.inputs[0]];
      auto& gb = grads_[n.inputs[1]];
      const std::size_t p = gb.size();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i];
        gb[i % p] += g[i];
      }
      break;
    }
    case OpKind::relu: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grads_[n.inputs[0]];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) gx[i] += g[i];
      }
      break;
    }
    case OpKind::log_softmax: {
      auto& gx = grads_[n.inputs[0]];
      const std::size_t rows = n.value.rows(), k = n.value.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (std::size_t c = 0; c < k; ++c) gsum += g[r * k + c];
        for (std::size_t c = 0; c < k; ++c) {
          gx[r * k + c] += g[r * k + c] - std::exp(n.value[r * k + c]) * gsum;
        }
      }
      break;
    }
    case OpKind::gather_label: {
      auto& gx = grads_[n.inputs[0]];
      const std::size_t k = nodes_[n.inputs[0]].value.cols();
      for (std::size_t r = 0; r < n.labels.size(); ++r) gx[r * k + n.labels[r]] += g[r];
      break;
    }
    case OpKind::mean: {
      auto& gx = grads_[n.inputs[0]];
      const double share = g[0] / static_cast<double>(gx.size());
      for (double& v : gx) v += share;
      break;
    }
    case OpKind::scale: {
      auto& gx = grads_[n.inputs[0]];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += n.scalar * g[i];
      break;
    }
    case OpKind::negate: {
      auto& gx = grads_[n.inputs[0]];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
      break;
    }
    case OpKind::grl: {
      auto& gx = grads_[n.inputs[0]];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += -n.scalar * g[i];
      break;
    }
    case OpKind::add: {
      auto& ga = grads_[n.inputs[0]];
      auto& gb = grads_[n.inputs[1]];
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case OpKind::clamp: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grads_[n.inputs[0]];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (n.pass_through || (x[i] > n.scalar && x[i] < n.scalar2)) gx[i] += g[i];
      }
      break;
    }
    case OpKind::log1m_softmax_at: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grads_[n.inputs[0]];
      const std::size_t k = x.cols();
      for (std::size_t r = 0; r < n.labels.size(); ++r) {
        const auto z = x.row(r);
        const std::size_t h = n.labels[r];
        const double lse = row_logsumexp(z);
        const double p = std::exp(z[h] - lse);
        if (!n.pass_through && (p > 1.0 - n.scalar || p < n.scalar)) continue;
        const double lse_rest = row_logsumexp_except(z, h);
        for (std::size_t c = 0; c < k; ++c) {
          const double pc = std::exp(z[c] - lse);
          const double d = c == h ? -pc : std::exp(z[c] - lse_rest) - pc;
          gx[r * k + c] += g[r] * d;
        }
      }
      break;
    }
    case OpKind::leaf:
    case OpKind::constant:
      break;
  }
}

std::span<const double> Tape::grad(Var v) const {
  if (v.id >= grads_.size() || grads_[v.id].empty()) {
    throw ContractError("no gradient recorded for node; call backward() first");
  }
  return grads_[v.id];
}

}  // namespace madg
