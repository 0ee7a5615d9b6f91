#include "isd/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "isd/errors.hpp"

namespace isd {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got shape " + shape_to_string(shape));
  }
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + shape_to_string(shape));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void accumulate(detail::Node& input, const std::vector<double>& delta) {
  if (!input.requires_grad) return;
  for (std::size_t i = 0; i < delta.size(); ++i) input.grad[i] += delta[i];
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : Tensor(Tensor::scalar(0.0)) {}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = (check_shape(shape), product(shape));
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != product(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->grad.assign(values.size(), 0.0);
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  if (rows.empty()) throw DimensionError("matrix needs at least one row");
  const auto cols = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("ragged matrix rows");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return from({rows.size(), cols}, std::move(flat), requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return from({n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return rank() == 1 ? 1 : shape()[0]; }
std::size_t Tensor::cols() const { return rank() == 1 ? shape()[0] : shape()[1]; }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("only leaf tensors may be written in place");
  return node_->value;
}

std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value.at(i); }
double Tensor::at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("requires_grad can only be changed on leaves");
  node_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return !node_->backprop; }
bool Tensor::has_graph() const { return static_cast<bool>(node_->backprop); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }
Tensor Tensor::clone(bool requires_grad) const { return from(shape(), node_->value, requires_grad); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tensor::backward() const {
  if (size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; only nodes that require grad are visited, so
  // detached leaves (teacher weights, anchors) are never traversed.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) std::fill(node->grad.begin(), node->grad.end(), 0.0);
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backprop) {
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  Tensor out = from(std::move(shape), std::move(values), needs_grad);
  if (needs_grad) {
    for (auto& input : inputs) out.node_->inputs.push_back(input.node_);
    out.node_->backprop = std::move(backprop);
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const auto r = a.rows(), k = a.cols(), c = b.cols();
  std::vector<double> out(r * c);
  MutMap(out.data(), r, c).noalias() = ConstMap(a.values().data(), r, k) * ConstMap(b.values().data(), k, c);
  return Tensor::make_result({r, c}, std::move(out), {a, b}, [r, k, c](detail::Node& self) {
    auto& lhs = *self.inputs[0];
    auto& rhs = *self.inputs[1];
    ConstMap upstream(self.grad.data(), r, c);
    if (lhs.requires_grad) {
      MutMap(lhs.grad.data(), r, k).noalias() += upstream * ConstMap(rhs.value.data(), k, c).transpose();
    }
    if (rhs.requires_grad) {
      MutMap(rhs.grad.data(), k, c).noalias() += ConstMap(lhs.value.data(), r, k).transpose() * upstream;
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose needs a matrix, got " + shape_to_string(a.shape()));
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  MutMap(out.data(), c, r) = ConstMap(a.values().data(), r, c).transpose();
  return Tensor::make_result({c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (in.requires_grad) MutMap(in.grad.data(), r, c) += ConstMap(self.grad.data(), c, r).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    accumulate(*self.inputs[0], self.grad);
    auto& rhs = *self.inputs[1];
    if (rhs.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) rhs.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& lhs = *self.inputs[0];
    auto& rhs = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (lhs.requires_grad) lhs.grad[i] += self.grad[i] * rhs.value[i];
      if (rhs.requires_grad) rhs.grad[i] += self.grad[i] * lhs.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += factor * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v += offset;
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [](detail::Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  if (bias.rank() != 1 || bias.size() != a.cols()) {
    throw DimensionError("add_row: bias " + shape_to_string(bias.shape()) + " does not fit rows of " +
                         shape_to_string(a.shape()));
  }
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias.values()[j];
  return Tensor::make_result(a.shape(), std::move(out), {a, bias}, [r, c](detail::Node& self) {
    accumulate(*self.inputs[0], self.grad);
    auto& b = *self.inputs[1];
    if (!b.requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) b.grad[j] += self.grad[i * c + j];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (in.value[i] > 0.0) in.grad[i] += self.grad[i];
    }
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a.values()[i];
    if (!(v > 0.0) || !std::isfinite(v)) throw NumericDomainError("log of non-positive or non-finite value");
    out[i] = std::log(v);
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] / in.value[i];
  });
}

Tensor l2_normalize(const Tensor& a, double eps) {
  if (!(eps > 0.0)) throw ContractError("l2_normalize: eps must be positive");
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> denom(r);
  std::vector<char> clamped(r);
  for (std::size_t i = 0; i < r; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < c; ++j) sq += a.values()[i * c + j] * a.values()[i * c + j];
    const double norm = std::sqrt(sq);
    clamped[i] = norm < eps;
    denom[i] = clamped[i] ? eps : norm;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] / denom[i];
  }
  return Tensor::make_result(
      a.shape(), std::move(out), {a}, [r, c, denom = std::move(denom), clamped = std::move(clamped)](detail::Node& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < r; ++i) {
          const double* g = &self.grad[i * c];
          const double* y = &self.value[i * c];
          double* dx = &in.grad[i * c];
          if (clamped[i]) {
            for (std::size_t j = 0; j < c; ++j) dx[j] += g[j] / denom[i];
            continue;
          }
          // d(v/|v|) = (g - y (g.y)) / |v|
          double gy = 0.0;
          for (std::size_t j = 0; j < c; ++j) gy += g[j] * y[j];
          for (std::size_t j = 0; j < c; ++j) dx[j] += (g[j] - y[j] * gy) / denom[i];
        }
      });
}

namespace {

void require_finite(const char* op, const Tensor& a) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) throw NumericDomainError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor softmax(const Tensor& a) {
  require_finite("softmax", a);
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = &a.values()[i * c];
    const double top = *std::max_element(x, x + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += (out[i * c + j] = std::exp(x[j] - top));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [r, c](detail::Node& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < r; ++i) {
      const double* g = &self.grad[i * c];
      const double* y = &self.value[i * c];
      double gy = 0.0;
      for (std::size_t j = 0; j < c; ++j) gy += g[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) in.grad[i * c + j] += y[j] * (g[j] - gy);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  require_finite("log_softmax", a);
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = &a.values()[i * c];
    const double top = *std::max_element(x, x + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(x[j] - top);
    const double lse = top + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[j] - lse;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [r, c](detail::Node& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < r; ++i) {
      const double* g = &self.grad[i * c];
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += g[j];
      for (std::size_t j = 0; j < c; ++j) in.grad[i * c + j] += g[j] - std::exp(self.value[i * c + j]) * gsum;
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return Tensor::make_result({1}, {total}, {a}, [](detail::Node& self) {
    auto& in = *self.inputs[0];
    for (auto& g : in.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor row_sum(const Tensor& a) {
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += a.values()[i * c + j];
  return Tensor::make_result({r, 1}, std::move(out), {a}, [r, c](detail::Node& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) in.grad[i * c + j] += self.grad[i];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row counts differ, " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  const auto r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(&a.values()[i * ca], ca, &out[i * c]);
    std::copy_n(&b.values()[i * cb], cb, &out[i * c + ca]);
  }
  return Tensor::make_result({r, c}, std::move(out), {a, b}, [r, ca, cb, c](detail::Node& self) {
    auto& lhs = *self.inputs[0];
    auto& rhs = *self.inputs[1];
    for (std::size_t i = 0; i < r; ++i) {
      if (lhs.requires_grad)
        for (std::size_t j = 0; j < ca; ++j) lhs.grad[i * ca + j] += self.grad[i * c + j];
      if (rhs.requires_grad)
        for (std::size_t j = 0; j < cb; ++j) rhs.grad[i * cb + j] += self.grad[i * c + ca + j];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape);
  if (product(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_to_string(a.shape()) + " cannot become " + shape_to_string(shape));
  }
  return Tensor::make_result(std::move(shape), {a.values().begin(), a.values().end()}, {a},
                             [](detail::Node& self) { accumulate(*self.inputs[0], self.grad); });
}

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double step) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  for (auto& p : params) p.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = f().item();
      values[i] = saved - step;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace isd
