// SPDX-License-Identifier: Apache-2.0
#include "coslearn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "coslearn/error.hpp"

namespace coslearn {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  parameters_.push_back(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](std::size_t id) { return nodes_[id].requires_grad; });
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (!n.has_grad) throw std::logic_error("gradient requested before backward()");
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::logic_error("backward() on a Var from another tape");
  if (loss.value().size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " +
                         shape_to_string(loss.value().shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
  }
  grad_of(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.requires_grad && !n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
  }
}

void Tape::clear() noexcept {
  nodes_.clear();
  parameters_.clear();
}

namespace {

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
}

void require_same_shape(const char* op, Var a, Var b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void add_into(Tensor& dst, const Tensor& src, double factor = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

std::size_t slices_of(const Tensor& t) { return t.size() / t.last_dim(); }

}  // namespace

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: incompatible shapes " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor out(Shape{m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = pa[p * m + i];
      if (api == 0.0) continue;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += api * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: incompatible shapes " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out.at(i, j) = s;
    }
  }
  return out;
}

Tensor l2_normalize(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t r = 0; r < slices_of(a); ++r) {
    auto src = a.row(r);
    const double norm = l2_norm(src);
    if (!(norm > kNormalizeEps)) {
      throw DegenerateVectorError("l2_normalize: slice " + std::to_string(r) + " has norm " +
                                  std::to_string(norm) + " (dead features?)");
    }
    auto dst = out.row(r);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / norm;
  }
  return out;
}

Tensor softmax(const Tensor& a) {
  if (!a.all_finite()) throw NumericError("softmax: non-finite input");
  Tensor out(a.shape());
  for (std::size_t r = 0; r < slices_of(a); ++r) {
    auto src = a.row(r);
    auto dst = out.row(r);
    const double mx = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

Tensor log_softmax(const Tensor& a) {
  if (!a.all_finite()) throw NumericError("log_softmax: non-finite input");
  Tensor out(a.shape());
  for (std::size_t r = 0; r < slices_of(a); ++r) {
    auto src = a.row(r);
    auto dst = out.row(r);
    const auto top = std::max_element(src.begin(), src.end());
    const double mx = *top;
    // log1p over the non-maximal terms keeps tiny losses accurate.
    double rest = 0.0;
    for (auto it = src.begin(); it != src.end(); ++it) {
      if (it != top) rest += std::exp(*it - mx);
    }
    const double shift = std::log1p(rest);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = (src[j] - mx) - shift;
  }
  return out;
}

}  // namespace kernels

namespace ops {

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  add_into(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    if (t.requires_grad(ia)) add_into(t.grad_of(ia), g);
    if (t.requires_grad(ib)) add_into(t.grad_of(ib), g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  add_into(out, b.value(), -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    if (t.requires_grad(ia)) add_into(t.grad_of(ia), g);
    if (t.requires_grad(ib)) add_into(t.grad_of(ib), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    const auto gd = g.data();
    if (t.requires_grad(ia)) {
      auto ga = t.grad_of(ia).data();
      auto bd = t.value(ib).data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gd[i] * bd[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_of(ib).data();
      auto ad = t.value(ia).data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gd[i] * ad[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = map(a.value(), [factor](double x) { return x * factor; });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [ia, factor](Tape& t, std::size_t, const Tensor& g) {
                           add_into(t.grad_of(ia), g, factor);
                         });
}

Var add_scalar(Var a, double value) {
  Tensor out = map(a.value(), [value](double x) { return x + value; });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t, const Tensor& g) {
    add_into(t.grad_of(ia), g);
  });
}

Var mul_scalar(Var a, Var s) {
  require_same_tape(a, s);
  if (s.value().size() != 1) {
    throw DimensionError("mul_scalar: expected a scalar factor, got shape " +
                         shape_to_string(s.shape()));
  }
  const double sv = s.value().item();
  Tensor out = map(a.value(), [sv](double x) { return x * sv; });
  const std::size_t ia = a.id(), is = s.id();
  return a.tape().record(std::move(out), {ia, is}, [ia, is](Tape& t, std::size_t, const Tensor& g) {
    if (t.requires_grad(ia)) add_into(t.grad_of(ia), g, t.value(is).item());
    if (t.requires_grad(is)) t.grad_of(is)[0] += coslearn::dot(g.data(), t.value(ia).data());
  });
}

Var relu(Var a) {
  Tensor out = map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t, const Tensor& g) {
    auto ga = t.grad_of(ia).data();
    auto x = t.value(ia).data();
    auto gd = g.data();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (x[i] > 0.0) ga[i] += gd[i];
    }
  });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  Tensor out = map(a.value(), [](double x) { return std::log(x); });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t, const Tensor& g) {
    auto ga = t.grad_of(ia).data();
    auto x = t.value(ia).data();
    auto gd = g.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gd[i] / x[i];
  });
}

Var exp(Var a) {
  Tensor out = map(a.value(), [](double x) { return std::exp(x); });
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self, const Tensor& g) {
    auto ga = t.grad_of(ia).data();
    auto y = t.value(self).data();
    auto gd = g.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gd[i] * y[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t, const Tensor& g) {
    const double gv = g.item();
    for (double& v : t.grad_of(ia).data()) v += gv;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_last(Var a) {
  const Tensor& x = a.value();
  Shape out_shape(x.shape().begin(), x.shape().end() - (x.rank() == 0 ? 0 : 1));
  Tensor out(out_shape);
  for (std::size_t r = 0; r < slices_of(x); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    out[r] = s;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t, const Tensor& g) {
    Tensor& ga = t.grad_of(ia);
    for (std::size_t r = 0; r < slices_of(ga); ++r) {
      for (double& v : ga.row(r)) v += g[r];
    }
  });
}

Var dot(Var a, Var b) {
  require_same_shape("dot", a, b);
  const double d = coslearn::dot(a.value().data(), b.value().data());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(Tensor::scalar(d), {ia, ib}, [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    const double gv = g.item();
    if (t.requires_grad(ia)) add_into(t.grad_of(ia), t.value(ib), gv);
    if (t.requires_grad(ib)) add_into(t.grad_of(ib), t.value(ia), gv);
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    if (t.requires_grad(ia)) add_into(t.grad_of(ia), kernels::matmul_nt(g, t.value(ib)));
    if (t.requires_grad(ib)) add_into(t.grad_of(ib), kernels::matmul_tn(t.value(ia), g));
  });
}

Var linear(Var x, Var weight, Var bias) {
  require_same_tape(x, weight);
  require_same_tape(x, bias);
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (w.rank() != 2 || b.rank() != 1 || b.shape()[0] != w.cols()) {
    throw DimensionError("linear: weight " + shape_to_string(w.shape()) + " and bias " +
                         shape_to_string(b.shape()) + " disagree");
  }
  Tensor out = kernels::matmul(x.value(), w);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record(std::move(out), {ix, iw, ib},
                         [ix, iw, ib](Tape& t, std::size_t, const Tensor& g) {
                           if (t.requires_grad(ix)) add_into(t.grad_of(ix), kernels::matmul_nt(g, t.value(iw)));
                           if (t.requires_grad(iw)) add_into(t.grad_of(iw), kernels::matmul_tn(t.value(ix), g));
                           if (t.requires_grad(ib)) {
                             auto gb = t.grad_of(ib).data();
                             for (std::size_t r = 0; r < g.rows(); ++r) {
                               auto row = g.row(r);
                               for (std::size_t j = 0; j < gb.size(); ++j) gb[j] += row[j];
                             }
                           }
                         });
}

Var l2_normalize(Var a) {
  Tensor out = kernels::l2_normalize(a.value());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self, const Tensor& g) {
    // d/dx (x/|x|) applied to g: (g - y <y,g>) / |x|
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_of(ia);
    for (std::size_t r = 0; r < slices_of(x); ++r) {
      const double norm = l2_norm(x.row(r));
      auto yr = y.row(r);
      auto gr = g.row(r);
      const double yg = coslearn::dot(yr, gr);
      auto dst = ga.row(r);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += (gr[j] - yr[j] * yg) / norm;
    }
  });
}

Var softmax(Var a) {
  Tensor out = kernels::softmax(a.value());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_of(ia);
    for (std::size_t r = 0; r < slices_of(y); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      const double yg = coslearn::dot(yr, gr);
      auto dst = ga.row(r);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += yr[j] * (gr[j] - yg);
    }
  });
}

Var log_softmax(Var a) {
  Tensor out = kernels::log_softmax(a.value());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_of(ia);
    for (std::size_t r = 0; r < slices_of(y); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double gsum = 0.0;
      for (double v : gr) gsum += v;
      auto dst = ga.row(r);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += gr[j] - std::exp(yr[j]) * gsum;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (x.rank() != 2 || begin >= end || end > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") of shape " + shape_to_string(x.shape()));
  }
  const std::size_t w = x.cols();
  std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(begin * w),
                           x.data().begin() + static_cast<std::ptrdiff_t>(end * w));
  const std::size_t ia = a.id();
  return a.tape().record(Tensor(Shape{end - begin, w}, std::move(data)), {ia},
                         [ia, begin, w](Tape& t, std::size_t, const Tensor& g) {
                           auto dst = t.grad_of(ia).data().subspan(begin * w, g.size());
                           auto src = g.data();
                           for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t w = parts[0].value().cols();
  std::vector<double> data;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().rank() != 2 || p.value().cols() != w) {
      throw DimensionError("concat_rows: shape " + shape_to_string(p.shape()) +
                           " does not match width " + std::to_string(w));
    }
    offsets.push_back(rows * w);
    rows += p.value().rows();
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    ids.push_back(p.id());
  }
  std::vector<std::size_t> inputs = ids;
  return parts[0].tape().record(
      Tensor(Shape{rows, w}, std::move(data)), std::move(inputs),
      [ids, offsets](Tape& t, std::size_t, const Tensor& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          auto dst = t.grad_of(ids[k]).data();
          auto src = g.data().subspan(offsets[k], dst.size());
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      });
}

}  // namespace ops
}  // namespace coslearn
