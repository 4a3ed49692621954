#include "ledf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ledf/kernels.hpp"

namespace ledf::ad {

// ---------------------------------------------------------------- ParamStore

Param& ParamStore::add(const std::string& name, Matrix init) {
  require(!contains(name), "parameter '" + name + "' registered twice");
  Param p;
  p.name = name;
  p.m = Matrix(init.rows, init.cols);
  p.v = Matrix(init.rows, init.cols);
  p.grad = Matrix(init.rows, init.cols);
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw Error("unknown parameter '" + name + "'");
}

const Param& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw Error("unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Param& p) { return p.name == name; });
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

// ---------------------------------------------------------------------- Tape

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::param(Param& p) {
  nodes_.push_back(Node{p.value, {}, true, {}, &p});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward back) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id].needs_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(back) : Backward{}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward back) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id].needs_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(back) : Backward{}, nullptr});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& node = nodes_[id];
  if (!node.needs_grad) return;
  require(g.same_shape(node.value), "autodiff: gradient shape " + shape_str(g) + " does not match value " +
                                        shape_str(node.value));
  if (node.grad.data.empty()) {
    node.grad = g;
  } else {
    for (std::size_t k = 0; k < g.size(); ++k) node.grad.data[k] += g.data[k];
  }
}

void Tape::backward(Var loss) {
  require(loss.tape == this, "backward: variable belongs to another tape");
  require(value(loss.id).rows == 1 && value(loss.id).cols == 1, "backward: loss must be 1x1");
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad = Matrix(1, 1, 1.0);
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    Node& node = nodes_[k];
    if (node.grad.data.empty()) continue;
    if (node.param != nullptr) {
      Matrix& pg = node.param->grad;
      if (!pg.same_shape(node.grad)) pg = Matrix(node.grad.rows, node.grad.cols);
      for (std::size_t e = 0; e < pg.size(); ++e) pg.data[e] += node.grad.data[e];
    }
    if (node.back) node.back(*this, k);
  }
}

// ---------------------------------------------------------------- operations

namespace {

void same_tape(Var a, Var b) { require(a.tape == b.tape, "autodiff: operands live on different tapes"); }

}  // namespace

Var matmul(Var x, Var w) {
  same_tape(x, w);
  Tape& t = *x.tape;
  Matrix out = kernels::matmul(x.value(), w.value());
  return t.record(std::move(out), {x, w}, [xi = x.id, wi = w.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(xi)) tp.accumulate(xi, kernels::matmul_nt(g, tp.value(wi)));
    if (tp.needs_grad(wi)) tp.accumulate(wi, kernels::matmul_tn(tp.value(xi), g));
  });
}

Var mode3_product(Var tensor, Var w) {
  require(tensor.cols() == w.rows(), "mode3_product: depth " + std::to_string(tensor.cols()) +
                                         " does not match weight rows " + std::to_string(w.rows()));
  return matmul(tensor, w);
}

Var spmm(const CsrMatrix& a, Var x) {
  Matrix out = kernels::spmm(a, x.value());
  const CsrMatrix* ap = &a;
  return x.tape->record(std::move(out), {x}, [ap, xi = x.id](Tape& tp, std::size_t self) {
    tp.accumulate(xi, kernels::spmm(*ap, tp.grad(self)));
  });
}

Var relu(Var x) {
  const Matrix& in = x.value();
  Matrix out(in.rows, in.cols);
  for (std::size_t k = 0; k < in.size(); ++k) out.data[k] = in.data[k] > 0.0 ? in.data[k] : 0.0;
  return x.tape->record(std::move(out), {x}, [xi = x.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& pre = tp.value(xi);
    Matrix dx(g.rows, g.cols);
    for (std::size_t k = 0; k < g.size(); ++k) dx.data[k] = pre.data[k] > 0.0 ? g.data[k] : 0.0;
    tp.accumulate(xi, dx);
  });
}

Var dropout(Var x, double p, bool training, std::mt19937_64& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const Matrix& in = x.value();
  Matrix mask(in.rows, in.cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.data) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u >= p ? keep_scale : 0.0;
  }
  Matrix out(in.rows, in.cols);
  for (std::size_t k = 0; k < in.size(); ++k) out.data[k] = in.data[k] * mask.data[k];
  return x.tape->record(std::move(out), {x}, [xi = x.id, mask = std::move(mask)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix dx(g.rows, g.cols);
    for (std::size_t k = 0; k < g.size(); ++k) dx.data[k] = g.data[k] * mask.data[k];
    tp.accumulate(xi, dx);
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  require(a.value().same_shape(b.value()), "add: shape mismatch " + shape_str(a.value()) + " vs " +
                                               shape_str(b.value()));
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += b.value().data[k];
  return a.tape->record(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& tp, std::size_t self) {
    tp.accumulate(ai, tp.grad(self));
    tp.accumulate(bi, tp.grad(self));
  });
}

Var add_row_bias(Var x, Var bias) {
  same_tape(x, bias);
  require(bias.rows() == 1 && bias.cols() == x.cols(), "add_row_bias: bias must be 1x" + std::to_string(x.cols()));
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += bias.value()(0, j);
  return x.tape->record(std::move(out), {x, bias}, [xi = x.id, bi = bias.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(xi, g);
    if (tp.needs_grad(bi)) {
      Matrix db(1, g.cols);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) db(0, j) += g(i, j);
      tp.accumulate(bi, db);
    }
  });
}

Var scale(Var x, double s) { return affine_scalar(x, s, 0.0); }

Var affine_scalar(Var x, double a, double b) {
  Matrix out = x.value();
  for (double& v : out.data) v = a * v + b;
  return x.tape->record(std::move(out), {x}, [xi = x.id, a](Tape& tp, std::size_t self) {
    Matrix dx = tp.grad(self);
    for (double& v : dx.data) v *= a;
    tp.accumulate(xi, dx);
  });
}

Var row_scale(Var weights, Var x) {
  same_tape(weights, x);
  const Matrix& w = weights.value();
  const Matrix& in = x.value();
  require(w.cols == 1 && w.rows == in.rows, "row_scale: weights must be " + std::to_string(in.rows) + "x1");
  Matrix out(in.rows, in.cols);
  for (std::size_t i = 0; i < in.rows; ++i)
    for (std::size_t j = 0; j < in.cols; ++j) out(i, j) = w(i, 0) * in(i, j);
  return x.tape->record(std::move(out), {weights, x}, [wi = weights.id, xi = x.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& wv = tp.value(wi);
    const Matrix& xv = tp.value(xi);
    if (tp.needs_grad(wi)) {
      Matrix dw(wv.rows, 1);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) dw(i, 0) += g(i, j) * xv(i, j);
      tp.accumulate(wi, dw);
    }
    if (tp.needs_grad(xi)) {
      Matrix dx(g.rows, g.cols);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) dx(i, j) = wv(i, 0) * g(i, j);
      tp.accumulate(xi, dx);
    }
  });
}

Var concat_cols(const std::vector<Var>& cols) {
  require(!cols.empty(), "concat_cols: no inputs");
  const std::size_t n = cols.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const Var& v : cols) {
    require(v.rows() == n, "concat_cols: row counts differ");
    total += v.cols();
    ids.push_back(v.id);
  }
  Matrix out(n, total);
  std::size_t offset = 0;
  for (const Var& v : cols) {
    const Matrix& m = v.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m.cols; ++j) out(i, offset + j) = m(i, j);
    offset += m.cols;
  }
  return cols.front().tape->record(std::move(out), cols, [ids](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t w = tp.value(id).cols;
      if (tp.needs_grad(id)) {
        Matrix d(g.rows, w);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < w; ++j) d(i, j) = g(i, off + j);
        tp.accumulate(id, d);
      }
      off += w;
    }
  });
}

Var column(Var x, std::size_t j) {
  const Matrix& in = x.value();
  require(j < in.cols, "column: index out of range");
  Matrix out(in.rows, 1);
  for (std::size_t i = 0; i < in.rows; ++i) out(i, 0) = in(i, j);
  return x.tape->record(std::move(out), {x}, [xi = x.id, j](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& xv = tp.value(xi);
    Matrix dx(xv.rows, xv.cols);
    for (std::size_t i = 0; i < g.rows; ++i) dx(i, j) = g(i, 0);
    tp.accumulate(xi, dx);
  });
}

Var row_softmax(Var x) {
  const Matrix& in = x.value();
  Matrix out(in.rows, in.cols);
  for (std::size_t i = 0; i < in.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in.row(i)) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t j = 0; j < in.cols; ++j) sum += out(i, j) = std::exp(in(i, j) - mx);
    for (std::size_t j = 0; j < in.cols; ++j) out(i, j) /= sum;
  }
  return x.tape->record(std::move(out), {x}, [xi = x.id](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix dx(g.rows, g.cols);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols; ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(xi, dx);
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  require(rows * cols == x.value().size(), "reshape: element count mismatch");
  Matrix out = x.value();
  out.rows = rows;
  out.cols = cols;
  return x.tape->record(std::move(out), {x}, [xi = x.id](Tape& tp, std::size_t self) {
    Matrix g = tp.grad(self);
    g.rows = tp.value(xi).rows;
    g.cols = tp.value(xi).cols;
    tp.accumulate(xi, g);
  });
}

Var stack_slices(const std::vector<Var>& slices) {
  require(!slices.empty(), "stack_slices: no slices");
  const std::size_t n = slices.front().rows(), c = slices.front().cols(), s = slices.size();
  std::vector<std::size_t> ids;
  for (const Var& v : slices) {
    require(v.rows() == n && v.cols() == c, "stack_slices: slices differ in shape");
    ids.push_back(v.id);
  }
  Matrix out(n * c, s);
  for (std::size_t q = 0; q < s; ++q) {
    const Matrix& m = slices[q].value();
    for (std::size_t e = 0; e < n * c; ++e) out.data[e * s + q] = m.data[e];
  }
  return slices.front().tape->record(std::move(out), slices, [ids, n, c, s](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t q = 0; q < s; ++q) {
      if (!tp.needs_grad(ids[q])) continue;
      Matrix d(n, c);
      for (std::size_t e = 0; e < n * c; ++e) d.data[e] = g.data[e * s + q];
      tp.accumulate(ids[q], d);
    }
  });
}

Var weighted_slice_sum(const std::vector<Var>& slices, Var weights) {
  require(!slices.empty(), "weighted_slice_sum: no slices");
  const std::size_t n = slices.front().rows(), c = slices.front().cols(), s = slices.size();
  require(weights.rows() == n && weights.cols() == s, "weighted_slice_sum: weights must be n x s");
  std::vector<std::size_t> ids;
  std::vector<Var> inputs = slices;
  inputs.push_back(weights);
  for (const Var& v : slices) ids.push_back(v.id);
  const Matrix& w = weights.value();
  Matrix out(n, c);
  for (std::size_t q = 0; q < s; ++q) {
    const Matrix& m = slices[q].value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) out(i, j) += w(i, q) * m(i, j);
  }
  return weights.tape->record(std::move(out), inputs, [ids, wi = weights.id, n, c, s](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& wv = tp.value(wi);
    if (tp.needs_grad(wi)) {
      Matrix dw(n, s);
      for (std::size_t q = 0; q < s; ++q) {
        const Matrix& m = tp.value(ids[q]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) dw(i, q) += g(i, j) * m(i, j);
      }
      tp.accumulate(wi, dw);
    }
    for (std::size_t q = 0; q < s; ++q) {
      if (!tp.needs_grad(ids[q])) continue;
      Matrix d(n, c);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) d(i, j) = wv(i, q) * g(i, j);
      tp.accumulate(ids[q], d);
    }
  });
}

Var mean_slices(const std::vector<Var>& slices) {
  require(!slices.empty(), "mean_slices: no slices");
  const Matrix& first = slices.front().value();
  Matrix out(first.rows, first.cols);
  std::vector<std::size_t> ids;
  for (const Var& v : slices) {
    require(v.value().same_shape(first), "mean_slices: slices differ in shape");
    for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += v.value().data[k];
    ids.push_back(v.id);
  }
  const double inv = 1.0 / static_cast<double>(slices.size());
  for (double& v : out.data) v *= inv;
  return slices.front().tape->record(std::move(out), slices, [ids, inv](Tape& tp, std::size_t self) {
    Matrix d = tp.grad(self);
    for (double& v : d.data) v *= inv;
    for (auto id : ids) tp.accumulate(id, d);
  });
}

Var max_slices(const std::vector<Var>& slices) {
  require(!slices.empty(), "max_slices: no slices");
  const Matrix& first = slices.front().value();
  Matrix out = first;
  std::vector<std::uint32_t> arg(first.size(), 0);
  std::vector<std::size_t> ids{slices.front().id};
  for (std::size_t q = 1; q < slices.size(); ++q) {
    const Matrix& m = slices[q].value();
    require(m.same_shape(first), "max_slices: slices differ in shape");
    for (std::size_t k = 0; k < out.size(); ++k)
      if (m.data[k] > out.data[k]) {
        out.data[k] = m.data[k];
        arg[k] = static_cast<std::uint32_t>(q);
      }
    ids.push_back(slices[q].id);
  }
  return slices.front().tape->record(std::move(out), slices, [ids, arg = std::move(arg)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (!tp.needs_grad(ids[q])) continue;
      Matrix d(g.rows, g.cols);
      for (std::size_t k = 0; k < g.size(); ++k)
        if (arg[k] == q) d.data[k] = g.data[k];
      tp.accumulate(ids[q], d);
    }
  });
}

Var softmax_ce(Var logits, const std::vector<int>& labels, const std::vector<std::size_t>& rows) {
  require(!rows.empty(), "softmax_ce: empty node mask");
  const Matrix& z = logits.value();
  Matrix probs(rows.size(), z.cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    require(i < z.rows, "softmax_ce: row index out of range");
    const int y = labels.at(i);
    require(y >= 0 && static_cast<std::size_t>(y) < z.cols, "softmax_ce: label out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : z.row(i)) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) sum += probs(r, j) = std::exp(z(i, j) - mx);
    for (std::size_t j = 0; j < z.cols; ++j) probs(r, j) /= sum;
    loss -= (z(i, static_cast<std::size_t>(y)) - mx) - std::log(sum);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  Matrix out(1, 1, loss * inv);
  std::vector<int> ys;
  ys.reserve(rows.size());
  for (auto i : rows) ys.push_back(labels[i]);
  return logits.tape->record(
      std::move(out), {logits},
      [li = logits.id, rows, ys = std::move(ys), probs = std::move(probs), inv](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)(0, 0);
        const Matrix& zv = tp.value(li);
        Matrix dz(zv.rows, zv.cols);
        for (std::size_t r = 0; r < rows.size(); ++r) {
          for (std::size_t j = 0; j < zv.cols; ++j) dz(rows[r], j) += g * inv * probs(r, j);
          dz(rows[r], static_cast<std::size_t>(ys[r])) -= g * inv;
        }
        tp.accumulate(li, dz);
      });
}

// ----------------------------------------------------------------- optimizer

void adam_step(ParamStore& store, const AdamOptions& opt) {
  ++store.step;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (Param& p : store.all()) {
    if (!p.grad.same_shape(p.value)) p.grad = Matrix(p.value.rows, p.value.cols);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.data[k] + opt.weight_decay * p.value.data[k];
      p.m.data[k] = opt.beta1 * p.m.data[k] + (1.0 - opt.beta1) * g;
      p.v.data[k] = opt.beta2 * p.v.data[k] + (1.0 - opt.beta2) * g * g;
      const double mhat = p.m.data[k] / c1;
      const double vhat = p.v.data[k] / c2;
      p.value.data[k] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
    std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
  }
}

// ----------------------------------------------------------------- gradcheck

GradcheckReport gradcheck(ParamStore& store, const std::function<Var(Tape&)>& loss) {
  store.zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&] {
    Tape tape;
    return loss(tape).value()(0, 0);
  };
  GradcheckReport rep;
  for (Param& p : store.all()) {
    const Matrix analytic = p.grad;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double theta = p.value.data[k];
      const double h = 1e-5 * std::max(1.0, std::abs(theta));
      p.value.data[k] = theta + h;
      const double up = eval();
      p.value.data[k] = theta - h;
      const double down = eval();
      p.value.data[k] = theta;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++rep.checked;
      if (rel > rep.max_rel_error || rep.worst_param.empty()) {
        rep.max_rel_error = rel;
        rep.worst_param = p.name;
        rep.worst_index = k;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  store.zero_grad();
  return rep;
}

}  // namespace ledf::ad
