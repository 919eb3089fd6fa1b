#include "mhal/tape.h"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mhal/errors.h"

namespace mhal {

namespace {

// C (+)= A[m x k] * B[k x n]
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C += A[m x n] * B[k x n]^T  -> [m x k]
void mm_nt(const double* a, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * n;
    double* ci = c + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<std::size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// C += A[m x k]^T * B[m x n]  -> [k x n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* bi = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

double log_sum_exp(const double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::exp(x[i] - m);
  return m + std::log(acc);
}

double fwd_tanh(double x) { return std::tanh(x); }
double dfdy_tanh(double, double y) { return 1.0 - y * y; }
double fwd_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double dfdy_sigmoid(double, double y) { return y * (1.0 - y); }
double fwd_exp(double x) { return std::exp(x); }
double dfdy_exp(double, double y) { return y; }

}  // namespace

Var Tape::emplace(Tensor value, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.grad.assign(n.value.data.size(), 0.0);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_mine(Var v, const char* op) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw ShapeError(std::string(op) + ": operand does not belong to this tape");
  }
}

const Tensor& Tape::value(Var v) const {
  check_mine(v, "value");
  return node(v.id).value;
}

const std::vector<double>& Tape::grad(Var v) const {
  check_mine(v, "grad");
  return node(v.id).grad;
}

Var Tape::input(Tensor t) { return emplace(std::move(t), nullptr); }

Var Tape::parameter(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Tensor copy;
  copy.shape = p.value.shape;
  copy.data = p.value.data;
  Parameter* pp = &p;
  Var out = emplace(std::move(copy), nullptr);
  const int id = out.id;
  node(id).backprop = [id, pp](Tape& t) {
    pp->value.ensure_grad();
    const auto& g = t.node(id).grad;
    for (std::size_t i = 0; i < g.size(); ++i) pp->value.grad[i] += g[i];
  };
  param_nodes_.emplace(&p, id);
  return out;
}

Var Tape::lookup(Parameter& table, const std::vector<int>& row_ids) {
  if (table.value.rank() != 2) {
    throw ShapeError("lookup: table must be rank-2, got " + shape_str(table.value.shape));
  }
  const int v = table.value.rows();
  const int d = table.value.cols();
  for (int id : row_ids) {
    if (id < 0 || id >= v) {
      throw ShapeError("lookup: row " + std::to_string(id) + " outside table " +
                       shape_str(table.value.shape));
    }
  }
  Tensor out({static_cast<int>(row_ids.size()), d});
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    const double* src = table.value.data.data() + static_cast<std::size_t>(row_ids[i]) * d;
    std::copy(src, src + d, out.data.data() + i * d);
  }
  Parameter* pp = &table;
  std::vector<int> ids = row_ids;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, pp, ids, d](Tape& t) {
    pp->value.ensure_grad();
    const auto& g = t.node(id).grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = pp->value.grad.data() + static_cast<std::size_t>(ids[i]) * d;
      const double* src = g.data() + i * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  };
  return o;
}

// --- structure ---------------------------------------------------------

Var Tape::transpose(Var a) {
  check_mine(a, "transpose");
  const Tensor& ta = value(a);
  if (ta.rank() != 2) throw ShapeError("transpose: need rank-2, got " + shape_str(ta.shape));
  const int m = ta.rows(), n = ta.cols();
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
  const int src = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, src, m, n](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& gs = t.node(src).grad;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) gs[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
  };
  return o;
}

Var Tape::concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  int total = 0;
  for (Var p : parts) {
    check_mine(p, "concat");
    if (value(p).rank() != 1) throw ShapeError("concat: need rank-1 parts, got " + shape_str(value(p).shape));
    total += value(p).shape[0];
  }
  Tensor out({total});
  std::vector<int> ids;
  std::vector<int> lens;
  int off = 0;
  for (Var p : parts) {
    const Tensor& tp = value(p);
    std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + off);
    ids.push_back(p.id);
    lens.push_back(tp.shape[0]);
    off += tp.shape[0];
  }
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ids, lens](Tape& t) {
    const auto& g = t.node(id).grad;
    int off2 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto& gs = t.node(ids[k]).grad;
      for (int j = 0; j < lens[k]; ++j) gs[j] += g[off2 + j];
      off2 += lens[k];
    }
  };
  return o;
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no operands");
  check_mine(rows[0], "stack_rows");
  const int n = value(rows[0]).shape.at(0);
  for (Var r : rows) {
    check_mine(r, "stack_rows");
    if (value(r).rank() != 1 || value(r).shape[0] != n) {
      throw ShapeError("stack_rows: rows must share length, got " + shape_str(value(r).shape));
    }
  }
  const int k = static_cast<int>(rows.size());
  Tensor out({k, n});
  std::vector<int> ids;
  for (int i = 0; i < k; ++i) {
    const Tensor& tr = value(rows[i]);
    std::copy(tr.data.begin(), tr.data.end(), out.data.begin() + static_cast<std::size_t>(i) * n);
    ids.push_back(rows[i].id);
  }
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ids, n](Tape& t) {
    const auto& g = t.node(id).grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto& gs = t.node(ids[i]).grad;
      for (int j = 0; j < n; ++j) gs[j] += g[i * n + j];
    }
  };
  return o;
}

Var Tape::stack_cols(const std::vector<Var>& cols) {
  if (cols.empty()) throw ShapeError("stack_cols: no operands");
  check_mine(cols[0], "stack_cols");
  const int m = value(cols[0]).shape.at(0);
  for (Var c : cols) {
    check_mine(c, "stack_cols");
    if (value(c).rank() != 1 || value(c).shape[0] != m) {
      throw ShapeError("stack_cols: columns must share length, got " + shape_str(value(c).shape));
    }
  }
  const int k = static_cast<int>(cols.size());
  Tensor out({m, k});
  std::vector<int> ids;
  for (int j = 0; j < k; ++j) {
    const Tensor& tc = value(cols[j]);
    for (int i = 0; i < m; ++i) out.at(i, j) = tc.at(i);
    ids.push_back(cols[j].id);
  }
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ids, m, k](Tape& t) {
    const auto& g = t.node(id).grad;
    for (int j = 0; j < k; ++j) {
      auto& gs = t.node(ids[static_cast<std::size_t>(j)]).grad;
      for (int i = 0; i < m; ++i) gs[i] += g[static_cast<std::size_t>(i) * k + j];
    }
  };
  return o;
}

Var Tape::hconcat(Var a, Var b) {
  check_mine(a, "hconcat");
  check_mine(b, "hconcat");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows()) {
    throw ShapeError("hconcat: incompatible shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape));
  }
  const int m = ta.rows(), p = ta.cols(), q = tb.cols();
  Tensor out({m, p + q});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < p; ++j) out.at(i, j) = ta.at(i, j);
    for (int j = 0; j < q; ++j) out.at(i, p + j) = tb.at(i, j);
  }
  const int ia = a.id, ib = b.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, ib, m, p, q](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& ga = t.node(ia).grad;
    auto& gb = t.node(ib).grad;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < p; ++j) ga[static_cast<std::size_t>(i) * p + j] += g[static_cast<std::size_t>(i) * (p + q) + j];
      for (int j = 0; j < q; ++j) gb[static_cast<std::size_t>(i) * q + j] += g[static_cast<std::size_t>(i) * (p + q) + p + j];
    }
  };
  return o;
}

Var Tape::row(Var a, int i) {
  check_mine(a, "row");
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || i < 0 || i >= ta.rows()) {
    throw ShapeError("row: index " + std::to_string(i) + " outside " + shape_str(ta.shape));
  }
  const int n = ta.cols();
  Tensor out({n});
  std::copy(ta.data.begin() + static_cast<std::size_t>(i) * n,
            ta.data.begin() + static_cast<std::size_t>(i + 1) * n, out.data.begin());
  const int src = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, src, i, n](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& gs = t.node(src).grad;
    for (int j = 0; j < n; ++j) gs[static_cast<std::size_t>(i) * n + j] += g[j];
  };
  return o;
}

Var Tape::column(Var a, int j) {
  check_mine(a, "column");
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || j < 0 || j >= ta.cols()) {
    throw ShapeError("column: index " + std::to_string(j) + " outside " + shape_str(ta.shape));
  }
  const int m = ta.rows(), n = ta.cols();
  Tensor out({m});
  for (int i = 0; i < m; ++i) out.at(i) = ta.at(i, j);
  const int src = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, src, j, m, n](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& gs = t.node(src).grad;
    for (int i = 0; i < m; ++i) gs[static_cast<std::size_t>(i) * n + j] += g[i];
  };
  return o;
}

Var Tape::rows_range(Var a, int first, int count) {
  check_mine(a, "rows_range");
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || first < 0 || count < 1 || first + count > ta.rows()) {
    throw ShapeError("rows_range: [" + std::to_string(first) + "," + std::to_string(first + count) +
                     ") outside " + shape_str(ta.shape));
  }
  const int n = ta.cols();
  Tensor out({count, n});
  std::copy(ta.data.begin() + static_cast<std::size_t>(first) * n,
            ta.data.begin() + static_cast<std::size_t>(first + count) * n, out.data.begin());
  const int src = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, src, first, count, n](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& gs = t.node(src).grad;
    for (std::size_t x = 0; x < static_cast<std::size_t>(count) * n; ++x) {
      gs[static_cast<std::size_t>(first) * n + x] += g[x];
    }
  };
  return o;
}

Var Tape::gather(Var a, std::vector<int> ids) {
  check_mine(a, "gather");
  const Tensor& ta = value(a);
  if (ta.rank() != 1) throw ShapeError("gather: need rank-1, got " + shape_str(ta.shape));
  if (ids.empty()) throw ShapeError("gather: no indices");
  for (int i : ids) {
    if (i < 0 || i >= ta.shape[0]) {
      throw ShapeError("gather: index " + std::to_string(i) + " outside " + shape_str(ta.shape));
    }
  }
  Tensor out({static_cast<int>(ids.size())});
  for (std::size_t k = 0; k < ids.size(); ++k) out.at(static_cast<int>(k)) = ta.at(ids[k]);
  const int src = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, src, ids](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& gs = t.node(src).grad;
    for (std::size_t k = 0; k < ids.size(); ++k) gs[ids[k]] += g[k];
  };
  return o;
}

// --- arithmetic ----------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  check_mine(a, "matmul");
  check_mine(b, "matmul");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const bool va = ta.rank() == 1, vb = tb.rank() == 1;
  if ((ta.rank() != 1 && ta.rank() != 2) || (tb.rank() != 1 && tb.rank() != 2)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape));
  }
  const int m = va ? 1 : ta.shape[0];
  const int k = va ? ta.shape[0] : ta.shape[1];
  const int kb = vb ? tb.shape[0] : tb.shape[0];
  const int n = vb ? 1 : tb.shape[1];
  if (k != kb) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape));
  }
  Shape out_shape;
  if (va && vb) out_shape = {1};
  else if (va) out_shape = {n};
  else if (vb) out_shape = {m};
  else out_shape = {m, n};
  Tensor out(out_shape);
  mm_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  const int ia = a.id, ib = b.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, ib, m, k, n](Tape& t) {
    const auto& g = t.node(id).grad;
    const auto& da = t.node(ia).value.data;
    const auto& db = t.node(ib).value.data;
    // dA += dC * B^T, dB += A^T * dC
    mm_nt(g.data(), db.data(), t.node(ia).grad.data(), m, n, k);
    mm_tn(da.data(), g.data(), t.node(ib).grad.data(), m, k, n);
  };
  return o;
}

Var Tape::add(Var a, Var b) {
  check_mine(a, "add");
  check_mine(b, "add");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() == 2 && tb.rank() == 1 && ta.cols() == tb.shape[0]) return add_rowwise(a, b);
  if (ta.shape != tb.shape) {
    throw ShapeError("add: incompatible shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape));
  }
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  const int ia = a.id, ib = b.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, ib](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& ga = t.node(ia).grad;
    auto& gb = t.node(ib).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return o;
}

Var Tape::add_rowwise(Var m, Var v) {
  check_mine(m, "add_rowwise");
  check_mine(v, "add_rowwise");
  const Tensor& tm = value(m);
  const Tensor& tv = value(v);
  if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.shape[0]) {
    throw ShapeError("add_rowwise: incompatible shapes " + shape_str(tm.shape) + " and " + shape_str(tv.shape));
  }
  const int r = tm.rows(), c = tm.cols();
  Tensor out({r, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = tm.at(i, j) + tv.at(j);
  const int im = m.id, iv = v.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, im, iv, r, c](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& gm = t.node(im).grad;
    auto& gv = t.node(iv).grad;
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) {
        gm[static_cast<std::size_t>(i) * c + j] += g[static_cast<std::size_t>(i) * c + j];
        gv[j] += g[static_cast<std::size_t>(i) * c + j];
      }
    }
  };
  return o;
}

Var Tape::sub(Var a, Var b) {
  check_mine(a, "sub");
  check_mine(b, "sub");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape != tb.shape) {
    throw ShapeError("sub: incompatible shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape));
  }
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] - tb.data[i];
  const int ia = a.id, ib = b.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, ib](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& ga = t.node(ia).grad;
    auto& gb = t.node(ib).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return o;
}

Var Tape::cmult(Var a, Var b) {
  check_mine(a, "cmult");
  check_mine(b, "cmult");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape != tb.shape) {
    throw ShapeError("cmult: incompatible shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape));
  }
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  const int ia = a.id, ib = b.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, ib](Tape& t) {
    const auto& g = t.node(id).grad;
    const auto& da = t.node(ia).value.data;
    const auto& db = t.node(ib).value.data;
    auto& ga = t.node(ia).grad;
    auto& gb = t.node(ib).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * db[i];
      gb[i] += g[i] * da[i];
    }
  };
  return o;
}

Var Tape::colwise_div(Var m, Var v) {
  check_mine(m, "colwise_div");
  check_mine(v, "colwise_div");
  const Tensor& tm = value(m);
  const Tensor& tv = value(v);
  if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.shape[0]) {
    throw ShapeError("colwise_div: incompatible shapes " + shape_str(tm.shape) + " and " + shape_str(tv.shape));
  }
  const int r = tm.rows(), c = tm.cols();
  Tensor out({r, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = tm.at(i, j) / tv.at(j);
  const int im = m.id, iv = v.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, im, iv, r, c](Tape& t) {
    const auto& g = t.node(id).grad;
    const auto& dm = t.node(im).value.data;
    const auto& dv = t.node(iv).value.data;
    auto& gm = t.node(im).grad;
    auto& gv = t.node(iv).grad;
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) {
        const std::size_t x = static_cast<std::size_t>(i) * c + j;
        gm[x] += g[x] / dv[j];
        gv[j] -= g[x] * dm[x] / (dv[j] * dv[j]);
      }
    }
  };
  return o;
}

Var Tape::scale(Var a, double k) {
  check_mine(a, "scale");
  Tensor out(value(a).shape);
  const Tensor& ta = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = k * ta.data[i];
  const int ia = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, k](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& ga = t.node(ia).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
  };
  return o;
}

Var Tape::add_const(Var a, double c) {
  check_mine(a, "add_const");
  const Tensor& ta = value(a);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] + c;
  const int ia = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& ga = t.node(ia).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return o;
}

Var Tape::square(Var a) {
  check_mine(a, "square");
  const Tensor& ta = value(a);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * ta.data[i];
  const int ia = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia](Tape& t) {
    const auto& g = t.node(id).grad;
    const auto& da = t.node(ia).value.data;
    auto& ga = t.node(ia).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * da[i] * g[i];
  };
  return o;
}

// --- nonlinearities --------------------------------------------------------

Var Tape::unary_ew(Var a, double (*fwd)(double), double (*dfdy)(double, double)) {
  check_mine(a, "elementwise");
  const Tensor& ta = value(a);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = fwd(ta.data[i]);
  const int ia = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, dfdy](Tape& t) {
    const auto& g = t.node(id).grad;
    const auto& x = t.node(ia).value.data;
    const auto& y = t.node(id).value.data;
    auto& ga = t.node(ia).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += dfdy(x[i], y[i]) * g[i];
  };
  return o;
}

Var Tape::tanh(Var a) { return unary_ew(a, fwd_tanh, dfdy_tanh); }
Var Tape::sigmoid(Var a) { return unary_ew(a, fwd_sigmoid, dfdy_sigmoid); }
Var Tape::exp(Var a) { return unary_ew(a, fwd_exp, dfdy_exp); }

Var Tape::softmax(Var a, int axis) {
  check_mine(a, "softmax");
  const Tensor& ta = value(a);
  if (ta.size() == 0) throw ShapeError("softmax: empty tensor");
  if (ta.rank() > 2) throw ShapeError("softmax: rank > 2 unsupported, got " + shape_str(ta.shape));
  if (ta.rank() == 1) axis = 0;
  if (axis == -1) axis = ta.rank() - 1;
  if (axis < 0 || axis >= ta.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " outside " + shape_str(ta.shape));
  }
  // slices: independent vectors along `axis`
  const int r = ta.rank() == 1 ? 1 : ta.shape[0];
  const int c = ta.rank() == 1 ? ta.shape[0] : ta.shape[1];
  const bool over_rows = ta.rank() == 1 || axis == 1;  // normalize within each row
  Tensor out(ta.shape);
  auto normalize = [](const double* x, double* y, int n, int stride) {
    double m = x[0];
    for (int i = 1; i < n; ++i) m = std::max(m, x[static_cast<std::size_t>(i) * stride]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(x[static_cast<std::size_t>(i) * stride] - m);
    for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i) * stride] = std::exp(x[static_cast<std::size_t>(i) * stride] - m) / z;
  };
  if (over_rows) {
    for (int i = 0; i < r; ++i) normalize(ta.data.data() + static_cast<std::size_t>(i) * c, out.data.data() + static_cast<std::size_t>(i) * c, c, 1);
  } else {
    for (int j = 0; j < c; ++j) normalize(ta.data.data() + j, out.data.data() + j, r, c);
  }
  const int ia = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, r, c, over_rows](Tape& t) {
    const auto& g = t.node(id).grad;
    const auto& p = t.node(id).value.data;
    auto& ga = t.node(ia).grad;
    auto slice_back = [&](int start, int n, int stride) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) {
        const std::size_t x = static_cast<std::size_t>(start) + static_cast<std::size_t>(i) * stride;
        dot += g[x] * p[x];
      }
      for (int i = 0; i < n; ++i) {
        const std::size_t x = static_cast<std::size_t>(start) + static_cast<std::size_t>(i) * stride;
        ga[x] += p[x] * (g[x] - dot);
      }
    };
    if (over_rows) {
      for (int i = 0; i < r; ++i) slice_back(i * c, c, 1);
    } else {
      for (int j = 0; j < c; ++j) slice_back(j, r, c);
    }
  };
  return o;
}

// --- reductions --------------------------------------------------------------

Var Tape::reduce_sum(Var a) {
  check_mine(a, "reduce_sum");
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  const int ia = a.id;
  Var o = emplace(Tensor::scalar(acc), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia](Tape& t) {
    const double g = t.node(id).grad[0];
    auto& ga = t.node(ia).grad;
    for (double& v : ga) v += g;
  };
  return o;
}

Var Tape::reduce_mean(Var a) {
  check_mine(a, "reduce_mean");
  const double inv = 1.0 / static_cast<double>(value(a).size());
  return scale(reduce_sum(a), inv);
}

Var Tape::reduce_sum(Var a, int axis) {
  check_mine(a, "reduce_sum");
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || (axis != 0 && axis != 1)) {
    throw ShapeError("reduce_sum: axis " + std::to_string(axis) + " on " + shape_str(ta.shape));
  }
  const int r = ta.rows(), c = ta.cols();
  Tensor out({axis == 0 ? c : r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(axis == 0 ? j : i) += ta.at(i, j);
  const int ia = a.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, r, c, axis](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& ga = t.node(ia).grad;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) ga[static_cast<std::size_t>(i) * c + j] += g[axis == 0 ? j : i];
  };
  return o;
}

Var Tape::reduce_mean(Var a, int axis) {
  check_mine(a, "reduce_mean");
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || (axis != 0 && axis != 1)) {
    throw ShapeError("reduce_mean: axis " + std::to_string(axis) + " on " + shape_str(ta.shape));
  }
  const double inv = 1.0 / static_cast<double>(axis == 0 ? ta.rows() : ta.cols());
  return scale(reduce_sum(a, axis), inv);
}

Var Tape::reduce_max(Var a) {
  check_mine(a, "reduce_max");
  const Tensor& ta = value(a);
  int best = 0;
  for (std::size_t i = 1; i < ta.data.size(); ++i) {
    if (ta.data[i] > ta.data[best]) best = static_cast<int>(i);
  }
  const int ia = a.id;
  Var o = emplace(Tensor::scalar(ta.data[best]), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, best](Tape& t) {
    t.node(ia).grad[best] += t.node(id).grad[0];
  };
  return o;
}

// --- stochastic ----------------------------------------------------------------

Var Tape::dropout(Var a, double rate, Rng& rng) {
  check_mine(a, "dropout");
  if (rate < 0.0 || rate >= 1.0) {
    throw ShapeError("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return a;
  const Tensor& ta = value(a);
  Tensor mask = dropout_mask(ta.shape, rate, rng);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * mask.data[i];
  const int ia = a.id;
  std::vector<double> m = std::move(mask.data);
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, m](Tape& t) {
    const auto& g = t.node(id).grad;
    auto& ga = t.node(ia).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * m[i];
  };
  return o;
}

// --- fused compound ops ----------------------------------------------------------

Var Tape::lstm_sequence(Var x, Var wx, Var wh, Var b, bool reversed) {
  check_mine(x, "lstm_sequence");
  check_mine(wx, "lstm_sequence");
  check_mine(wh, "lstm_sequence");
  check_mine(b, "lstm_sequence");
  const Tensor& tx = value(x);
  const Tensor& twx = value(wx);
  const Tensor& twh = value(wh);
  const Tensor& tb = value(b);
  if (tx.rank() != 2 || twx.rank() != 2 || twh.rank() != 2 || tb.rank() != 1) {
    throw ShapeError("lstm_sequence: bad operand ranks");
  }
  const int n = tx.rows();
  const int in_dim = tx.cols();
  const int h = twh.rows();
  const int g4 = 4 * h;
  if (twx.rows() != in_dim || twx.cols() != g4 || twh.cols() != g4 || tb.shape[0] != g4) {
    throw ShapeError("lstm_sequence: incompatible shapes x" + shape_str(tx.shape) + " wx" +
                     shape_str(twx.shape) + " wh" + shape_str(twh.shape) + " b" + shape_str(tb.shape));
  }

  struct Cache {
    std::vector<double> gates;  // [n x 4h], post-activation, blocks [i f o g]
    std::vector<double> cell;   // [n x h]
    std::vector<double> ctan;   // [n x h]
  };
  auto cache = std::make_shared<Cache>();
  cache->gates.assign(static_cast<std::size_t>(n) * g4, 0.0);
  cache->cell.assign(static_cast<std::size_t>(n) * h, 0.0);
  cache->ctan.assign(static_cast<std::size_t>(n) * h, 0.0);

  Tensor out({n, h});
  std::vector<double> pre(static_cast<std::size_t>(g4));
  for (int step = 0; step < n; ++step) {
    const int pos = reversed ? n - 1 - step : step;
    const int prev = reversed ? pos + 1 : pos - 1;
    const double* xrow = tx.data.data() + static_cast<std::size_t>(pos) * in_dim;
    const double* hprev = step == 0 ? nullptr : out.data.data() + static_cast<std::size_t>(prev) * h;
    const double* cprev = step == 0 ? nullptr : cache->cell.data() + static_cast<std::size_t>(prev) * h;

    for (int gj = 0; gj < g4; ++gj) pre[gj] = tb.data[gj];
    mm_nn(xrow, twx.data.data(), pre.data(), 1, in_dim, g4);
    if (hprev != nullptr) mm_nn(hprev, twh.data.data(), pre.data(), 1, h, g4);

    double* gates = cache->gates.data() + static_cast<std::size_t>(pos) * g4;
    double* cell = cache->cell.data() + static_cast<std::size_t>(pos) * h;
    double* ctan = cache->ctan.data() + static_cast<std::size_t>(pos) * h;
    double* hrow = out.data.data() + static_cast<std::size_t>(pos) * h;
    for (int j = 0; j < h; ++j) {
      const double gi = fwd_sigmoid(pre[j]);
      const double gf = fwd_sigmoid(pre[h + j]);
      const double go = fwd_sigmoid(pre[2 * h + j]);
      const double gg = fwd_tanh(pre[3 * h + j]);
      gates[j] = gi;
      gates[h + j] = gf;
      gates[2 * h + j] = go;
      gates[3 * h + j] = gg;
      const double c = gf * (cprev ? cprev[j] : 0.0) + gi * gg;
      cell[j] = c;
      ctan[j] = fwd_tanh(c);
      hrow[j] = go * ctan[j];
    }
  }

  const int ix = x.id, iwx = wx.id, iwh = wh.id, ib = b.id;
  Var o = emplace(std::move(out), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ix, iwx, iwh, ib, cache, n, in_dim, h, g4, reversed](Tape& t) {
    const auto& gout = t.node(id).grad;
    const auto& hval = t.node(id).value.data;
    const auto& xval = t.node(ix).value.data;
    const auto& wxval = t.node(iwx).value.data;
    const auto& whval = t.node(iwh).value.data;
    auto& gx = t.node(ix).grad;
    auto& gwx = t.node(iwx).grad;
    auto& gwh = t.node(iwh).grad;
    auto& gb = t.node(ib).grad;

    std::vector<double> dh_carry(static_cast<std::size_t>(h), 0.0);
    std::vector<double> dc_carry(static_cast<std::size_t>(h), 0.0);
    std::vector<double> dpre(static_cast<std::size_t>(g4));
    for (int step = n - 1; step >= 0; --step) {
      const int pos = reversed ? n - 1 - step : step;
      const int prev = reversed ? pos + 1 : pos - 1;
      const double* gates = cache->gates.data() + static_cast<std::size_t>(pos) * g4;
      const double* ctan = cache->ctan.data() + static_cast<std::size_t>(pos) * h;
      const double* cprev = step == 0 ? nullptr : cache->cell.data() + static_cast<std::size_t>(prev) * h;
      const double* hprev = step == 0 ? nullptr : hval.data() + static_cast<std::size_t>(prev) * h;

      for (int j = 0; j < h; ++j) {
        const double dh = gout[static_cast<std::size_t>(pos) * h + j] + dh_carry[j];
        const double gi = gates[j], gf = gates[h + j], go = gates[2 * h + j], gg = gates[3 * h + j];
        const double dob = dh * ctan[j];
        const double dct = dh * go;
        const double dc = dc_carry[j] + dct * (1.0 - ctan[j] * ctan[j]);
        const double di = dc * gg;
        const double dg = dc * gi;
        const double df = dc * (cprev ? cprev[j] : 0.0);
        dc_carry[j] = dc * gf;
        dpre[j] = di * gi * (1.0 - gi);
        dpre[h + j] = df * gf * (1.0 - gf);
        dpre[2 * h + j] = dob * go * (1.0 - go);
        dpre[3 * h + j] = dg * (1.0 - gg * gg);
      }
      for (int gj = 0; gj < g4; ++gj) gb[gj] += dpre[gj];
      // dWx += x_pos^T (x) dpre ; dx_pos += dpre * Wx^T
      const double* xrow = xval.data() + static_cast<std::size_t>(pos) * in_dim;
      mm_tn(xrow, dpre.data(), gwx.data(), 1, in_dim, g4);
      mm_nt(dpre.data(), wxval.data(), gx.data() + static_cast<std::size_t>(pos) * in_dim, 1, g4, in_dim);
      std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
      if (hprev != nullptr) {
        mm_tn(hprev, dpre.data(), gwh.data(), 1, h, g4);
        mm_nt(dpre.data(), whval.data(), dh_carry.data(), 1, g4, h);
      }
    }
  };
  return o;
}

Var Tape::cosine_similarity(Var a, Var b, double norm_floor) {
  check_mine(a, "cosine_similarity");
  check_mine(b, "cosine_similarity");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 1 || ta.shape != tb.shape) {
    throw ShapeError("cosine_similarity: incompatible shapes " + shape_str(ta.shape) + " and " +
                     shape_str(tb.shape));
  }
  const int n = ta.shape[0];
  double dot = 0.0, qa = 0.0, qb = 0.0;
  for (int i = 0; i < n; ++i) {
    dot += ta.at(i) * tb.at(i);
    qa += ta.at(i) * ta.at(i);
    qb += tb.at(i) * tb.at(i);
  }
  const double na_raw = std::sqrt(qa), nb_raw = std::sqrt(qb);
  const double na = std::max(na_raw, norm_floor);
  const double nb = std::max(nb_raw, norm_floor);
  const double cos = dot / (na * nb);
  const int ia = a.id, ib = b.id;
  const bool clamp_a = na_raw < norm_floor, clamp_b = nb_raw < norm_floor;
  Var o = emplace(Tensor::scalar(cos), nullptr);
  const int id = o.id;
  node(id).backprop = [id, ia, ib, n, na, nb, cos, clamp_a, clamp_b](Tape& t) {
    const double g = t.node(id).grad[0];
    const auto& da = t.node(ia).value.data;
    const auto& db = t.node(ib).value.data;
    auto& ga = t.node(ia).grad;
    auto& gb = t.node(ib).grad;
    for (int i = 0; i < n; ++i) {
      double dgi = db[i] / (na * nb);
      if (!clamp_a) dgi -= cos * da[i] / (na * na);
      ga[i] += g * dgi;
      double dgj = da[i] / (na * nb);
      if (!clamp_b) dgj -= cos * db[i] / (nb * nb);
      gb[i] += g * dgj;
    }
  };
  return o;
}

Var Tape::smoothed_cross_entropy(Var scores, int gold, double eps) {
  check_mine(scores, "smoothed_cross_entropy");
  const Tensor& ts = value(scores);
  if (ts.rank() != 1) {
    throw ShapeError("smoothed_cross_entropy: need rank-1 scores, got " + shape_str(ts.shape));
  }
  const int k = ts.shape[0];
  if (gold < 0 || gold >= k) {
    throw ShapeError("smoothed_cross_entropy: gold " + std::to_string(gold) + " outside " +
                     shape_str(ts.shape));
  }
  if (eps < 0.0 || eps >= 1.0) {
    throw ShapeError("smoothed_cross_entropy: eps must lie in [0,1)");
  }
  const double lse = log_sum_exp(ts.data.data(), k);
  // loss = sum_j target_j * (lse - s_j),   target = (1-eps)*onehot + eps/k
  double loss = lse - (1.0 - eps) * ts.at(gold);
  const double u = eps / k;
  if (u > 0.0) {
    for (int j = 0; j < k; ++j) loss -= u * ts.at(j);
  }
  const int is = scores.id;
  Var o = emplace(Tensor::scalar(loss), nullptr);
  const int id = o.id;
  node(id).backprop = [id, is, gold, eps, k, lse](Tape& t) {
    const double g = t.node(id).grad[0];
    const auto& s = t.node(is).value.data;
    auto& gs = t.node(is).grad;
    const double u = eps / k;
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(s[j] - lse);
      const double target = u + (j == gold ? 1.0 - eps : 0.0);
      gs[j] += g * (p - target);
    }
  };
  return o;
}

Var Tape::smoothed_cross_entropy_rows(Var scores, const std::vector<int>& golds, double eps) {
  check_mine(scores, "smoothed_cross_entropy_rows");
  const Tensor& ts = value(scores);
  if (ts.rank() != 2 || static_cast<int>(golds.size()) != ts.rows()) {
    throw ShapeError("smoothed_cross_entropy_rows: " + std::to_string(golds.size()) +
                     " targets for scores " + shape_str(ts.shape));
  }
  if (eps < 0.0 || eps >= 1.0) {
    throw ShapeError("smoothed_cross_entropy_rows: eps must lie in [0,1)");
  }
  const int r = ts.rows(), k = ts.cols();
  for (int g : golds) {
    if (g >= k) {
      throw ShapeError("smoothed_cross_entropy_rows: gold " + std::to_string(g) + " outside " +
                       shape_str(ts.shape));
    }
  }
  double loss = 0.0;
  std::vector<double> lses(static_cast<std::size_t>(r), 0.0);
  const double u = eps / k;
  for (int i = 0; i < r; ++i) {
    if (golds[i] < 0) continue;
    const double* srow = ts.data.data() + static_cast<std::size_t>(i) * k;
    const double lse = log_sum_exp(srow, k);
    lses[i] = lse;
    loss += lse - (1.0 - eps) * srow[golds[i]];
    if (u > 0.0) {
      for (int j = 0; j < k; ++j) loss -= u * srow[j];
    }
  }
  const int is = scores.id;
  std::vector<int> tg = golds;
  Var o = emplace(Tensor::scalar(loss), nullptr);
  const int id = o.id;
  node(id).backprop = [id, is, tg, eps, r, k, lses](Tape& t) {
    const double g = t.node(id).grad[0];
    const auto& s = t.node(is).value.data;
    auto& gs = t.node(is).grad;
    const double u = eps / k;
    for (int i = 0; i < r; ++i) {
      if (tg[i] < 0) continue;
      for (int j = 0; j < k; ++j) {
        const std::size_t x = static_cast<std::size_t>(i) * k + j;
        const double p = std::exp(s[x] - lses[i]);
        const double target = u + (j == tg[i] ? 1.0 - eps : 0.0);
        gs[x] += g * (p - target);
      }
    }
  };
  return o;
}

// --- execution ----------------------------------------------------------------

void Tape::backward(Var loss) {
  check_mine(loss, "backward");
  if (!value(loss).is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(value(loss).shape));
  }
  if (backward_done_) throw ShapeError("backward: tape already replayed");
  backward_done_ = true;
  node(loss.id).grad[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    if (node(id).backprop) node(id).backprop(*this);
  }
}

}  // namespace mhal
