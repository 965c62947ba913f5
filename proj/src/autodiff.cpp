#include "msan/autodiff.hpp"

#include <cmath>

namespace msan::ad {

std::string Shape::str() const {
  std::string s = "(";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

Tensor Tape::emplace(std::vector<double> values, Shape shape, BackFn back) {
  if (static_cast<int>(values.size()) != shape.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape.str());
  }
  values_.push_back(std::move(values));
  grads_.emplace_back();
  shapes_.push_back(std::move(shape));
  back_.push_back(std::move(back));
  return Tensor{static_cast<int>(values_.size()) - 1};
}

Tensor Tape::leaf(std::vector<double> values, Shape shape) {
  return emplace(std::move(values), std::move(shape), nullptr);
}

Tensor Tape::constant(std::vector<double> values, Shape shape) {
  return emplace(std::move(values), std::move(shape), nullptr);
}

std::vector<double>& Tape::grad_mut(int id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(shapes_[id].numel(), 0.0);
  return g;
}

const std::vector<double>& Tape::grad(Tensor t) const {
  static const std::vector<double> kEmpty;
  const auto& g = grads_.at(t.id);
  return g.empty() ? kEmpty : g;
}

void Tape::check_same_shape(Tensor a, Tensor b, const char* op) const {
  if (!(shape(a) == shape(b))) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape(a).str() + " vs " + shape(b).str());
  }
}

Tensor Tape::add(Tensor a, Tensor b) {
  check_same_shape(a, b, "add");
  std::vector<double> out = values_[a.id];
  const auto& vb = values_[b.id];
  for (size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  Tensor r = emplace(std::move(out), shapes_[a.id], nullptr);
  back_[r.id] = [a, b, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    auto& ga = t.grad_mut(a.id);
    auto& gb = t.grad_mut(b.id);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return r;
}

Tensor Tape::sub(Tensor a, Tensor b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out = values_[a.id];
  const auto& vb = values_[b.id];
  for (size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  Tensor r = emplace(std::move(out), shapes_[a.id], nullptr);
  back_[r.id] = [a, b, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    auto& ga = t.grad_mut(a.id);
    auto& gb = t.grad_mut(b.id);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return r;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out = values_[a.id];
  const auto& vb = values_[b.id];
  for (size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  Tensor r = emplace(std::move(out), shapes_[a.id], nullptr);
  back_[r.id] = [a, b, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    const auto& va = t.values_[a.id];
    const auto& vb2 = t.values_[b.id];
    auto& ga = t.grad_mut(a.id);
    auto& gb = t.grad_mut(b.id);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb2[i];
      gb[i] += g[i] * va[i];
    }
  };
  return r;
}

Tensor Tape::scale(Tensor a, double c) {
  std::vector<double> out = values_[a.id];
  for (double& v : out) v *= c;
  Tensor r = emplace(std::move(out), shapes_[a.id], nullptr);
  back_[r.id] = [a, c, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    auto& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  };
  return r;
}

Tensor Tape::tanh(Tensor a) {
  std::vector<double> out = values_[a.id];
  for (double& v : out) v = std::tanh(v);
  Tensor r = emplace(std::move(out), shapes_[a.id], nullptr);
  back_[r.id] = [a, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    const auto& y = t.values_[r.id];
    auto& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return r;
}

Tensor Tape::sigmoid(Tensor a) {
  std::vector<double> out = values_[a.id];
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  Tensor r = emplace(std::move(out), shapes_[a.id], nullptr);
  back_[r.id] = [a, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    const auto& y = t.values_[r.id];
    auto& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  };
  return r;
}

Tensor Tape::exp(Tensor a) {
  std::vector<double> out = values_[a.id];
  for (double& v : out) v = std::exp(v);
  Tensor r = emplace(std::move(out), shapes_[a.id], nullptr);
  back_[r.id] = [a, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    const auto& y = t.values_[r.id];
    auto& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  };
  return r;
}

Tensor Tape::log(Tensor a) {
  std::vector<double> out = values_[a.id];
  for (double& v : out) v = std::log(v);
  Tensor r = emplace(std::move(out), shapes_[a.id], nullptr);
  back_[r.id] = [a, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    const auto& x = t.values_[a.id];
    auto& ga = t.grad_mut(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  };
  return r;
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  if (sa.dims.size() != 2) throw ShapeError("matmul: lhs must be rank 2, got " + sa.str());
  const int m = sa.dims[0];
  const int k = sa.dims[1];
  const auto& va = values_[a.id];
  const auto& vb = values_[b.id];

  if (sb.dims.size() == 1) {
    if (sb.dims[0] != k) throw ShapeError("matmul: " + sa.str() + " x " + sb.str());
    std::vector<double> out(m, 0.0);
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += va[i * k + j] * vb[j];
      out[i] = acc;
    }
    Tensor r = emplace(std::move(out), Shape{{m}}, nullptr);
    back_[r.id] = [a, b, r, m, k](Tape& t) {
      const auto& g = t.grads_[r.id];
      if (g.empty()) return;
      const auto& va2 = t.values_[a.id];
      const auto& vb2 = t.values_[b.id];
      auto& ga = t.grad_mut(a.id);
      auto& gb = t.grad_mut(b.id);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k; ++j) {
          ga[i * k + j] += g[i] * vb2[j];
          gb[j] += g[i] * va2[i * k + j];
        }
      }
    };
    return r;
  }

  if (sb.dims.size() != 2 || sb.dims[0] != k) throw ShapeError("matmul: " + sa.str() + " x " + sb.str());
  const int n = sb.dims[1];
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = va[i * k + p];
      for (int j = 0; j < n; ++j) out[i * n + j] += aip * vb[p * n + j];
    }
  }
  Tensor r = emplace(std::move(out), Shape{{m, n}}, nullptr);
  back_[r.id] = [a, b, r, m, k, n](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    const auto& va2 = t.values_[a.id];
    const auto& vb2 = t.values_[b.id];
    auto& ga = t.grad_mut(a.id);
    auto& gb = t.grad_mut(b.id);
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += g[i * n + j] * vb2[p * n + j];
        ga[i * k + p] += acc;
      }
    }
    for (int p = 0; p < k; ++p) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += va2[i * k + p] * g[i * n + j];
        gb[p * n + j] += acc;
      }
    }
  };
  return r;
}

Tensor Tape::matvec_t(Tensor a, Tensor x) {
  const Shape& sa = shape(a);
  const Shape& sx = shape(x);
  if (sa.dims.size() != 2 || sx.dims.size() != 1 || sx.dims[0] != sa.dims[0]) {
    throw ShapeError("matvec_t: " + sa.str() + "^T x " + sx.str());
  }
  const int m = sa.dims[0];
  const int n = sa.dims[1];
  const auto& va = values_[a.id];
  const auto& vx = values_[x.id];
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out[j] += va[i * n + j] * vx[i];
  }
  Tensor r = emplace(std::move(out), Shape{{n}}, nullptr);
  back_[r.id] = [a, x, r, m, n](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    const auto& va2 = t.values_[a.id];
    const auto& vx2 = t.values_[x.id];
    auto& ga = t.grad_mut(a.id);
    auto& gx = t.grad_mut(x.id);
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        ga[i * n + j] += g[j] * vx2[i];
        acc += va2[i * n + j] * g[j];
      }
      gx[i] += acc;
    }
  };
  return r;
}

Tensor Tape::concat(Tensor a, Tensor b) {
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  if (sa.dims.size() != 1 || sb.dims.size() != 1) {
    throw ShapeError("concat: rank-1 only, got " + sa.str() + " and " + sb.str());
  }
  std::vector<double> out = values_[a.id];
  out.insert(out.end(), values_[b.id].begin(), values_[b.id].end());
  const int na = sa.dims[0];
  Tensor r = emplace(std::move(out), Shape{{sa.dims[0] + sb.dims[0]}}, nullptr);
  back_[r.id] = [a, b, r, na](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    auto& ga = t.grad_mut(a.id);
    auto& gb = t.grad_mut(b.id);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
  };
  return r;
}

Tensor Tape::slice(Tensor a, int start, int len) {
  const Shape& sa = shape(a);
  if (sa.dims.size() != 1) throw ShapeError("slice: rank-1 only, got " + sa.str());
  if (start < 0 || len < 0 || start + len > sa.dims[0]) {
    throw ShapeError("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of range for " + sa.str());
  }
  std::vector<double> out(values_[a.id].begin() + start, values_[a.id].begin() + start + len);
  Tensor r = emplace(std::move(out), Shape{{len}}, nullptr);
  back_[r.id] = [a, r, start, len](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    auto& ga = t.grad_mut(a.id);
    for (int i = 0; i < len; ++i) ga[start + i] += g[i];
  };
  return r;
}

Tensor Tape::stack_cols(const std::vector<Tensor>& cols) {
  if (cols.empty()) throw ShapeError("stack_cols: no columns");
  const int rows = shape(cols[0]).dims[0];
  for (Tensor c : cols) {
    const Shape& s = shape(c);
    if (s.dims.size() != 1 || s.dims[0] != rows) {
      throw ShapeError("stack_cols: column shape " + s.str() + " != (" + std::to_string(rows) + ")");
    }
  }
  const int ncols = static_cast<int>(cols.size());
  std::vector<double> out(static_cast<size_t>(rows) * ncols);
  for (int c = 0; c < ncols; ++c) {
    const auto& v = values_[cols[c].id];
    for (int i = 0; i < rows; ++i) out[i * ncols + c] = v[i];
  }
  Tensor r = emplace(std::move(out), Shape{{rows, ncols}}, nullptr);
  back_[r.id] = [cols, r, rows, ncols](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    for (int c = 0; c < ncols; ++c) {
      auto& gc = t.grad_mut(cols[c].id);
      for (int i = 0; i < rows; ++i) gc[i] += g[i * ncols + c];
    }
  };
  return r;
}

Tensor Tape::sum(Tensor a) {
  double acc = 0.0;
  for (double v : values_[a.id]) acc += v;
  Tensor r = emplace({acc}, Shape{{1}}, nullptr);
  back_[r.id] = [a, r](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    auto& ga = t.grad_mut(a.id);
    for (double& v : ga) v += g[0];
  };
  return r;
}

Tensor Tape::mean(Tensor a) {
  const int n = shape(a).numel();
  double acc = 0.0;
  for (double v : values_[a.id]) acc += v;
  Tensor r = emplace({acc / n}, Shape{{1}}, nullptr);
  back_[r.id] = [a, r, n](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    auto& ga = t.grad_mut(a.id);
    for (double& v : ga) v += g[0] / n;
  };
  return r;
}

Tensor Tape::masked_softmax(Tensor logits, const std::vector<uint8_t>& blocked) {
  const Shape& s = shape(logits);
  if (s.dims.size() != 1) throw ShapeError("masked_softmax: rank-1 only, got " + s.str());
  const int n = s.dims[0];
  if (!blocked.empty() && static_cast<int>(blocked.size()) != n) {
    throw ShapeError("masked_softmax: mask length " + std::to_string(blocked.size()) +
                     " != logits length " + std::to_string(n));
  }
  auto is_blocked = [&blocked](int i) { return !blocked.empty() && blocked[i] != 0; };

  const auto& x = values_[logits.id];
  double maxv = -1e300;
  bool any = false;
  for (int i = 0; i < n; ++i) {
    if (is_blocked(i)) continue;
    any = true;
    if (x[i] > maxv) maxv = x[i];
  }
  if (!any) throw ShapeError("masked_softmax: all positions masked");

  std::vector<double> out(n, 0.0);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    if (is_blocked(i)) continue;
    out[i] = std::exp(x[i] - maxv);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) {
    if (!is_blocked(i)) out[i] /= z;
  }

  Tensor r = emplace(std::move(out), s, nullptr);
  back_[r.id] = [logits, r, blocked, n](Tape& t) {
    const auto& g = t.grads_[r.id];
    if (g.empty()) return;
    const auto& y = t.values_[r.id];
    auto& gx = t.grad_mut(logits.id);
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += g[i] * y[i];
    for (int i = 0; i < n; ++i) {
      if (!blocked.empty() && blocked[i] != 0) continue;  // masked grad stays exactly 0
      gx[i] += y[i] * (g[i] - dot);
    }
  };
  return r;
}

void Tape::backward(Tensor loss) {
  if (backward_done_) throw TapeError("backward already ran on this tape");
  if (shape(loss).numel() != 1) {
    throw TapeError("backward requires a scalar loss, got shape " + shape(loss).str());
  }
  backward_done_ = true;
  grad_mut(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    if (back_[id]) back_[id](*this);
  }
}

}  // namespace msan::ad
