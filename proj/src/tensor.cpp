#include "pushbound/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pushbound {

namespace {

constexpr double kLogClamp = 1e-12;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) fail(std::string(op) + ": expected a 2-d tensor, got " + shape_str(t.shape()));
}

}  // namespace

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

const Shape& Tensor::shape() const { return tape_->shape_of(id_); }
std::size_t Tensor::numel() const { return shape_numel(shape()); }
bool Tensor::requires_grad() const { return tape_->requires_grad_of(id_); }
std::span<const double> Tensor::values() const { return tape_->values_of(id_); }
std::vector<double> Tensor::to_vector() const {
  auto v = values();
  return std::vector<double>(v.begin(), v.end());
}
double Tensor::scalar_value() const {
  if (numel() != 1) fail("scalar_value: tensor has " + std::to_string(numel()) + " elements");
  return values()[0];
}

Tensor Tape::make_node(Shape shape, std::vector<double> values, bool requires_grad,
                       BackwardFn backward) {
  if (shape_numel(shape) != values.size())
    fail("tensor: value count " + std::to_string(values.size()) + " does not match shape " +
         shape_str(shape));
  Node node;
  node.shape = std::move(shape);
  node.values = std::move(values);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

std::vector<double>& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.values.size()) n.grad.assign(n.values.size(), 0.0);
  return n.grad;
}

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_node(std::move(shape), std::move(values), requires_grad, {});
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return make_node(std::move(shape), std::move(values), false, {});
}

Tensor Tape::scalar(double value) { return constant({1}, {value}); }

Tensor Tape::detach(const Tensor& x) { return constant(x.shape(), x.to_vector()); }

Tensor Tape::binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                                double (*fwd)(double, double),
                                void (*bwd)(double, double, double, double&, double&)) {
  if (a.shape() != b.shape())
    fail(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(va[i], vb[i]);

  const int ia = a.node_id(), ib = b.node_id();
  const bool needs = a.requires_grad() || b.requires_grad();
  Tensor result = make_node(a.shape(), std::move(out), needs, {});
  const int io = result.node_id();
  if (needs) {
    nodes_[io].backward = [ia, ib, io, bwd](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& va2 = t.nodes_[ia].values;
      const auto& vb2 = t.nodes_[ib].values;
      const bool ga = t.nodes_[ia].requires_grad;
      const bool gb = t.nodes_[ib].requires_grad;
      std::vector<double>* da = ga ? &t.grad_buffer(ia) : nullptr;
      std::vector<double>* db = gb ? &t.grad_buffer(ib) : nullptr;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double xa = 0.0, xb = 0.0;
        bwd(va2[i], vb2[i], g[i], xa, xb);
        if (da) (*da)[i] += xa;
        if (db) (*db)[i] += xb;
      }
    };
  }
  return result;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  auto va = a.values();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + c;
  const int ia = a.node_id();
  Tensor result = make_node(a.shape(), std::move(out), a.requires_grad(), {});
  const int io = result.node_id();
  if (a.requires_grad()) {
    nodes_[io].backward = [ia, io](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      auto& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    };
  }
  return result;
}

Tensor Tape::mul_scalar(const Tensor& a, double c) {
  auto va = a.values();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * c;
  const int ia = a.node_id();
  Tensor result = make_node(a.shape(), std::move(out), a.requires_grad(), {});
  const int io = result.node_id();
  if (a.requires_grad()) {
    nodes_[io].backward = [ia, io, c](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      auto& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * c;
    };
  }
  return result;
}

Tensor Tape::relu(const Tensor& x) {
  auto vx = x.values();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] > 0.0 ? vx[i] : 0.0;
  const int ix = x.node_id();
  Tensor result = make_node(x.shape(), std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& vx2 = t.nodes_[ix].values;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (vx2[i] > 0.0) dx[i] += g[i];
    };
  }
  return result;
}

Tensor Tape::exp(const Tensor& x) {
  auto vx = x.values();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(vx[i]);
  const int ix = x.node_id();
  Tensor result = make_node(x.shape(), std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& vy = t.nodes_[io].values;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * vy[i];
    };
  }
  return result;
}

Tensor Tape::log(const Tensor& x) {
  auto vx = x.values();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(vx[i], kLogClamp));
  const int ix = x.node_id();
  Tensor result = make_node(x.shape(), std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& vx2 = t.nodes_[ix].values;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (vx2[i] > kLogClamp) dx[i] += g[i] / vx2[i];
    };
  }
  return result;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    fail("matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));

  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = va.data() + i * k;
    double* orow = out.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = vb.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }

  const int ia = a.node_id(), ib = b.node_id();
  const bool needs = a.requires_grad() || b.requires_grad();
  Tensor result = make_node({m, n}, std::move(out), needs, {});
  const int io = result.node_id();
  if (needs) {
    nodes_[io].backward = [ia, ib, io, m, k, n](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& va2 = t.nodes_[ia].values;
      const auto& vb2 = t.nodes_[ib].values;
      if (t.nodes_[ia].requires_grad) {
        // dA = dC * B^T
        auto& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            if (gij == 0.0) continue;
            const double* brow = vb2.data() + j;
            double* darow = da.data() + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) darow[kk] += gij * brow[kk * n];
          }
      }
      if (t.nodes_[ib].requires_grad) {
        // dB = A^T * dC
        auto& db = t.grad_buffer(ib);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = va2[i * k + kk];
            if (aik == 0.0) continue;
            const double* grow = g.data() + i * n;
            double* dbrow = db.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += aik * grow[j];
          }
      }
    };
  }
  return result;
}

Tensor Tape::add_bias(const Tensor& m, const Tensor& bias) {
  require_2d(m, "add_bias");
  require_2d(bias, "add_bias");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (bias.shape()[0] != 1 || bias.shape()[1] != cols)
    fail("add_bias: bias shape " + shape_str(bias.shape()) + " does not match matrix " +
         shape_str(m.shape()));
  const auto vm = m.values();
  const auto vb = bias.values();
  std::vector<double> out(vm.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = vm[i * cols + j] + vb[j];

  const int im = m.node_id(), ib = bias.node_id();
  const bool needs = m.requires_grad() || bias.requires_grad();
  Tensor result = make_node(m.shape(), std::move(out), needs, {});
  const int io = result.node_id();
  if (needs) {
    nodes_[io].backward = [im, ib, io, rows, cols](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      if (t.nodes_[im].requires_grad) {
        auto& dm = t.grad_buffer(im);
        for (std::size_t i = 0; i < g.size(); ++i) dm[i] += g[i];
      }
      if (t.nodes_[ib].requires_grad) {
        auto& db = t.grad_buffer(ib);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) db[j] += g[i * cols + j];
      }
    };
  }
  return result;
}

Tensor Tape::softmax(const Tensor& x) {
  require_2d(x, "softmax");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  if (c < 2) fail("softmax: need at least 2 columns, got " + shape_str(x.shape()));
  const auto vx = x.values();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = vx.data() + i * c;
    double* orow = out.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (std::size_t j = 0; j < c; ++j) orow[j] /= denom;
  }
  const int ix = x.node_id();
  Tensor result = make_node(x.shape(), std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io, n, c](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& y = t.nodes_[io].values;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g.data() + i * c;
        const double* yrow = y.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += grow[j] * yrow[j];
        double* drow = dx.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) drow[j] += yrow[j] * (grow[j] - dot);
      }
    };
  }
  return result;
}

Tensor Tape::concat(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat");
  require_2d(b, "concat");
  const std::size_t n = a.shape()[0], fa = a.shape()[1], fb = b.shape()[1];
  if (b.shape()[0] != n)
    fail("concat: first dimensions differ: " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> out(n * (fa + fb));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(va.data() + i * fa, fa, out.data() + i * (fa + fb));
    std::copy_n(vb.data() + i * fb, fb, out.data() + i * (fa + fb) + fa);
  }
  const int ia = a.node_id(), ib = b.node_id();
  const bool needs = a.requires_grad() || b.requires_grad();
  Tensor result = make_node({n, fa + fb}, std::move(out), needs, {});
  const int io = result.node_id();
  if (needs) {
    nodes_[io].backward = [ia, ib, io, n, fa, fb](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad) {
        auto& da = t.grad_buffer(ia);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < fa; ++j) da[i * fa + j] += g[i * (fa + fb) + j];
      }
      if (t.nodes_[ib].requires_grad) {
        auto& db = t.grad_buffer(ib);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < fb; ++j) db[i * fb + j] += g[i * (fa + fb) + fa + j];
      }
    };
  }
  return result;
}

Tensor Tape::gather_rows(const Tensor& x, const std::vector<std::uint32_t>& rows) {
  require_2d(x, "gather_rows");
  const std::size_t n = x.shape()[0], f = x.shape()[1];
  for (std::uint32_t r : rows)
    if (r >= n) fail("gather_rows: index " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
  const auto vx = x.values();
  std::vector<double> out(rows.size() * f);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(vx.data() + rows[i] * f, f, out.data() + i * f);
  const int ix = x.node_id();
  Tensor result = make_node({rows.size(), f}, std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io, rows, f](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < f; ++j) dx[rows[i] * f + j] += g[i * f + j];
    };
  }
  return result;
}

Tensor Tape::select_per_row(const Tensor& x, const std::vector<std::uint32_t>& cols) {
  require_2d(x, "select_per_row");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  if (cols.size() != n)
    fail("select_per_row: got " + std::to_string(cols.size()) + " indices for " +
         shape_str(x.shape()));
  for (std::uint32_t j : cols)
    if (j >= c) fail("select_per_row: column " + std::to_string(j) + " out of range for " + shape_str(x.shape()));
  const auto vx = x.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = vx[i * c + cols[i]];
  const int ix = x.node_id();
  Tensor result = make_node({n, 1}, std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io, cols, c](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < cols.size(); ++i) dx[i * c + cols[i]] += g[i];
    };
  }
  return result;
}

Tensor Tape::column(const Tensor& x, std::size_t col) {
  require_2d(x, "column");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  if (col >= c) fail("column: index " + std::to_string(col) + " out of range for " + shape_str(x.shape()));
  const auto vx = x.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = vx[i * c + col];
  const int ix = x.node_id();
  Tensor result = make_node({n, 1}, std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io, col, c](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i * c + col] += g[i];
    };
  }
  return result;
}

Tensor Tape::grouped_max_pool(const Tensor& features, const NeighborTable& groups) {
  require_2d(features, "grouped_max_pool");
  const std::size_t n = features.shape()[0], f = features.shape()[1];
  const std::size_t m = groups.rows, k = groups.k;
  if (k == 0) fail("grouped_max_pool: empty groups");
  for (std::uint32_t idx : groups.indices)
    if (idx >= n)
      fail("grouped_max_pool: index " + std::to_string(idx) + " out of range for " +
           shape_str(features.shape()));

  const auto vx = features.values();
  std::vector<double> out(m * f);
  std::vector<std::uint32_t> argmax(m * f);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      std::uint32_t best = groups.at(i, 0);
      double bestv = vx[best * f + j];
      for (std::size_t t = 1; t < k; ++t) {
        const std::uint32_t cand = groups.at(i, t);
        const double v = vx[cand * f + j];
        // strict > keeps the lowest flat index on ties
        if (v > bestv || (v == bestv && cand < best)) {
          bestv = v;
          best = cand;
        }
      }
      out[i * f + j] = bestv;
      argmax[i * f + j] = best;
    }
  }
  const int ix = features.node_id();
  Tensor result = make_node({m, f}, std::move(out), features.requires_grad(), {});
  const int io = result.node_id();
  if (features.requires_grad()) {
    nodes_[io].backward = [ix, io, argmax = std::move(argmax), f](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) dx[argmax[i] * f + i % f] += g[i];
    };
  }
  return result;
}

Tensor Tape::neighbor_weighted_sum(const Tensor& features, const NeighborTable& idx,
                                   const Tensor& weights) {
  require_2d(features, "neighbor_weighted_sum");
  require_2d(weights, "neighbor_weighted_sum");
  const std::size_t m = features.shape()[0], f = features.shape()[1];
  const std::size_t n = idx.rows, k = idx.k;
  if (weights.shape()[0] != n || weights.shape()[1] != k)
    fail("neighbor_weighted_sum: weights " + shape_str(weights.shape()) + " do not match table [" +
         std::to_string(n) + " x " + std::to_string(k) + "]");
  for (std::uint32_t r : idx.indices)
    if (r >= m)
      fail("neighbor_weighted_sum: index " + std::to_string(r) + " out of range for " +
           shape_str(features.shape()));

  const auto vf = features.values();
  const auto vw = weights.values();
  std::vector<double> out(n * f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out.data() + i * f;
    for (std::size_t t = 0; t < k; ++t) {
      const double w = vw[i * k + t];
      const double* frow = vf.data() + idx.at(i, t) * f;
      for (std::size_t j = 0; j < f; ++j) orow[j] += w * frow[j];
    }
  }

  const int ifeat = features.node_id(), iw = weights.node_id();
  const bool needs = features.requires_grad() || weights.requires_grad();
  Tensor result = make_node({n, f}, std::move(out), needs, {});
  const int io = result.node_id();
  if (needs) {
    nodes_[io].backward = [ifeat, iw, io, idx, f, k](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& vf2 = t.nodes_[ifeat].values;
      const auto& vw2 = t.nodes_[iw].values;
      const bool gf = t.nodes_[ifeat].requires_grad;
      const bool gw = t.nodes_[iw].requires_grad;
      std::vector<double>* df = gf ? &t.grad_buffer(ifeat) : nullptr;
      std::vector<double>* dw = gw ? &t.grad_buffer(iw) : nullptr;
      for (std::size_t i = 0; i < idx.rows; ++i) {
        const double* grow = g.data() + i * f;
        for (std::size_t tt = 0; tt < k; ++tt) {
          const std::uint32_t r = idx.at(i, tt);
          if (df) {
            double* frow = df->data() + r * f;
            const double w = vw2[i * k + tt];
            for (std::size_t j = 0; j < f; ++j) frow[j] += w * grow[j];
          }
          if (dw) {
            const double* frow = vf2.data() + r * f;
            double dot = 0.0;
            for (std::size_t j = 0; j < f; ++j) dot += frow[j] * grow[j];
            (*dw)[i * k + tt] += dot;
          }
        }
      }
    };
  }
  return result;
}

Tensor Tape::row_sum(const Tensor& x) {
  require_2d(x, "row_sum");
  const std::size_t n = x.shape()[0], f = x.shape()[1];
  const auto vx = x.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) out[i] += vx[i * f + j];
  const int ix = x.node_id();
  Tensor result = make_node({n, 1}, std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io, f](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < f; ++j) dx[i * f + j] += g[i];
    };
  }
  return result;
}

Tensor Tape::rowwise_scale(const Tensor& m, const Tensor& s) {
  require_2d(m, "rowwise_scale");
  require_2d(s, "rowwise_scale");
  const std::size_t n = m.shape()[0], f = m.shape()[1];
  if (s.shape()[0] != n || s.shape()[1] != 1)
    fail("rowwise_scale: scale shape " + shape_str(s.shape()) + " does not match " +
         shape_str(m.shape()));
  const auto vm = m.values();
  const auto vs = s.values();
  std::vector<double> out(n * f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) out[i * f + j] = vm[i * f + j] * vs[i];
  const int im = m.node_id(), is = s.node_id();
  const bool needs = m.requires_grad() || s.requires_grad();
  Tensor result = make_node(m.shape(), std::move(out), needs, {});
  const int io = result.node_id();
  if (needs) {
    nodes_[io].backward = [im, is, io, n, f](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& vm2 = t.nodes_[im].values;
      const auto& vs2 = t.nodes_[is].values;
      if (t.nodes_[im].requires_grad) {
        auto& dm = t.grad_buffer(im);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < f; ++j) dm[i * f + j] += g[i * f + j] * vs2[i];
      }
      if (t.nodes_[is].requires_grad) {
        auto& ds = t.grad_buffer(is);
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < f; ++j) dot += g[i * f + j] * vm2[i * f + j];
          ds[i] += dot;
        }
      }
    };
  }
  return result;
}

Tensor Tape::rowwise_div(const Tensor& m, const Tensor& s) {
  require_2d(m, "rowwise_div");
  require_2d(s, "rowwise_div");
  const std::size_t n = m.shape()[0], f = m.shape()[1];
  if (s.shape()[0] != n || s.shape()[1] != 1)
    fail("rowwise_div: divisor shape " + shape_str(s.shape()) + " does not match " +
         shape_str(m.shape()));
  const auto vm = m.values();
  const auto vs = s.values();
  std::vector<double> out(n * f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) out[i * f + j] = vm[i * f + j] / vs[i];
  const int im = m.node_id(), is = s.node_id();
  const bool needs = m.requires_grad() || s.requires_grad();
  Tensor result = make_node(m.shape(), std::move(out), needs, {});
  const int io = result.node_id();
  if (needs) {
    nodes_[io].backward = [im, is, io, n, f](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& vm2 = t.nodes_[im].values;
      const auto& vs2 = t.nodes_[is].values;
      if (t.nodes_[im].requires_grad) {
        auto& dm = t.grad_buffer(im);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < f; ++j) dm[i * f + j] += g[i * f + j] / vs2[i];
      }
      if (t.nodes_[is].requires_grad) {
        auto& ds = t.grad_buffer(is);
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < f; ++j) dot += g[i * f + j] * vm2[i * f + j];
          ds[i] -= dot / (vs2[i] * vs2[i]);
        }
      }
    };
  }
  return result;
}

Tensor Tape::row_unit(const Tensor& x, double eps) {
  require_2d(x, "row_unit");
  const std::size_t n = x.shape()[0], f = x.shape()[1];
  const auto vx = x.values();
  std::vector<double> out(n * f);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < f; ++j) sq += vx[i * f + j] * vx[i * f + j];
    const double norm = std::sqrt(sq);
    norms[i] = norm;
    const double denom = norm > eps ? norm : eps;
    for (std::size_t j = 0; j < f; ++j) out[i * f + j] = vx[i * f + j] / denom;
  }
  const int ix = x.node_id();
  Tensor result = make_node(x.shape(), std::move(out), x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io, norms = std::move(norms), eps, f](Tape& t) {
      const auto& g = t.nodes_[io].grad;
      const auto& y = t.nodes_[io].values;
      auto& dx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < norms.size(); ++i) {
        const double* grow = g.data() + i * f;
        const double* yrow = y.data() + i * f;
        double* drow = dx.data() + i * f;
        if (norms[i] > eps) {
          // d(x/|x|) = (g - y (y . g)) / |x|
          double dot = 0.0;
          for (std::size_t j = 0; j < f; ++j) dot += yrow[j] * grow[j];
          for (std::size_t j = 0; j < f; ++j) drow[j] += (grow[j] - yrow[j] * dot) / norms[i];
        } else {
          for (std::size_t j = 0; j < f; ++j) drow[j] += grow[j] / eps;
        }
      }
    };
  }
  return result;
}

Tensor Tape::sum(const Tensor& x) {
  const auto vx = x.values();
  double total = 0.0;
  for (double v : vx) total += v;
  const int ix = x.node_id();
  Tensor result = make_node({1}, {total}, x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io](Tape& t) {
      const double g = t.nodes_[io].grad[0];
      auto& dx = t.grad_buffer(ix);
      for (double& d : dx) d += g;
    };
  }
  return result;
}

Tensor Tape::mean(const Tensor& x) {
  const std::size_t n = x.numel();
  if (n == 0) fail("mean: empty tensor");
  const auto vx = x.values();
  double total = 0.0;
  for (double v : vx) total += v;
  const int ix = x.node_id();
  Tensor result = make_node({1}, {total / static_cast<double>(n)}, x.requires_grad(), {});
  const int io = result.node_id();
  if (x.requires_grad()) {
    nodes_[io].backward = [ix, io, n](Tape& t) {
      const double g = t.nodes_[io].grad[0] / static_cast<double>(n);
      auto& dx = t.grad_buffer(ix);
      for (double& d : dx) d += g;
    };
  }
  return result;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    fail("backward: loss must be scalar, got " + shape_str(loss.shape()));
  const int root = loss.node_id();
  // Op-node gradients are scratch for this pass; leaf gradients persist, so
  // repeated backward calls accumulate into leaves only.
  for (Node& n : nodes_)
    if (n.backward) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  grad_buffer(root)[0] += 1.0;
  for (int id = root; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward) continue;
    if (node.grad.empty()) continue;  // never touched: not on a path to the loss
    node.backward(*this);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

std::span<const double> Tape::grad(const Tensor& t) {
  return grad_buffer(t.node_id());
}

void Tape::clear() { nodes_.clear(); }

}  // namespace pushbound
