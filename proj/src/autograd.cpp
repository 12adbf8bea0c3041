#include "r2d2/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "r2d2/errors.hpp"

namespace r2d2 {

// ---------------------------------------------------------------- ParamSet

template <typename T>
Parameter<T>& ParamSet<T>::add(const std::string& name, Tensor<T> value) {
  if (index_.count(name)) throw InvalidInput("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.push_back(Parameter<T>{name, std::move(value), {}});
  return params_.back();
}

template <typename T>
Parameter<T>& ParamSet<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter: " + name);
  return params_[it->second];
}

template <typename T>
const Parameter<T>& ParamSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter: " + name);
  return params_[it->second];
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& p : params_) p.grad = Tensor<T>();
}

template <typename T>
bool ParamSet<T>::operator==(const ParamSet& o) const {
  if (params_.size() != o.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = o.params_[i];
    if (a.name != b.name || !a.value.same_shape(b.value) || a.value.data != b.value.data)
      return false;
  }
  return true;
}

// ------------------------------------------------------------------- Graph

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Graph<T>::param(Parameter<T>& p, bool trainable) {
  Node n;
  n.external = &p.value;
  n.requires_grad = trainable;
  n.param = trainable ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Graph<T>::emplace(Tensor<T> value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.value;
}

template <typename T>
Tensor<T>& Graph<T>::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) {
    const Tensor<T>& val = n.external ? *n.external : n.value;
    n.grad = Tensor<T>(val.n, val.c, val.h, val.w);
  }
  return n.grad;
}

template <typename T>
bool Graph<T>::has_grad(Var v) const {
  return !nodes_[v.id].grad.empty();
}

template <typename T>
bool Graph<T>::any_requires_grad(std::initializer_list<Var> vs) const {
  for (Var v : vs)
    if (v.valid() && nodes_[v.id].requires_grad) return true;
  return false;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (value(loss).size() != 1) throw InvalidInput("backward() needs a scalar loss");
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss).data[0] = T(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, Var{i});
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    Tensor<T>& acc = n.param->grad;
    if (acc.empty()) {
      acc = n.grad;
    } else {
      for (std::size_t k = 0; k < acc.size(); ++k) acc.data[k] += n.grad.data[k];
    }
  }
}

// --------------------------------------------------------------------- ops

namespace ag {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* col) {
  const std::size_t cols = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * cols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* out = row + static_cast<std::size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(out, out + Wo, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * W;
          if (stride == 1) {
            const int lo = std::min(Wo, std::max(0, pad - kj));
            const int hi = std::min(Wo, W + pad - kj);
            std::fill(out, out + lo, T(0));
            if (hi > lo) std::copy(src + lo - pad + kj, src + hi - pad + kj, out + lo);
            if (hi < Wo) std::fill(out + std::max(hi, lo), out + Wo, T(0));
            continue;
          }
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            out[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* x) {
  const std::size_t cols = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * cols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= H) continue;
          const T* in = row + static_cast<std::size_t>(oy) * Wo;
          T* dst = xc + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < W) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidInput(what);
}

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

template <typename T, typename Fwd, typename Deriv>
Var elementwise(Graph<T>& g, Var xv, Fwd fwd, Deriv deriv) {
  const Tensor<T>& x = g.value(xv);
  Tensor<T> y(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = fwd(x.data[i]);
  return g.emplace(std::move(y), g.requires_grad(xv), [xv, deriv](Graph<T>& g, Var self) {
    const Tensor<T>& x = g.value(xv);
    const Tensor<T>& y = g.value(self);
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad(xv);
    for (std::size_t i = 0; i < x.size(); ++i)
      gx.data[i] += gy.data[i] * deriv(x.data[i], y.data[i]);
  });
}

template <typename T>
Var make_scalar(Graph<T>& g, T v, std::initializer_list<Var> inputs,
                typename Graph<T>::Backward bw) {
  return g.emplace(Tensor<T>::scalar(v), g.any_requires_grad(inputs), std::move(bw));
}

}  // namespace

template <typename T>
Var conv2d(Graph<T>& g, Var xv, Var wv, Var bv, int stride, int pad) {
  const Tensor<T>& x = g.value(xv);
  const Tensor<T>& w = g.value(wv);
  require(w.h == w.w, "conv2d: kernel must be square");
  require(x.c == w.c, "conv2d: input has " + std::to_string(x.c) + " channels, kernel expects " +
                          std::to_string(w.c));
  const int k = w.h;
  const int Ho = (x.h + 2 * pad - k) / stride + 1;
  const int Wo = (x.w + 2 * pad - k) / stride + 1;
  require(Ho > 0 && Wo > 0, "conv2d: input " + x.shape_str() + " smaller than kernel");
  if (bv.valid())
    require(static_cast<int>(g.value(bv).size()) == w.n, "conv2d: bias size mismatch");

  const int rows = x.c * k * k;
  const auto cols = static_cast<Eigen::Index>(Ho) * Wo;
  Tensor<T> y(x.n, w.n, Ho, Wo);
  std::vector<T> col(static_cast<std::size_t>(rows) * cols);
  CMapMat<T> wm(w.data.data(), w.n, rows);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.ptr(i), x.c, x.h, x.w, k, stride, pad, Ho, Wo, col.data());
    MapMat<T> ym(y.ptr(i), w.n, cols);
    ym.noalias() = wm * CMapMat<T>(col.data(), rows, cols);
    if (bv.valid()) {
      const T* b = g.value(bv).data.data();
      for (int o = 0; o < w.n; ++o) ym.row(o).array() += b[o];
    }
  }

  const bool rg = g.any_requires_grad({xv, wv, bv});
  return g.emplace(std::move(y), rg, [=](Graph<T>& g, Var self) {
    const Tensor<T>& x = g.value(xv);
    const Tensor<T>& w = g.value(wv);
    const Tensor<T>& gy = g.grad(self);
    const int rows = x.c * k * k;
    const auto cols = static_cast<Eigen::Index>(Ho) * Wo;
    const bool need_x = g.requires_grad(xv);
    const bool need_w = g.requires_grad(wv);
    const bool need_b = bv.valid() && g.requires_grad(bv);
    std::vector<T> col(static_cast<std::size_t>(rows) * cols);
    RowMat<T> dw;
    if (need_w) dw = RowMat<T>::Zero(w.n, rows);
    CMapMat<T> wm(w.data.data(), w.n, rows);
    for (int i = 0; i < x.n; ++i) {
      CMapMat<T> gym(gy.ptr(i), w.n, cols);
      if (need_w) {
        im2col(x.ptr(i), x.c, x.h, x.w, k, stride, pad, Ho, Wo, col.data());
        dw.noalias() += gym * CMapMat<T>(col.data(), rows, cols).transpose();
      }
      if (need_x) {
        MapMat<T> colm(col.data(), rows, cols);
        colm.noalias() = wm.transpose() * gym;
        col2im(col.data(), x.c, x.h, x.w, k, stride, pad, Ho, Wo, g.grad(xv).ptr(i));
      }
      if (need_b) {
        T* gb = g.grad(bv).data.data();
        // Plain loop: Eigen's vectorised sum depends on the buffer's alignment.
        for (int o = 0; o < w.n; ++o) {
          const T* row = gy.ptr(i) + static_cast<std::size_t>(o) * cols;
          T acc = 0;
          for (Eigen::Index j = 0; j < cols; ++j) acc += row[j];
          gb[o] += acc;
        }
      }
    }
    if (need_w) {
      T* gw = g.grad(wv).data.data();
      const T* d = dw.data();
      for (std::size_t j = 0; j < static_cast<std::size_t>(w.n) * rows; ++j) gw[j] += d[j];
    }
  });
}

template <typename T>
Var pad_reflect(Graph<T>& g, Var xv, int pad) {
  const Tensor<T>& x = g.value(xv);
  require(pad < x.h && pad < x.w, "pad_reflect: padding exceeds input size");
  const int H = x.h + 2 * pad, W = x.w + 2 * pad;
  Tensor<T> y(x.n, x.c, H, W);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < H; ++yy) {
        const int sy = reflect_index(yy - pad, x.h);
        for (int xx = 0; xx < W; ++xx)
          y.at(i, c, yy, xx) = x.at(i, c, sy, reflect_index(xx - pad, x.w));
      }
  return g.emplace(std::move(y), g.requires_grad(xv), [xv, pad](Graph<T>& g, Var self) {
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad(xv);
    for (int i = 0; i < gy.n; ++i)
      for (int c = 0; c < gy.c; ++c)
        for (int yy = 0; yy < gy.h; ++yy) {
          const int sy = reflect_index(yy - pad, gx.h);
          for (int xx = 0; xx < gy.w; ++xx)
            gx.at(i, c, sy, reflect_index(xx - pad, gx.w)) += gy.at(i, c, yy, xx);
        }
  });
}

template <typename T>
Var upsample2x(Graph<T>& g, Var xv) {
  const Tensor<T>& x = g.value(xv);
  Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) y.at(i, c, yy, xx) = x.at(i, c, yy / 2, xx / 2);
  return g.emplace(std::move(y), g.requires_grad(xv), [xv](Graph<T>& g, Var self) {
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad(xv);
    for (int i = 0; i < gy.n; ++i)
      for (int c = 0; c < gy.c; ++c)
        for (int yy = 0; yy < gy.h; ++yy)
          for (int xx = 0; xx < gy.w; ++xx) gx.at(i, c, yy / 2, xx / 2) += gy.at(i, c, yy, xx);
  });
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
  return elementwise(
      g, x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var leaky_relu(Graph<T>& g, Var x, T slope) {
  return elementwise(
      g, x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var tanh(Graph<T>& g, Var x) {
  return elementwise(g, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var add(Graph<T>& g, Var av, Var bv) {
  const Tensor<T>& a = g.value(av);
  const Tensor<T>& b = g.value(bv);
  require(a.same_shape(b), "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor<T> y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.data[i];
  return g.emplace(std::move(y), g.any_requires_grad({av, bv}), [av, bv](Graph<T>& g, Var self) {
    const Tensor<T>& gy = g.grad(self);
    for (Var v : {av, bv}) {
      if (!g.requires_grad(v)) continue;
      Tensor<T>& gv = g.grad(v);
      for (std::size_t i = 0; i < gy.size(); ++i) gv.data[i] += gy.data[i];
    }
  });
}

template <typename T>
Var scale(Graph<T>& g, Var av, T s) {
  return elementwise(g, av, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <typename T>
Var add_scalar(Graph<T>& g, Var av, T s) {
  return elementwise(g, av, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var concat_channels(Graph<T>& g, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Tensor<T>& first = g.value(parts.front());
  int channels = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor<T>& t = g.value(p);
    require(
        t.n == first.n && t.h == first.h && t.w == first.w,
        "concat_channels: spatial/batch mismatch " + t.shape_str() + " vs " + first.shape_str());
    channels += t.c;
    rg = rg || g.requires_grad(p);
  }
  Tensor<T> y(first.n, channels, first.h, first.w);
  const std::size_t plane = first.plane();
  for (int i = 0; i < first.n; ++i) {
    int c0 = 0;
    for (Var p : parts) {
      const Tensor<T>& t = g.value(p);
      std::copy(t.ptr(i), t.ptr(i) + t.c * plane, y.ptr(i, c0));
      c0 += t.c;
    }
  }
  return g.emplace(std::move(y), rg, [parts](Graph<T>& g, Var self) {
    const Tensor<T>& gy = g.grad(self);
    const std::size_t plane = gy.plane();
    for (int i = 0; i < gy.n; ++i) {
      int c0 = 0;
      for (Var p : parts) {
        const int pc = g.value(p).c;
        if (g.requires_grad(p)) {
          Tensor<T>& gp = g.grad(p);
          const T* src = gy.ptr(i, c0);
          T* dst = gp.ptr(i);
          for (std::size_t j = 0; j < pc * plane; ++j) dst[j] += src[j];
        }
        c0 += pc;
      }
    }
  });
}

template <typename T>
Var instance_norm(Graph<T>& g, Var xv, T eps) {
  const Tensor<T>& x = g.value(xv);
  const std::size_t plane = x.plane();
  Tensor<T> y(x.n, x.c, x.h, x.w);
  std::vector<T> inv_std(static_cast<std::size_t>(x.n) * x.c);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c) {
      const T* src = x.ptr(i, c);
      T mean = 0;
      for (std::size_t j = 0; j < plane; ++j) mean += src[j];
      mean /= static_cast<T>(plane);
      T var = 0;
      for (std::size_t j = 0; j < plane; ++j) var += (src[j] - mean) * (src[j] - mean);
      var /= static_cast<T>(plane);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(i) * x.c + c] = is;
      T* dst = y.ptr(i, c);
      for (std::size_t j = 0; j < plane; ++j) dst[j] = (src[j] - mean) * is;
    }
  return g.emplace(std::move(y), g.requires_grad(xv), [xv, inv_std](Graph<T>& g, Var self) {
    const Tensor<T>& y = g.value(self);
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad(xv);
    const std::size_t plane = y.plane();
    for (int i = 0; i < y.n; ++i)
      for (int c = 0; c < y.c; ++c) {
        const T* yh = y.ptr(i, c);
        const T* d = gy.ptr(i, c);
        T mean_d = 0, mean_dy = 0;
        for (std::size_t j = 0; j < plane; ++j) {
          mean_d += d[j];
          mean_dy += d[j] * yh[j];
        }
        mean_d /= static_cast<T>(plane);
        mean_dy /= static_cast<T>(plane);
        const T is = inv_std[static_cast<std::size_t>(i) * y.c + c];
        T* out = gx.ptr(i, c);
        for (std::size_t j = 0; j < plane; ++j) out[j] += is * (d[j] - mean_d - yh[j] * mean_dy);
      }
  });
}

template <typename T>
Var replace_block(Graph<T>& g, Var basev, Var blockv,
                  const std::vector<std::pair<int, int>>& offsets) {
  const Tensor<T>& base = g.value(basev);
  const Tensor<T>& block = g.value(blockv);
  require(base.n == block.n && base.c == block.c, "replace_block: batch/channel mismatch");
  require(static_cast<int>(offsets.size()) == base.n, "replace_block: one offset per sample");
  for (auto [oy, ox] : offsets)
    require(oy >= 0 && ox >= 0 && oy + block.h <= base.h && ox + block.w <= base.w,
            "replace_block: block outside base");
  Tensor<T> y = base;
  for (int i = 0; i < base.n; ++i)
    for (int c = 0; c < base.c; ++c)
      for (int yy = 0; yy < block.h; ++yy)
        for (int xx = 0; xx < block.w; ++xx)
          y.at(i, c, offsets[i].first + yy, offsets[i].second + xx) = block.at(i, c, yy, xx);
  return g.emplace(std::move(y), g.any_requires_grad({basev, blockv}),
                   [basev, blockv, offsets](Graph<T>& g, Var self) {
                     const Tensor<T>& gy = g.grad(self);
                     const Tensor<T>& block = g.value(blockv);
                     if (g.requires_grad(basev)) {
                       Tensor<T>& gb = g.grad(basev);
                       Tensor<T> masked = gy;
                       for (int i = 0; i < gy.n; ++i)
                         for (int c = 0; c < gy.c; ++c)
                           for (int yy = 0; yy < block.h; ++yy)
                             for (int xx = 0; xx < block.w; ++xx)
                               masked.at(i, c, offsets[i].first + yy, offsets[i].second + xx) = 0;
                       for (std::size_t j = 0; j < gb.size(); ++j) gb.data[j] += masked.data[j];
                     }
                     if (g.requires_grad(blockv)) {
                       Tensor<T>& gk = g.grad(blockv);
                       for (int i = 0; i < gy.n; ++i)
                         for (int c = 0; c < gy.c; ++c)
                           for (int yy = 0; yy < block.h; ++yy)
                             for (int xx = 0; xx < block.w; ++xx)
                               gk.at(i, c, yy, xx) +=
                                   gy.at(i, c, offsets[i].first + yy, offsets[i].second + xx);
                     }
                   });
}

template <typename T>
Var global_avg_pool(Graph<T>& g, Var xv) {
  const Tensor<T>& x = g.value(xv);
  Tensor<T> y(x.n, x.c, 1, 1);
  const std::size_t plane = x.plane();
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c) {
      T s = 0;
      const T* src = x.ptr(i, c);
      for (std::size_t j = 0; j < plane; ++j) s += src[j];
      y.at(i, c, 0, 0) = s / static_cast<T>(plane);
    }
  return g.emplace(std::move(y), g.requires_grad(xv), [xv](Graph<T>& g, Var self) {
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad(xv);
    const std::size_t plane = gx.plane();
    for (int i = 0; i < gx.n; ++i)
      for (int c = 0; c < gx.c; ++c) {
        const T d = gy.at(i, c, 0, 0) / static_cast<T>(plane);
        T* dst = gx.ptr(i, c);
        for (std::size_t j = 0; j < plane; ++j) dst[j] += d;
      }
  });
}

template <typename T>
Var l1_mean(Graph<T>& g, Var av, Var bv) {
  const Tensor<T>& a = g.value(av);
  const Tensor<T>& b = g.value(bv);
  require(a.same_shape(b), "l1_mean: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  const T count = static_cast<T>(a.size());
  return make_scalar(g, s / count, {av, bv}, [av, bv, count](Graph<T>& g, Var self) {
    const T d = g.grad(self).data[0] / count;
    const Tensor<T>& a = g.value(av);
    const Tensor<T>& b = g.value(bv);
    const bool na = g.requires_grad(av), nb = g.requires_grad(bv);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const T diff = a.data[i] - b.data[i];
      const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
      if (na) g.grad(av).data[i] += d * sgn;
      if (nb) g.grad(bv).data[i] -= d * sgn;
    }
  });
}

template <typename T>
Var neg_log_prob_mean(Graph<T>& g, Var lv, ProbSide side, T eps) {
  const Tensor<T>& l = g.value(lv);
  T s = 0;
  for (T z : l.data) {
    const T p = std::clamp(T(1) / (T(1) + std::exp(-z)), eps, T(1) - eps);
    s -= side == ProbSide::Real ? std::log(p) : std::log(T(1) - p);
  }
  const T count = static_cast<T>(l.size());
  return make_scalar(g, s / count, {lv}, [lv, side, eps, count](Graph<T>& g, Var self) {
    const T d = g.grad(self).data[0] / count;
    const Tensor<T>& l = g.value(lv);
    Tensor<T>& gl = g.grad(lv);
    for (std::size_t i = 0; i < l.size(); ++i) {
      const T p = T(1) / (T(1) + std::exp(-l.data[i]));
      if (p <= eps || p >= T(1) - eps) continue;
      // d/dz[-log p] = p - 1 ; d/dz[-log(1 - p)] = p
      gl.data[i] += d * (side == ProbSide::Real ? p - T(1) : p);
    }
  });
}

template <typename T>
Var bce_with_logits_mean(Graph<T>& g, Var lv, const std::vector<T>& targets) {
  const Tensor<T>& l = g.value(lv);
  require(l.size() == targets.size(), "bce_with_logits_mean: target count mismatch");
  T s = 0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const T z = l.data[i];
    s += std::max(z, T(0)) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const T count = static_cast<T>(l.size());
  return make_scalar(g, s / count, {lv}, [lv, targets, count](Graph<T>& g, Var self) {
    const T d = g.grad(self).data[0] / count;
    const Tensor<T>& l = g.value(lv);
    Tensor<T>& gl = g.grad(lv);
    for (std::size_t i = 0; i < l.size(); ++i) {
      const T p = T(1) / (T(1) + std::exp(-l.data[i]));
      gl.data[i] += d * (p - targets[i]);
    }
  });
}

#define R2D2_INSTANTIATE_OPS(T)                                                                \
  template Var conv2d<T>(Graph<T>&, Var, Var, Var, int, int);                                  \
  template Var pad_reflect<T>(Graph<T>&, Var, int);                                            \
  template Var upsample2x<T>(Graph<T>&, Var);                                                  \
  template Var relu<T>(Graph<T>&, Var);                                                        \
  template Var leaky_relu<T>(Graph<T>&, Var, T);                                               \
  template Var tanh<T>(Graph<T>&, Var);                                                        \
  template Var add<T>(Graph<T>&, Var, Var);                                                    \
  template Var scale<T>(Graph<T>&, Var, T);                                                    \
  template Var add_scalar<T>(Graph<T>&, Var, T);                                               \
  template Var concat_channels<T>(Graph<T>&, const std::vector<Var>&);                         \
  template Var instance_norm<T>(Graph<T>&, Var, T);                                            \
  template Var replace_block<T>(Graph<T>&, Var, Var, const std::vector<std::pair<int, int>>&); \
  template Var global_avg_pool<T>(Graph<T>&, Var);                                             \
  template Var l1_mean<T>(Graph<T>&, Var, Var);                                                \
  template Var neg_log_prob_mean<T>(Graph<T>&, Var, ProbSide, T);                              \
  template Var bce_with_logits_mean<T>(Graph<T>&, Var, const std::vector<T>&);

R2D2_INSTANTIATE_OPS(float)
R2D2_INSTANTIATE_OPS(double)
#undef R2D2_INSTANTIATE_OPS

}  // namespace ag

template class ParamSet<float>;
template class ParamSet<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace r2d2
