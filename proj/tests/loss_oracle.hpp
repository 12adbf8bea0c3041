#pragma once

// Straight-line re-implementation of the networks and losses, written with
// plain loops over doubles so that it shares no code with the library's
// autograd kernels. Used as the reference for loss equivalence tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "r2d2/models.hpp"
#include "r2d2/training.hpp"

namespace oracle {

struct Arr {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;
  Arr() = default;
  Arr(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
  double& operator()(int ch, int y, int x) {
    return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
  double operator()(int ch, int y, int x) const {
    return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
};

using Weights = std::map<std::string, const r2d2::Tensor<double>*>;

inline Weights weights_of(const r2d2::ParamSet<double>& ps) {
  Weights w;
  for (const auto& p : ps) w[p.name] = &p.value;
  return w;
}

inline Arr conv(const Arr& in, const r2d2::Tensor<double>& k, const r2d2::Tensor<double>& b,
                int stride, int pad) {
  const int co = k.n, ks = k.h;
  const int ho = (in.h + 2 * pad - ks) / stride + 1;
  const int wo = (in.w + 2 * pad - ks) / stride + 1;
  Arr out(co, ho, wo);
  for (int o = 0; o < co; ++o)
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) {
        double s = b.data[o];
        for (int i = 0; i < in.c; ++i)
          for (int ky = 0; ky < ks; ++ky)
            for (int kx = 0; kx < ks; ++kx) {
              const int yy = y * stride + ky - pad, xx = x * stride + kx - pad;
              if (yy < 0 || yy >= in.h || xx < 0 || xx >= in.w) continue;
              s += k.at(o, i, ky, kx) * in(i, yy, xx);
            }
        out(o, y, x) = s;
      }
  return out;
}

inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

inline Arr reflect_pad(const Arr& in, int p) {
  Arr out(in.c, in.h + 2 * p, in.w + 2 * p);
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        out(c, y, x) = in(c, reflect(y - p, in.h), reflect(x - p, in.w));
  return out;
}

inline Arr map(Arr a, double (*f)(double)) {
  for (auto& x : a.v) x = f(x);
  return a;
}
inline double relu(double x) { return x > 0 ? x : 0; }
inline double lrelu(double x) { return x > 0 ? x : 0.2 * x; }
inline double tanh_(double x) { return std::tanh(x); }

inline Arr add(Arr a, const Arr& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

inline Arr upsample(const Arr& in) {
  Arr out(in.c, in.h * 2, in.w * 2);
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) out(c, y, x) = in(c, y / 2, x / 2);
  return out;
}

inline Arr generator(const Weights& w, const r2d2::GeneratorConfig& g, const Arr& input) {
  auto W = [&](const std::string& n) -> const r2d2::Tensor<double>& { return *w.at(n + ".w"); };
  auto B = [&](const std::string& n) -> const r2d2::Tensor<double>& { return *w.at(n + ".b"); };
  const int half = g.stem_kernel / 2;
  Arr h = half ? reflect_pad(input, half) : input;
  h = map(conv(h, W("g.stem"), B("g.stem"), 1, 0), relu);
  for (int i = 0; i < g.downsamples; ++i) {
    const std::string n = "g.down" + std::to_string(i);
    h = map(conv(h, W(n), B(n), 2, 1), relu);
  }
  for (int r = 0; r < g.resnet_blocks; ++r) {
    const std::string n = "g.res" + std::to_string(r);
    Arr y = map(conv(reflect_pad(h, 1), W(n + ".conv1"), B(n + ".conv1"), 1, 0), relu);
    y = conv(reflect_pad(y, 1), W(n + ".conv2"), B(n + ".conv2"), 1, 0);
    h = add(h, y);
  }
  for (int i = 0; i < g.downsamples; ++i) {
    const std::string n = "g.up" + std::to_string(i);
    h = map(conv(reflect_pad(upsample(h), 1), W(n), B(n), 1, 0), relu);
  }
  if (half) h = reflect_pad(h, half);
  return map(conv(h, W("g.head"), B("g.head"), 1, 0), tanh_);
}

inline Arr discriminator(const Weights& w, const std::string& prefix,
                         const r2d2::DiscriminatorConfig& d, const Arr& input) {
  Arr h = input;
  for (int l = 0; l < d.levels; ++l) {
    const std::string n = prefix + ".down" + std::to_string(l);
    h = map(conv(h, *w.at(n + ".w"), *w.at(n + ".b"), 2, 1), lrelu);
  }
  return conv(h, *w.at(prefix + ".head.w"), *w.at(prefix + ".head.b"), 1, 1);
}

inline double to_model(double v) { return 2.0 * v - 1.0; }

/// one-hot | across-track | flag c1 | flag c2 | c1 canvas | c2 canvas
inline Arr condition_planes(const r2d2::SampleElement& e, int k) {
  const int t = e.tile.height, s = e.conditions.c1.height, ch = e.tile.channels;
  Arr a(k + 3 + 2 * ch, t, t);
  for (int y = 0; y < t; ++y)
    for (int x = 0; x < t; ++x) {
      a(e.semantic.at(y, x), y, x) = 1.0;
      a(k, y, x) = e.conditions.across_track.at(0, y, x);
      a(k + 1, y, x) = e.conditions.valid_c1 ? 1.0 : 0.0;
      a(k + 2, y, x) = e.conditions.valid_c2 ? 1.0 : 0.0;
    }
  for (int c = 0; c < ch; ++c) {
    if (e.conditions.valid_c1)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < t; ++x) a(k + 3 + c, y, x) = to_model(e.conditions.c1.at(c, y, x));
    if (e.conditions.valid_c2)
      for (int y = 0; y < t; ++y)
        for (int x = 0; x < s; ++x) a(k + 3 + ch + c, y, x) = to_model(e.conditions.c2.at(c, y, x));
  }
  return a;
}

inline Arr stack(const Arr& a, const Arr& b) {
  Arr out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<long>(a.v.size()));
  return out;
}

inline Arr image_planes(const r2d2::Image& img) {
  Arr a(img.channels, img.height, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i) a.v[i] = to_model(img.data[i]);
  return a;
}

inline Arr quad_planes(const r2d2::Quad& q, int k) {
  const int n = q.semantic.height;
  Arr a(k + 1, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      a(q.semantic.at(y, x), y, x) = 1.0;
      a(k, y, x) = q.across_track.at(0, y, x);
    }
  return a;
}

inline double clamp_p(double logit, double eps) {
  return std::clamp(1.0 / (1.0 + std::exp(-logit)), eps, 1.0 - eps);
}

struct Losses {
  double g_total, l1, adv1, adv2, d1, d2;
};

/// Evaluates both objectives (standard loss form) on one batch.
inline Losses losses(const r2d2::BatchSample& batch, const r2d2::ModelParams<double>& p,
                     const r2d2::TrainingConfig& cfg) {
  const Weights w = [&] {
    Weights all = weights_of(p.g);
    for (const auto& [k, v] : weights_of(p.d1)) all[k] = v;
    for (const auto& [k, v] : weights_of(p.d2)) all[k] = v;
    return all;
  }();
  const int k = p.layout.num_classes;
  const double eps = cfg.prob_epsilon;
  double l1 = 0, l1n = 0;
  double adv1 = 0, adv1n = 0, adv2 = 0, adv2n = 0;
  double d1r = 0, d1f = 0, d1n = 0, d2r = 0, d2f = 0, d2n = 0;
  for (const auto& e : batch) {
    const Arr cond = condition_planes(e, k);
    Arr noise(e.noise.channels, e.noise.height, e.noise.width);
    for (std::size_t i = 0; i < e.noise.data.size(); ++i) noise.v[i] = e.noise.data[i];
    const Arr fake = generator(w, p.gen, stack(cond, noise));
    const Arr real = image_planes(e.tile);
    for (std::size_t i = 0; i < fake.v.size(); ++i, ++l1n) l1 += std::abs(fake.v[i] - real.v[i]);

    const Arr s_fake = discriminator(w, "d1", p.disc, stack(cond, fake));
    const Arr s_real = discriminator(w, "d1", p.disc, stack(cond, real));
    for (std::size_t i = 0; i < s_fake.v.size(); ++i, ++adv1n, ++d1n) {
      adv1 += -std::log(clamp_p(s_fake.v[i], eps));
      d1f += -std::log(1.0 - clamp_p(s_fake.v[i], eps));
      d1r += -std::log(clamp_p(s_real.v[i], eps));
    }

    const Arr qc = quad_planes(e.quad, k);
    const Arr qreal = image_planes(e.quad.image);
    Arr qfake = qreal;
    const auto [oy, ox] = e.quad.slot_offset();
    for (int c = 0; c < fake.c; ++c)
      for (int y = 0; y < fake.h; ++y)
        for (int x = 0; x < fake.w; ++x) qfake(c, oy + y, ox + x) = fake(c, y, x);
    const Arr q_fake = discriminator(w, "d2", p.disc, stack(qc, qfake));
    const Arr q_real = discriminator(w, "d2", p.disc, stack(qc, qreal));
    for (std::size_t i = 0; i < q_fake.v.size(); ++i, ++adv2n, ++d2n) {
      adv2 += -std::log(clamp_p(q_fake.v[i], eps));
      d2f += -std::log(1.0 - clamp_p(q_fake.v[i], eps));
      d2r += -std::log(clamp_p(q_real.v[i], eps));
    }
  }
  Losses out;
  out.l1 = l1 / l1n;
  out.adv1 = adv1 / adv1n;
  out.adv2 = adv2 / adv2n;
  out.g_total = cfg.l1_weight * out.l1 + cfg.gan_weight * (out.adv1 + out.adv2);
  out.d1 = d1r / d1n + d1f / d1n;
  out.d2 = d2r / d2n + d2f / d2n;
  return out;
}

}  // namespace oracle
