#include "mpmflow/layers.hpp"

#include <algorithm>
#include <cmath>

namespace mpmflow {

namespace {

// Inclusive output-index range [lo, hi) along one axis for which
// in = out * stride + koff - pad stays inside [0, limit).
void axis_bounds(std::int32_t koff, std::int32_t stride, std::int32_t pad,
                 std::int32_t limit, std::int32_t out_count,
                 std::int32_t& lo, std::int32_t& hi) {
  std::int32_t shift = koff - pad;
  lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
  hi = std::min<std::int64_t>(out_count,
                              shift >= limit ? 0 : (limit - 1 - shift) / stride + 1);
  if (hi < lo) hi = lo;
}

float uniform_signed(Pcg32& rng, float scale) {
  return rng.uniform_f(-scale, scale);
}

float sigmoid(float z) {
  if (z >= 0.0f) return 1.0f / (1.0f + std::exp(-z));
  float e = std::exp(z);
  return e / (1.0f + e);
}

}  // namespace

Conv3d::Conv3d(std::int32_t in_channels, std::int32_t out_channels,
               std::int32_t kernel, std::int32_t stride_, std::int32_t pad_,
               bool bias)
    : in_c(in_channels),
      out_c(out_channels),
      k(kernel),
      stride(stride_),
      pad(pad_),
      has_bias(bias) {
  MPMFLOW_CHECK(in_c > 0 && out_c > 0 && k > 0 && stride > 0 && pad >= 0,
                "bad conv geometry");
  w.assign(static_cast<std::size_t>(out_c) * in_c * k * k * k, 0.0f);
  b.assign(has_bias ? out_c : 0, 0.0f);
  gw.assign(w.size(), 0.0f);
  gb.assign(b.size(), 0.0f);
}

void Conv3d::init(Pcg32& rng) {
  const float scale =
      1.0f / std::sqrt(static_cast<float>(in_c) * k * k * k);
  for (float& x : w) x = uniform_signed(rng, scale);
  std::fill(b.begin(), b.end(), 0.0f);
}

void Conv3d::zero_grads() {
  std::fill(gw.begin(), gw.end(), 0.0f);
  std::fill(gb.begin(), gb.end(), 0.0f);
}

std::vector<ParamRef> Conv3d::params(const std::string& prefix) {
  std::vector<ParamRef> out;
  out.push_back({prefix + ".w", {out_c, in_c, k, k, k}, &w, &gw});
  if (has_bias) out.push_back({prefix + ".b", {out_c}, &b, &gb});
  return out;
}

Tensor4 Conv3d::forward(const Tensor4& x) const {
  MPMFLOW_CHECK(x.shape[0] == in_c, "conv input channel mismatch");
  const std::int32_t xd = x.shape[1], xh = x.shape[2], xw = x.shape[3];
  const std::int32_t od = out_dim(xd), oh = out_dim(xh), ow = out_dim(xw);
  MPMFLOW_CHECK(od > 0 && oh > 0 && ow > 0, "conv input too small");
  Tensor4 y(out_c, od, oh, ow);

  for (std::int32_t oc = 0; oc < out_c; ++oc) {
    if (has_bias) {
      float* yc = &y.v[y.at(oc, 0, 0, 0)];
      std::fill(yc, yc + static_cast<std::size_t>(od) * oh * ow, b[oc]);
    }
    for (std::int32_t ic = 0; ic < in_c; ++ic)
      for (std::int32_t zo = 0; zo < od; ++zo)
        for (std::int32_t kd = 0; kd < k; ++kd) {
          const std::int32_t id = zo * stride + kd - pad;
          if (id < 0 || id >= xd) continue;
          for (std::int32_t yo = 0; yo < oh; ++yo)
            for (std::int32_t kh = 0; kh < k; ++kh) {
              const std::int32_t ih = yo * stride + kh - pad;
              if (ih < 0 || ih >= xh) continue;
              float* yrow = &y.v[y.at(oc, zo, yo, 0)];
              const float* xrow = &x.v[x.at(ic, id, ih, 0)];
              const float* wk =
                  &w[(((static_cast<std::size_t>(oc) * in_c + ic) * k + kd) *
                          k +
                      kh) *
                     k];
              for (std::int32_t kw = 0; kw < k; ++kw) {
                std::int32_t lo, hi;
                axis_bounds(kw, stride, pad, xw, ow, lo, hi);
                const float wv = wk[kw];
                const std::int32_t shift = kw - pad;
                for (std::int32_t xo = lo; xo < hi; ++xo)
                  yrow[xo] += wv * xrow[xo * stride + shift];
              }
            }
        }
  }
  return y;
}

Tensor4 Conv3d::backward(const Tensor4& x, const Tensor4& gy) {
  const std::int32_t xd = x.shape[1], xh = x.shape[2], xw = x.shape[3];
  const std::int32_t od = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3];
  MPMFLOW_CHECK(gy.shape[0] == out_c && od == out_dim(xd) &&
                    oh == out_dim(xh) && ow == out_dim(xw),
                "conv backward shape mismatch");
  Tensor4 gx(in_c, xd, xh, xw);

  for (std::int32_t oc = 0; oc < out_c; ++oc) {
    if (has_bias) {
      const float* gc = &gy.v[gy.at(oc, 0, 0, 0)];
      double acc = 0.0;
      for (std::size_t i = 0; i < static_cast<std::size_t>(od) * oh * ow;
           ++i)
        acc += gc[i];
      gb[oc] += static_cast<float>(acc);
    }
    for (std::int32_t ic = 0; ic < in_c; ++ic)
      for (std::int32_t zo = 0; zo < od; ++zo)
        for (std::int32_t kd = 0; kd < k; ++kd) {
          const std::int32_t id = zo * stride + kd - pad;
          if (id < 0 || id >= xd) continue;
          for (std::int32_t yo = 0; yo < oh; ++yo)
            for (std::int32_t kh = 0; kh < k; ++kh) {
              const std::int32_t ih = yo * stride + kh - pad;
              if (ih < 0 || ih >= xh) continue;
              const float* grow = &gy.v[gy.at(oc, zo, yo, 0)];
              const float* xrow = &x.v[x.at(ic, id, ih, 0)];
              float* gxrow = &gx.v[gx.at(ic, id, ih, 0)];
              const std::size_t koff =
                  (((static_cast<std::size_t>(oc) * in_c + ic) * k + kd) *
                       k +
                   kh) *
                  k;
              float* gwk = &gw[koff];
              const float* wk = &w[koff];
              for (std::int32_t kw = 0; kw < k; ++kw) {
                std::int32_t lo, hi;
                axis_bounds(kw, stride, pad, xw, ow, lo, hi);
                const float wv = wk[kw];
                const std::int32_t shift = kw - pad;
                float acc = 0.0f;
                for (std::int32_t xo = lo; xo < hi; ++xo) {
                  const float gv = grow[xo];
                  gxrow[xo * stride + shift] += wv * gv;
                  acc += xrow[xo * stride + shift] * gv;
                }
                gwk[kw] += acc;
              }
            }
        }
  }
  return gx;
}

ConvTranspose3d::ConvTranspose3d(std::int32_t in_channels,
                                 std::int32_t out_channels,
                                 std::int32_t kernel, std::int32_t stride_,
                                 std::int32_t pad_)
    : in_c(in_channels),
      out_c(out_channels),
      k(kernel),
      stride(stride_),
      pad(pad_) {
  MPMFLOW_CHECK(in_c > 0 && out_c > 0 && k > 0 && stride > 0 && pad >= 0,
                "bad transposed-conv geometry");
  w.assign(static_cast<std::size_t>(in_c) * out_c * k * k * k, 0.0f);
  b.assign(out_c, 0.0f);
  gw.assign(w.size(), 0.0f);
  gb.assign(b.size(), 0.0f);
}

void ConvTranspose3d::init(Pcg32& rng) {
  const float scale =
      1.0f / std::sqrt(static_cast<float>(in_c) * k * k * k);
  for (float& x : w) x = uniform_signed(rng, scale);
  std::fill(b.begin(), b.end(), 0.0f);
}

void ConvTranspose3d::zero_grads() {
  std::fill(gw.begin(), gw.end(), 0.0f);
  std::fill(gb.begin(), gb.end(), 0.0f);
}

std::vector<ParamRef> ConvTranspose3d::params(const std::string& prefix) {
  return {{prefix + ".w", {in_c, out_c, k, k, k}, &w, &gw},
          {prefix + ".b", {out_c}, &b, &gb}};
}

Tensor4 ConvTranspose3d::forward(const Tensor4& x) const {
  MPMFLOW_CHECK(x.shape[0] == in_c, "transposed-conv channel mismatch");
  const std::int32_t xd = x.shape[1], xh = x.shape[2], xw = x.shape[3];
  const std::int32_t od = out_dim(xd), oh = out_dim(xh), ow = out_dim(xw);
  MPMFLOW_CHECK(od > 0 && oh > 0 && ow > 0, "transposed-conv input too small");
  Tensor4 y(out_c, od, oh, ow);

  for (std::int32_t oc = 0; oc < out_c; ++oc) {
    float* yc = &y.v[y.at(oc, 0, 0, 0)];
    std::fill(yc, yc + static_cast<std::size_t>(od) * oh * ow, b[oc]);
  }
  // Scatter: every input voxel contributes to a k^3 block of outputs at
  // out = in * stride + koff - pad.
  for (std::int32_t ic = 0; ic < in_c; ++ic)
    for (std::int32_t oc = 0; oc < out_c; ++oc)
      for (std::int32_t zi = 0; zi < xd; ++zi)
        for (std::int32_t kd = 0; kd < k; ++kd) {
          const std::int32_t zo = zi * stride + kd - pad;
          if (zo < 0 || zo >= od) continue;
          for (std::int32_t yi = 0; yi < xh; ++yi)
            for (std::int32_t kh = 0; kh < k; ++kh) {
              const std::int32_t yo = yi * stride + kh - pad;
              if (yo < 0 || yo >= oh) continue;
              const float* xrow = &x.v[x.at(ic, zi, yi, 0)];
              float* yrow = &y.v[y.at(oc, zo, yo, 0)];
              const float* wk =
                  &w[(((static_cast<std::size_t>(ic) * out_c + oc) * k +
                       kd) *
                          k +
                      kh) *
                     k];
              for (std::int32_t kw = 0; kw < k; ++kw) {
                std::int32_t lo, hi;
                axis_bounds(kw, stride, pad, ow, xw, lo, hi);
                const float wv = wk[kw];
                const std::int32_t shift = kw - pad;
                for (std::int32_t xi = lo; xi < hi; ++xi)
                  yrow[xi * stride + shift] += wv * xrow[xi];
              }
            }
        }
  return y;
}

Tensor4 ConvTranspose3d::backward(const Tensor4& x, const Tensor4& gy) {
  const std::int32_t xd = x.shape[1], xh = x.shape[2], xw = x.shape[3];
  const std::int32_t od = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3];
  MPMFLOW_CHECK(gy.shape[0] == out_c && od == out_dim(xd) &&
                    oh == out_dim(xh) && ow == out_dim(xw),
                "transposed-conv backward shape mismatch");
  Tensor4 gx(in_c, xd, xh, xw);

  for (std::int32_t oc = 0; oc < out_c; ++oc) {
    const float* gc = &gy.v[gy.at(oc, 0, 0, 0)];
    double acc = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(od) * oh * ow; ++i)
      acc += gc[i];
    gb[oc] += static_cast<float>(acc);
  }
  for (std::int32_t ic = 0; ic < in_c; ++ic)
    for (std::int32_t oc = 0; oc < out_c; ++oc)
      for (std::int32_t zi = 0; zi < xd; ++zi)
        for (std::int32_t kd = 0; kd < k; ++kd) {
          const std::int32_t zo = zi * stride + kd - pad;
          if (zo < 0 || zo >= od) continue;
          for (std::int32_t yi = 0; yi < xh; ++yi)
            for (std::int32_t kh = 0; kh < k; ++kh) {
              const std::int32_t yo = yi * stride + kh - pad;
              if (yo < 0 || yo >= oh) continue;
              const float* xrow = &x.v[x.at(ic, zi, yi, 0)];
              float* gxrow = &gx.v[gx.at(ic, zi, yi, 0)];
              const float* grow = &gy.v[gy.at(oc, zo, yo, 0)];
              const std::size_t koff =
                  (((static_cast<std::size_t>(ic) * out_c + oc) * k + kd) *
                       k +
                   kh) *
                  k;
              float* gwk = &gw[koff];
              const float* wk = &w[koff];
              for (std::int32_t kw = 0; kw < k; ++kw) {
                std::int32_t lo, hi;
                axis_bounds(kw, stride, pad, ow, xw, lo, hi);
                const float wv = wk[kw];
                const std::int32_t shift = kw - pad;
                float acc = 0.0f;
                for (std::int32_t xi = lo; xi < hi; ++xi) {
                  const float gv = grow[xi * stride + shift];
                  gxrow[xi] += wv * gv;
                  acc += xrow[xi] * gv;
                }
                gwk[kw] += acc;
              }
            }
        }
  return gx;
}

Tensor4 leaky_relu(const Tensor4& x, float slope) {
  Tensor4 y = x;
  for (float& v : y.v)
    if (v < 0.0f) v *= slope;
  return y;
}

Tensor4 leaky_relu_backward(const Tensor4& x, const Tensor4& gy,
                            float slope) {
  MPMFLOW_CHECK(x.same_shape(gy), "activation backward shape mismatch");
  Tensor4 gx = gy;
  for (std::size_t i = 0; i < gx.v.size(); ++i)
    if (x.v[i] <= 0.0f) gx.v[i] *= slope;
  return gx;
}

ConvLstmCell::ConvLstmCell(std::int32_t channels_, std::int32_t kernel)
    : channels(channels_), k(kernel) {
  const std::int32_t pad = kernel / 2;
  auto gate_x = [&] { return Conv3d(channels, channels, kernel, 1, pad); };
  auto gate_h = [&] {
    return Conv3d(channels, channels, kernel, 1, pad, false);
  };
  wx_i = gate_x();
  wh_i = gate_h();
  wx_f = gate_x();
  wh_f = gate_h();
  wx_o = gate_x();
  wh_o = gate_h();
  wx_g = gate_x();
  wh_g = gate_h();
}

void ConvLstmCell::init(Pcg32& rng) {
  for (Conv3d* c : {&wx_i, &wh_i, &wx_f, &wh_f, &wx_o, &wh_o, &wx_g, &wh_g})
    c->init(rng);
  // Open the forget gate at the start of training.
  std::fill(wx_f.b.begin(), wx_f.b.end(), 1.0f);
}

void ConvLstmCell::zero_grads() {
  for (Conv3d* c : {&wx_i, &wh_i, &wx_f, &wh_f, &wx_o, &wh_o, &wx_g, &wh_g})
    c->zero_grads();
}

std::vector<ParamRef> ConvLstmCell::params(const std::string& prefix) {
  std::vector<ParamRef> out;
  auto add = [&](Conv3d& c, const char* name) {
    for (ParamRef& p : c.params(prefix + "." + name)) out.push_back(p);
  };
  add(wx_i, "xi");
  add(wh_i, "hi");
  add(wx_f, "xf");
  add(wh_f, "hf");
  add(wx_o, "xo");
  add(wh_o, "ho");
  add(wx_g, "xg");
  add(wh_g, "hg");
  return out;
}

void ConvLstmCell::forward(const Tensor4& x, Tensor4& h, Tensor4& c,
                           StepCache* cache) const {
  MPMFLOW_CHECK(x.shape[0] == channels && x.same_shape(h) && x.same_shape(c),
                "lstm step shape mismatch");
  Tensor4 i = wx_i.forward(x), f = wx_f.forward(x), o = wx_o.forward(x),
          g = wx_g.forward(x);
  Tensor4 hi = wh_i.forward(h), hf = wh_f.forward(h), ho = wh_o.forward(h),
          hg = wh_g.forward(h);
  const std::size_t n = x.numel();
  for (std::size_t t = 0; t < n; ++t) {
    i.v[t] = sigmoid(i.v[t] + hi.v[t]);
    f.v[t] = sigmoid(f.v[t] + hf.v[t]);
    o.v[t] = sigmoid(o.v[t] + ho.v[t]);
    g.v[t] = std::tanh(g.v[t] + hg.v[t]);
  }
  Tensor4 c_new(x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
  Tensor4 tanh_c = c_new;
  for (std::size_t t = 0; t < n; ++t) {
    c_new.v[t] = f.v[t] * c.v[t] + i.v[t] * g.v[t];
    tanh_c.v[t] = std::tanh(c_new.v[t]);
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = h;
    cache->c_prev = c;
    cache->i = i;
    cache->f = f;
    cache->o = o;
    cache->g = g;
    cache->c = c_new;
    cache->tanh_c = tanh_c;
  }
  c = std::move(c_new);
  for (std::size_t t = 0; t < n; ++t) h.v[t] = o.v[t] * tanh_c.v[t];
}

Tensor4 ConvLstmCell::backward(const StepCache& cache, Tensor4& gh,
                               Tensor4& gc) {
  const std::size_t n = cache.x.numel();
  MPMFLOW_CHECK(gh.numel() == n && gc.numel() == n,
                "lstm backward shape mismatch");
  Tensor4 gi = cache.i, gf = cache.f, go = cache.o, gg = cache.g;
  // h = o * tanh(c); fold dL/dh into dL/dc, then split c = f*c_prev + i*g.
  for (std::size_t t = 0; t < n; ++t) {
    const float i = cache.i.v[t], f = cache.f.v[t], o = cache.o.v[t],
                g = cache.g.v[t], th = cache.tanh_c.v[t];
    const float ghv = gh.v[t];
    const float gcv = gc.v[t] + ghv * o * (1.0f - th * th);
    go.v[t] = ghv * th * o * (1.0f - o);
    gi.v[t] = gcv * g * i * (1.0f - i);
    gf.v[t] = gcv * cache.c_prev.v[t] * f * (1.0f - f);
    gg.v[t] = gcv * i * (1.0f - g * g);
    gc.v[t] = gcv * f;
  }
  Tensor4 gx = wx_i.backward(cache.x, gi);
  Tensor4 gh_prev = wh_i.backward(cache.h_prev, gi);
  auto add = [&n](Tensor4& into, const Tensor4& from) {
    for (std::size_t t = 0; t < n; ++t) into.v[t] += from.v[t];
  };
  add(gx, wx_f.backward(cache.x, gf));
  add(gh_prev, wh_f.backward(cache.h_prev, gf));
  add(gx, wx_o.backward(cache.x, go));
  add(gh_prev, wh_o.backward(cache.h_prev, go));
  add(gx, wx_g.backward(cache.x, gg));
  add(gh_prev, wh_g.backward(cache.h_prev, gg));
  gh = std::move(gh_prev);
  return gx;
}

}  // namespace mpmflow
