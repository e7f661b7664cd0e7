#include "aprune/ops.hpp"

#include <cmath>
#include <cstdint>

#include "aprune/errors.hpp"
#include "aprune/kernels.hpp"

namespace aprune::ops {

namespace {

bool tracking(const Tensor& a) {
  return grad_enabled() && a.node()->needs_grad;
}

bool tracking(const Tensor& a, const Tensor& b) {
  return grad_enabled() && (a.node()->needs_grad || b.node()->needs_grad);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

float stable_sigmoid(double z) {
  if (z >= 0.0) return static_cast<float>(1.0 / (1.0 + std::exp(-z)));
  const double e = std::exp(z);
  return static_cast<float>(e / (1.0 + e));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad,
              const std::string& name) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4)
    throw ShapeError("conv2d " + name + ": input shape " + shape_str(xs));
  if (ws.size() != 4 || ws[0] != ws[1])
    throw ShapeError("conv2d " + name + ": weight shape " + shape_str(ws));
  if (ws[2] != xs[1])
    throw ShapeError("conv2d " + name + ": input has " + std::to_string(xs[1]) +
                     " channels but weight expects " + std::to_string(ws[2]));

  kernels::ConvDims d;
  d.n = xs[0]; d.c_in = xs[1]; d.h = xs[2]; d.w = xs[3];
  d.k = ws[0]; d.c_out = ws[3]; d.stride = stride; d.pad = pad;
  d.oh = kernels::conv_out_size(d.h, d.k, stride, pad);
  d.ow = kernels::conv_out_size(d.w, d.k, stride, pad);
  if (d.oh <= 0 || d.ow <= 0)
    throw ShapeError("conv2d " + name + ": output collapses for input " +
                     shape_str(xs) + " with k=" + std::to_string(d.k) +
                     " stride=" + std::to_string(stride));

  Tensor out = Tensor::zeros({d.n, d.c_out, d.oh, d.ow});
  kernels::conv2d_forward(d, x.data().data(), w.data().data(),
                          out.data().data());

  if (tracking(x, w)) {
    auto px = x.node();
    auto pw = w.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px, pw};
    o.backward_fn = [d, px, pw](Node& self) {
      if (px->needs_grad) {
        px->ensure_grad();
        kernels::conv2d_backward_input(d, self.grad.data(), pw->data.data(),
                                       px->grad.data());
      }
      if (pw->needs_grad) {
        pw->ensure_grad();
        kernels::conv2d_backward_weight(d, self.grad.data(), px->data.data(),
                                        pw->grad.data());
      }
    };
  }
  return out;
}

Tensor dwconv2d(const Tensor& x, const Tensor& w, int stride, int pad,
                const std::string& name) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4)
    throw ShapeError("dwconv2d " + name + ": input shape " + shape_str(xs));
  if (ws.size() != 3 || ws[0] != ws[1])
    throw ShapeError("dwconv2d " + name + ": weight shape " + shape_str(ws));
  if (ws[2] != xs[1])
    throw ShapeError("dwconv2d " + name + ": input has " +
                     std::to_string(xs[1]) + " channels but weight expects " +
                     std::to_string(ws[2]));

  kernels::ConvDims d;
  d.n = xs[0]; d.c_in = xs[1]; d.h = xs[2]; d.w = xs[3];
  d.k = ws[0]; d.c_out = xs[1]; d.stride = stride; d.pad = pad;
  d.oh = kernels::conv_out_size(d.h, d.k, stride, pad);
  d.ow = kernels::conv_out_size(d.w, d.k, stride, pad);
  if (d.oh <= 0 || d.ow <= 0)
    throw ShapeError("dwconv2d " + name + ": output collapses for input " +
                     shape_str(xs));

  Tensor out = Tensor::zeros({d.n, d.c_in, d.oh, d.ow});
  kernels::dwconv2d_forward(d, x.data().data(), w.data().data(),
                            out.data().data());

  if (tracking(x, w)) {
    auto px = x.node();
    auto pw = w.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px, pw};
    o.backward_fn = [d, px, pw](Node& self) {
      if (px->needs_grad) {
        px->ensure_grad();
        kernels::dwconv2d_backward_input(d, self.grad.data(), pw->data.data(),
                                         px->grad.data());
      }
      if (pw->needs_grad) {
        pw->ensure_grad();
        kernels::dwconv2d_backward_weight(d, self.grad.data(), px->data.data(),
                                          pw->grad.data());
      }
    };
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnStats& stats, bool training, const std::string& name) {
  const Shape& xs = x.shape();
  if (xs.size() != 4)
    throw ShapeError("batch_norm " + name + ": input shape " + shape_str(xs));
  const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("batch_norm " + name + ": " + std::to_string(c) +
                     " channels but gamma " + shape_str(gamma.shape()) +
                     ", beta " + shape_str(beta.shape()));
  if (stats.channels() != c)
    throw ShapeError("batch_norm " + name + ": running stats hold " +
                     std::to_string(stats.channels()) + " channels, input has " +
                     std::to_string(c));

  constexpr float kEps = 1e-5f;
  constexpr float kMomentum = 0.1f;
  const int64_t hw = static_cast<int64_t>(h) * w;
  const int64_t m = static_cast<int64_t>(n) * hw;

  std::vector<float> mean(c), inv_std(c);
  const float* xd = x.data().data();
  if (training) {
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int nn = 0; nn < n; ++nn) {
        const float* row = xd + (static_cast<int64_t>(nn) * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) s += row[i];
      }
      const double mu = s / static_cast<double>(m);
      double sq = 0.0;
      for (int nn = 0; nn < n; ++nn) {
        const float* row = xd + (static_cast<int64_t>(nn) * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const double dlt = row[i] - mu;
          sq += dlt * dlt;
        }
      }
      const double var = sq / static_cast<double>(m);
      mean[ch] = static_cast<float>(mu);
      inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + kEps));
      stats.mean[ch] = (1.0f - kMomentum) * stats.mean[ch] +
                       kMomentum * static_cast<float>(mu);
      stats.var[ch] = (1.0f - kMomentum) * stats.var[ch] +
                      kMomentum * static_cast<float>(var);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = stats.mean[ch];
      inv_std[ch] =
          static_cast<float>(1.0 / std::sqrt((double)stats.var[ch] + kEps));
    }
  }

  Tensor out = Tensor::zeros(xs);
  float* od = out.data().data();
  const float* gd = gamma.data().data();
  const float* bd = beta.data().data();
  for (int nn = 0; nn < n; ++nn) {
    for (int ch = 0; ch < c; ++ch) {
      const int64_t base = (static_cast<int64_t>(nn) * c + ch) * hw;
      const float mu = mean[ch], is = inv_std[ch], g = gd[ch], b = bd[ch];
      for (int64_t i = 0; i < hw; ++i)
        od[base + i] = g * (xd[base + i] - mu) * is + b;
    }
  }

  if (grad_enabled() && (x.node()->needs_grad || gamma.node()->needs_grad ||
                         beta.node()->needs_grad)) {
    auto px = x.node();
    auto pg = gamma.node();
    auto pb = beta.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px, pg, pb};
    o.backward_fn = [px, pg, pb, mean = std::move(mean),
                     inv_std = std::move(inv_std), n, c, hw, m,
                     training](Node& self) {
      const float* xd2 = px->data.data();
      const float* gd2 = pg->data.data();
      const float* dy = self.grad.data();
      for (int ch = 0; ch < c; ++ch) {
        const float mu = mean[ch], is = inv_std[ch];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int nn = 0; nn < n; ++nn) {
          const int64_t base = (static_cast<int64_t>(nn) * c + ch) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            const double d = dy[base + i];
            sum_dy += d;
            sum_dy_xhat += d * (xd2[base + i] - mu) * is;
          }
        }
        if (pg->needs_grad) {
          pg->ensure_grad();
          pg->grad[ch] += static_cast<float>(sum_dy_xhat);
        }
        if (pb->needs_grad) {
          pb->ensure_grad();
          pb->grad[ch] += static_cast<float>(sum_dy);
        }
        if (px->needs_grad) {
          px->ensure_grad();
          const double g = gd2[ch];
          const double mean_dy = sum_dy / static_cast<double>(m);
          const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
          for (int nn = 0; nn < n; ++nn) {
            const int64_t base = (static_cast<int64_t>(nn) * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              const double xhat = (xd2[base + i] - mu) * is;
              double dx = dy[base + i];
              if (training) dx -= mean_dy + xhat * mean_dy_xhat;
              px->grad[base + i] += static_cast<float>(g * is * dx);
            }
          }
        }
      }
    };
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  kernels::relu_forward(x.data().data(), out.data().data(), x.numel());
  if (tracking(x)) {
    auto px = x.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px};
    o.backward_fn = [px](Node& self) {
      px->ensure_grad();
      kernels::relu_backward(px->data.data(), self.grad.data(),
                             px->grad.data(), self.numel());
    };
  }
  return out;
}

Tensor channel_mask(const Tensor& x, const Tensor& m, const std::string& name) {
  const Shape& xs = x.shape();
  if (xs.size() != 4)
    throw ShapeError("channel_mask " + name + ": input shape " + shape_str(xs));
  if (m.shape().size() != 1 || m.dim(0) != xs[1])
    throw ShapeError("channel_mask " + name + ": mask " + shape_str(m.shape()) +
                     " over " + std::to_string(xs[1]) + " channels");
  const int n = xs[0], c = xs[1];
  const int hw = xs[2] * xs[3];

  Tensor out = Tensor::zeros(xs);
  kernels::channel_mask_forward(x.data().data(), m.data().data(),
                                out.data().data(), n, c, hw);
  if (tracking(x, m)) {
    auto px = x.node();
    auto pm = m.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px, pm};
    o.backward_fn = [px, pm, n, c, hw](Node& self) {
      if (px->needs_grad) {
        px->ensure_grad();
        kernels::channel_mask_backward_input(self.grad.data(), pm->data.data(),
                                             px->grad.data(), n, c, hw);
      }
      if (pm->needs_grad) {
        pm->ensure_grad();
        kernels::channel_mask_backward_mask(self.grad.data(), px->data.data(),
                                            pm->grad.data(), n, c, hw);
      }
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  kernels::add_forward(a.data().data(), b.data().data(), out.data().data(),
                       a.numel());
  if (tracking(a, b)) {
    auto pa = a.node();
    auto pb = b.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {pa, pb};
    o.backward_fn = [pa, pb](Node& self) {
      const int64_t n = self.numel();
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < n; ++i) pb->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (tracking(a, b)) {
    auto pa = a.node();
    auto pb = b.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {pa, pb};
    o.backward_fn = [pa, pb](Node& self) {
      const int64_t nn = self.numel();
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < nn; ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < nn; ++i) pb->grad[i] -= self.grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (tracking(a, b)) {
    auto pa = a.node();
    auto pb = b.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {pa, pb};
    o.backward_fn = [pa, pb](Node& self) {
      const int64_t nn = self.numel();
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < nn; ++i)
          pa->grad[i] += self.grad[i] * pb->data[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < nn; ++i)
          pb->grad[i] += self.grad[i] * pa->data[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& x, float s) {
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * s;
  if (tracking(x)) {
    auto px = x.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px};
    o.backward_fn = [px, s](Node& self) {
      px->ensure_grad();
      const int64_t nn = self.numel();
      for (int64_t i = 0; i < nn; ++i) px->grad[i] += self.grad[i] * s;
    };
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = Tensor::full({1}, static_cast<float>(acc));
  if (tracking(x)) {
    auto px = x.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px};
    o.backward_fn = [px](Node& self) {
      px->ensure_grad();
      const float g = self.grad[0];
      for (float& gi : px->grad) gi += g;
    };
  }
  return out;
}

Tensor abs(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = std::fabs(x.data()[i]);
  if (tracking(x)) {
    auto px = x.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px};
    o.backward_fn = [px](Node& self) {
      px->ensure_grad();
      const int64_t nn = self.numel();
      for (int64_t i = 0; i < nn; ++i) {
        const float v = px->data[i];
        if (v > 0.0f)
          px->grad[i] += self.grad[i];
        else if (v < 0.0f)
          px->grad[i] -= self.grad[i];
        // exactly zero: subgradient taken as 0
      }
    };
  }
  return out;
}

Tensor log(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i)
    out.data()[i] = std::log(x.data()[i]);
  if (tracking(x)) {
    auto px = x.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px};
    o.backward_fn = [px](Node& self) {
      px->ensure_grad();
      const int64_t nn = self.numel();
      for (int64_t i = 0; i < nn; ++i)
        px->grad[i] += self.grad[i] / px->data[i];
    };
  }
  return out;
}

Tensor sigmoid_scaled(const Tensor& x, double inv_t) {
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i)
    out.data()[i] = stable_sigmoid(x.data()[i] * inv_t);
  if (tracking(x)) {
    auto px = x.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px};
    o.backward_fn = [px, inv_t](Node& self) {
      px->ensure_grad();
      const int64_t nn = self.numel();
      for (int64_t i = 0; i < nn; ++i) {
        const double s = self.data[i];
        px->grad[i] += static_cast<float>(self.grad[i] * s * (1.0 - s) * inv_t);
      }
    };
  }
  return out;
}

Tensor gather_channels(const Tensor& x, const std::vector<int>& map,
                       const std::string& name) {
  const Shape& xs = x.shape();
  if (xs.size() != 4)
    throw ShapeError("gather_channels " + name + ": input shape " +
                     shape_str(xs));
  const int n = xs[0], c = xs[1];
  const int64_t hw = static_cast<int64_t>(xs[2]) * xs[3];
  const int co = static_cast<int>(map.size());
  for (int src : map)
    if (src < -1 || src >= c)
      throw ShapeError("gather_channels " + name + ": source channel " +
                       std::to_string(src) + " outside " + std::to_string(c));

  Tensor out = Tensor::zeros({n, co, xs[2], xs[3]});
  const float* xd = x.data().data();
  float* od = out.data().data();
  for (int nn = 0; nn < n; ++nn) {
    for (int j = 0; j < co; ++j) {
      if (map[j] < 0) continue;  // stays zero
      const float* src = xd + (static_cast<int64_t>(nn) * c + map[j]) * hw;
      float* dst = od + (static_cast<int64_t>(nn) * co + j) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i];
    }
  }
  if (tracking(x)) {
    auto px = x.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px};
    o.backward_fn = [px, map, n, c, co, hw](Node& self) {
      px->ensure_grad();
      for (int nn = 0; nn < n; ++nn) {
        for (int j = 0; j < co; ++j) {
          if (map[j] < 0) continue;
          const float* g =
              self.grad.data() + (static_cast<int64_t>(nn) * co + j) * hw;
          float* dst =
              px->grad.data() + (static_cast<int64_t>(nn) * c + map[j]) * hw;
          for (int64_t i = 0; i < hw; ++i) dst[i] += g[i];
        }
      }
    };
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.size() != 4)
    throw ShapeError("global_avg_pool: input shape " + shape_str(xs));
  const int n = xs[0], c = xs[1];
  const int64_t hw = static_cast<int64_t>(xs[2]) * xs[3];
  Tensor out = Tensor::zeros({n, c});
  const float* xd = x.data().data();
  for (int nn = 0; nn < n; ++nn) {
    for (int ch = 0; ch < c; ++ch) {
      const float* row = xd + (static_cast<int64_t>(nn) * c + ch) * hw;
      double acc = 0.0;
      for (int64_t i = 0; i < hw; ++i) acc += row[i];
      out.data()[nn * c + ch] = static_cast<float>(acc / (double)hw);
    }
  }
  if (tracking(x)) {
    auto px = x.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px};
    o.backward_fn = [px, n, c, hw](Node& self) {
      px->ensure_grad();
      for (int nn = 0; nn < n; ++nn) {
        for (int ch = 0; ch < c; ++ch) {
          const float g = self.grad[nn * c + ch] / static_cast<float>(hw);
          float* row = px->grad.data() + (static_cast<int64_t>(nn) * c + ch) * hw;
          for (int64_t i = 0; i < hw; ++i) row[i] += g;
        }
      }
    };
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b,
              const std::string& name) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || b.shape().size() != 1)
    throw ShapeError("linear " + name + ": shapes " + shape_str(xs) + ", " +
                     shape_str(ws) + ", " + shape_str(b.shape()));
  if (ws[0] != xs[1] || b.dim(0) != ws[1])
    throw ShapeError("linear " + name + ": input " + shape_str(xs) +
                     " incompatible with weight " + shape_str(ws));
  const int n = xs[0], ci = xs[1], co = ws[1];
  Tensor out = Tensor::zeros({n, co});
  const float* xd = x.data().data();
  const float* wd = w.data().data();
  const float* bd = b.data().data();
  for (int nn = 0; nn < n; ++nn) {
    for (int o = 0; o < co; ++o) {
      double acc = bd[o];
      for (int c = 0; c < ci; ++c) acc += (double)xd[nn * ci + c] * wd[c * co + o];
      out.data()[nn * co + o] = static_cast<float>(acc);
    }
  }
  if (grad_enabled() && (x.node()->needs_grad || w.node()->needs_grad ||
                         b.node()->needs_grad)) {
    auto px = x.node();
    auto pw = w.node();
    auto pb = b.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {px, pw, pb};
    o.backward_fn = [px, pw, pb, n, ci, co](Node& self) {
      const float* g = self.grad.data();
      if (px->needs_grad) {
        px->ensure_grad();
        for (int nn = 0; nn < n; ++nn) {
          for (int c = 0; c < ci; ++c) {
            double acc = 0.0;
            for (int oo = 0; oo < co; ++oo)
              acc += (double)g[nn * co + oo] * pw->data[c * co + oo];
            px->grad[nn * ci + c] += static_cast<float>(acc);
          }
        }
      }
      if (pw->needs_grad) {
        pw->ensure_grad();
        for (int c = 0; c < ci; ++c) {
          for (int oo = 0; oo < co; ++oo) {
            double acc = 0.0;
            for (int nn = 0; nn < n; ++nn)
              acc += (double)px->data[nn * ci + c] * g[nn * co + oo];
            pw->grad[c * co + oo] += static_cast<float>(acc);
          }
        }
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int oo = 0; oo < co; ++oo) {
          double acc = 0.0;
          for (int nn = 0; nn < n; ++nn) acc += g[nn * co + oo];
          pb->grad[oo] += static_cast<float>(acc);
        }
      }
    };
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels) {
  const Shape& ls = logits.shape();
  if (ls.size() != 2)
    throw ShapeError("softmax_cross_entropy: logits shape " + shape_str(ls));
  const int n = ls[0], k = ls[1];
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(n));

  const float* ld = logits.data().data();
  std::vector<float> probs(static_cast<size_t>(n) * k);
  double total = 0.0;
  for (int nn = 0; nn < n; ++nn) {
    const int y = labels[nn];
    if (y < 0 || y >= k)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) +
                       " out of range for " + std::to_string(k) + " classes");
    const float* row = ld + static_cast<int64_t>(nn) * k;
    double maxv = row[0];
    for (int i = 1; i < k; ++i) maxv = std::max(maxv, (double)row[i]);
    double denom = 0.0;
    for (int i = 0; i < k; ++i) {
      const double e = std::exp(row[i] - maxv);
      probs[nn * k + i] = static_cast<float>(e);
      denom += e;
    }
    for (int i = 0; i < k; ++i)
      probs[nn * k + i] = static_cast<float>(probs[nn * k + i] / denom);
    total += std::log(denom) + maxv - row[y];
  }
  Tensor out = Tensor::full({1}, static_cast<float>(total / n));
  if (tracking(logits)) {
    auto pl = logits.node();
    Node& o = *out.node();
    o.needs_grad = true;
    o.parents = {pl};
    o.backward_fn = [pl, probs = std::move(probs), labels, n, k](Node& self) {
      pl->ensure_grad();
      const float g = self.grad[0] / static_cast<float>(n);
      for (int nn = 0; nn < n; ++nn) {
        for (int i = 0; i < k; ++i) {
          float p = probs[nn * k + i];
          if (i == labels[nn]) p -= 1.0f;
          pl->grad[nn * k + i] += g * p;
        }
      }
    };
  }
  return out;
}

}  // namespace aprune::ops
