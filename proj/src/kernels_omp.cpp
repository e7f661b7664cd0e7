#include <vector>

#include "aprune/kernels.hpp"

namespace aprune::kernels {

int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

void conv2d_forward(const ConvDims& d, const float* in, const float* weight,
                    float* out) {
  const int hw_out = d.oh * d.ow;
#pragma omp parallel
  {
    std::vector<double> acc(d.c_out);
#pragma omp for
    for (int idx = 0; idx < d.n * hw_out; ++idx) {
      const int nn = idx / hw_out;
      const int oy = (idx % hw_out) / d.ow;
      const int ox = idx % d.ow;
      for (int o = 0; o < d.c_out; ++o) acc[o] = 0.0;
      for (int ky = 0; ky < d.k; ++ky) {
        const int iy = oy * d.stride - d.pad + ky;
        if (iy < 0 || iy >= d.h) continue;
        for (int kx = 0; kx < d.k; ++kx) {
          const int ix = ox * d.stride - d.pad + kx;
          if (ix < 0 || ix >= d.w) continue;
          for (int c = 0; c < d.c_in; ++c) {
            const double xv = in[((int64_t)(nn * d.c_in + c) * d.h + iy) * d.w + ix];
            const float* wrow = weight + ((int64_t)(ky * d.k + kx) * d.c_in + c) * d.c_out;
            for (int o = 0; o < d.c_out; ++o) acc[o] += xv * wrow[o];
          }
        }
      }
      for (int o = 0; o < d.c_out; ++o)
        out[((int64_t)(nn * d.c_out + o) * d.oh + oy) * d.ow + ox] =
            static_cast<float>(acc[o]);
    }
  }
}

void conv2d_backward_input(const ConvDims& d, const float* grad_out,
                           const float* weight, float* grad_in) {
#pragma omp parallel for
  for (int nc = 0; nc < d.n * d.c_in; ++nc) {
    const int nn = nc / d.c_in;
    const int c = nc % d.c_in;
    for (int iy = 0; iy < d.h; ++iy) {
      for (int ix = 0; ix < d.w; ++ix) {
        double acc = 0.0;
        for (int ky = 0; ky < d.k; ++ky) {
          const int ty = iy + d.pad - ky;
          if (ty < 0 || ty % d.stride != 0) continue;
          const int oy = ty / d.stride;
          if (oy >= d.oh) continue;
          for (int kx = 0; kx < d.k; ++kx) {
            const int tx = ix + d.pad - kx;
            if (tx < 0 || tx % d.stride != 0) continue;
            const int ox = tx / d.stride;
            if (ox >= d.ow) continue;
            const float* wrow = weight + ((int64_t)(ky * d.k + kx) * d.c_in + c) * d.c_out;
            for (int o = 0; o < d.c_out; ++o) {
              acc += (double)grad_out[((int64_t)(nn * d.c_out + o) * d.oh + oy) * d.ow + ox] *
                     wrow[o];
            }
          }
        }
        grad_in[((int64_t)(nn * d.c_in + c) * d.h + iy) * d.w + ix] +=
            static_cast<float>(acc);
      }
    }
  }
}

void conv2d_backward_weight(const ConvDims& d, const float* grad_out,
                            const float* in, float* grad_weight) {
  const int kk = d.k * d.k;
#pragma omp parallel
  {
    std::vector<double> buf((size_t)kk * d.c_in);
#pragma omp for
    for (int o = 0; o < d.c_out; ++o) {
      std::fill(buf.begin(), buf.end(), 0.0);
      for (int nn = 0; nn < d.n; ++nn) {
        for (int oy = 0; oy < d.oh; ++oy) {
          for (int ox = 0; ox < d.ow; ++ox) {
            const double g =
                grad_out[((int64_t)(nn * d.c_out + o) * d.oh + oy) * d.ow + ox];
            for (int ky = 0; ky < d.k; ++ky) {
              const int iy = oy * d.stride - d.pad + ky;
              if (iy < 0 || iy >= d.h) continue;
              for (int kx = 0; kx < d.k; ++kx) {
                const int ix = ox * d.stride - d.pad + kx;
                if (ix < 0 || ix >= d.w) continue;
                double* brow = buf.data() + (size_t)(ky * d.k + kx) * d.c_in;
                const float* xrow = in + ((int64_t)nn * d.c_in * d.h + iy) * d.w + ix;
                for (int c = 0; c < d.c_in; ++c)
                  brow[c] += g * xrow[(int64_t)c * d.h * d.w];
              }
            }
          }
        }
      }
      for (int t = 0; t < kk * d.c_in; ++t)
        grad_weight[(int64_t)t * d.c_out + o] += static_cast<float>(buf[t]);
    }
  }
}

void dwconv2d_forward(const ConvDims& d, const float* in, const float* weight,
                      float* out) {
  const int ch = d.c_in;
#pragma omp parallel for
  for (int nc = 0; nc < d.n * ch; ++nc) {
    const int nn = nc / ch;
    const int c = nc % ch;
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        double acc = 0.0;
        for (int ky = 0; ky < d.k; ++ky) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (int kx = 0; kx < d.k; ++kx) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.w) continue;
            acc += (double)in[((int64_t)(nn * ch + c) * d.h + iy) * d.w + ix] *
                   weight[(ky * d.k + kx) * ch + c];
          }
        }
        out[((int64_t)(nn * ch + c) * d.oh + oy) * d.ow + ox] =
            static_cast<float>(acc);
      }
    }
  }
}

void dwconv2d_backward_input(const ConvDims& d, const float* grad_out,
                             const float* weight, float* grad_in) {
  const int ch = d.c_in;
#pragma omp parallel for
  for (int nc = 0; nc < d.n * ch; ++nc) {
    const int nn = nc / ch;
    const int c = nc % ch;
    for (int iy = 0; iy < d.h; ++iy) {
      for (int ix = 0; ix < d.w; ++ix) {
        double acc = 0.0;
        for (int ky = 0; ky < d.k; ++ky) {
          const int ty = iy + d.pad - ky;
          if (ty < 0 || ty % d.stride != 0) continue;
          const int oy = ty / d.stride;
          if (oy >= d.oh) continue;
          for (int kx = 0; kx < d.k; ++kx) {
            const int tx = ix + d.pad - kx;
            if (tx < 0 || tx % d.stride != 0) continue;
            const int ox = tx / d.stride;
            if (ox >= d.ow) continue;
            acc += (double)grad_out[((int64_t)(nn * ch + c) * d.oh + oy) * d.ow + ox] *
                   weight[(ky * d.k + kx) * ch + c];
          }
        }
        grad_in[((int64_t)(nn * ch + c) * d.h + iy) * d.w + ix] +=
            static_cast<float>(acc);
      }
    }
  }
}

void dwconv2d_backward_weight(const ConvDims& d, const float* grad_out,
                              const float* in, float* grad_weight) {
  const int ch = d.c_in;
#pragma omp parallel for
  for (int c = 0; c < ch; ++c) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        double acc = 0.0;
        for (int nn = 0; nn < d.n; ++nn) {
          for (int oy = 0; oy < d.oh; ++oy) {
            const int iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            for (int ox = 0; ox < d.ow; ++ox) {
              const int ix = ox * d.stride - d.pad + kx;
              if (ix < 0 || ix >= d.w) continue;
              acc += (double)grad_out[((int64_t)(nn * ch + c) * d.oh + oy) * d.ow + ox] *
                     in[((int64_t)(nn * ch + c) * d.h + iy) * d.w + ix];
            }
          }
        }
        grad_weight[(ky * d.k + kx) * ch + c] += static_cast<float>(acc);
      }
    }
  }
}

void relu_forward(const float* in, float* out, int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void relu_backward(const float* in, const float* grad_out, float* grad_in,
                   int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i)
    if (in[i] > 0.0f) grad_in[i] += grad_out[i];
}

void channel_mask_forward(const float* in, const float* mask, float* out,
                          int n, int c, int hw) {
#pragma omp parallel for
  for (int nc = 0; nc < n * c; ++nc) {
    const float m = mask[nc % c];
    const int64_t base = (int64_t)nc * hw;
    for (int i = 0; i < hw; ++i) out[base + i] = in[base + i] * m;
  }
}

void channel_mask_backward_input(const float* grad_out, const float* mask,
                                 float* grad_in, int n, int c, int hw) {
#pragma omp parallel for
  for (int nc = 0; nc < n * c; ++nc) {
    const float m = mask[nc % c];
    const int64_t base = (int64_t)nc * hw;
    for (int i = 0; i < hw; ++i) grad_in[base + i] += grad_out[base + i] * m;
  }
}

void channel_mask_backward_mask(const float* grad_out, const float* in,
                                float* grad_mask, int n, int c, int hw) {
#pragma omp parallel for
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int nn = 0; nn < n; ++nn) {
      const int64_t base = (int64_t)(nn * c + ch) * hw;
      for (int i = 0; i < hw; ++i) acc += (double)grad_out[base + i] * in[base + i];
    }
    grad_mask[ch] += static_cast<float>(acc);
  }
}

void add_forward(const float* a, const float* b, float* out, int64_t n) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

}  // namespace aprune::kernels
