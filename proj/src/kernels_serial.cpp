#include "aprune/kernels.hpp"

// Plain-loop reference kernels. Kept independent of the OpenMP path so the
// tests can compare the two and the benchmark can measure the gap.

namespace aprune::kernels::serial {

void conv2d_forward(const ConvDims& d, const float* in, const float* weight,
                    float* out) {
  for (int nn = 0; nn < d.n; ++nn) {
    for (int o = 0; o < d.c_out; ++o) {
      for (int oy = 0; oy < d.oh; ++oy) {
        for (int ox = 0; ox < d.ow; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < d.k; ++ky) {
            const int iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            for (int kx = 0; kx < d.k; ++kx) {
              const int ix = ox * d.stride - d.pad + kx;
              if (ix < 0 || ix >= d.w) continue;
              for (int c = 0; c < d.c_in; ++c) {
                acc += (double)in[((int64_t)(nn * d.c_in + c) * d.h + iy) * d.w + ix] *
                       weight[((int64_t)(ky * d.k + kx) * d.c_in + c) * d.c_out + o];
              }
            }
          }
          out[((int64_t)(nn * d.c_out + o) * d.oh + oy) * d.ow + ox] =
              static_cast<float>(acc);
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvDims& d, const float* grad_out,
                           const float* weight, float* grad_in) {
  for (int nn = 0; nn < d.n; ++nn) {
    for (int c = 0; c < d.c_in; ++c) {
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
              for (int o = 0; o < d.c_out; ++o) {
                acc += (double)grad_out[((int64_t)(nn * d.c_out + o) * d.oh + oy) * d.ow + ox] *
                       weight[((int64_t)(ky * d.k + kx) * d.c_in + c) * d.c_out + o];
              }
            }
          }
          grad_in[((int64_t)(nn * d.c_in + c) * d.h + iy) * d.w + ix] +=
              static_cast<float>(acc);
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvDims& d, const float* grad_out,
                            const float* in, float* grad_weight) {
  for (int o = 0; o < d.c_out; ++o) {
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        for (int c = 0; c < d.c_in; ++c) {
          double acc = 0.0;
          for (int nn = 0; nn < d.n; ++nn) {
            for (int oy = 0; oy < d.oh; ++oy) {
              const int iy = oy * d.stride - d.pad + ky;
              if (iy < 0 || iy >= d.h) continue;
              for (int ox = 0; ox < d.ow; ++ox) {
                const int ix = ox * d.stride - d.pad + kx;
                if (ix < 0 || ix >= d.w) continue;
                acc += (double)grad_out[((int64_t)(nn * d.c_out + o) * d.oh + oy) * d.ow + ox] *
                       in[((int64_t)(nn * d.c_in + c) * d.h + iy) * d.w + ix];
              }
            }
          }
          grad_weight[((int64_t)(ky * d.k + kx) * d.c_in + c) * d.c_out + o] +=
              static_cast<float>(acc);
        }
      }
    }
  }
}

void dwconv2d_forward(const ConvDims& d, const float* in, const float* weight,
                      float* out) {
  const int ch = d.c_in;
  for (int nn = 0; nn < d.n; ++nn) {
    for (int c = 0; c < ch; ++c) {
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
}

}  // namespace aprune::kernels::serial
