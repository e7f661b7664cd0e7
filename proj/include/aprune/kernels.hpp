#ifndef APRUNE_KERNELS_HPP_
#define APRUNE_KERNELS_HPP_

#include <cstdint>

// Raw dense kernels behind the graph ops. Layouts: activations NCHW,
// conv weights (k, k, c_in, c_out), depthwise weights (k, k, c).
//
// The default implementations parallelize with OpenMP over disjoint output
// ranges; every output element is owned by exactly one iteration and inner
// accumulation order is fixed, so results are identical for any thread
// count. aprune::kernels::serial holds the plain-loop reference used by the
// equivalence tests and the benchmark.

namespace aprune::kernels {

struct ConvDims {
  int n, c_in, h, w;
  int k, c_out, stride, pad;
  int oh, ow;
};

int conv_out_size(int in, int k, int stride, int pad);

void conv2d_forward(const ConvDims& d, const float* in, const float* weight,
                    float* out);
// Accumulate into grad_in / grad_weight (callers pre-zero).
void conv2d_backward_input(const ConvDims& d, const float* grad_out,
                           const float* weight, float* grad_in);
void conv2d_backward_weight(const ConvDims& d, const float* grad_out,
                            const float* in, float* grad_weight);

// Depthwise: c_out == c_in == d.c_in, weight (k, k, c).
void dwconv2d_forward(const ConvDims& d, const float* in, const float* weight,
                      float* out);
void dwconv2d_backward_input(const ConvDims& d, const float* grad_out,
                             const float* weight, float* grad_in);
void dwconv2d_backward_weight(const ConvDims& d, const float* grad_out,
                              const float* in, float* grad_weight);

void relu_forward(const float* in, float* out, int64_t n);
void relu_backward(const float* in, const float* grad_out, float* grad_in,
                   int64_t n);

// y[n,c,h,w] = x[n,c,h,w] * m[c]
void channel_mask_forward(const float* in, const float* mask, float* out,
                          int n, int c, int hw);
void channel_mask_backward_input(const float* grad_out, const float* mask,
                                 float* grad_in, int n, int c, int hw);
void channel_mask_backward_mask(const float* grad_out, const float* in,
                                float* grad_mask, int n, int c, int hw);

void add_forward(const float* a, const float* b, float* out, int64_t n);

namespace serial {
void conv2d_forward(const ConvDims& d, const float* in, const float* weight,
                    float* out);
void conv2d_backward_input(const ConvDims& d, const float* grad_out,
                           const float* weight, float* grad_in);
void conv2d_backward_weight(const ConvDims& d, const float* grad_out,
                            const float* in, float* grad_weight);
void dwconv2d_forward(const ConvDims& d, const float* in, const float* weight,
                      float* out);
}  // namespace serial

}  // namespace aprune::kernels

#endif  // APRUNE_KERNELS_HPP_
