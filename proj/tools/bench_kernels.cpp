// OpenMP kernels vs the serial reference, on convolution shapes the search
// actually runs (small supernet stages) plus one larger shape where
// threading has room to pay off. Throughput is reported as
// multiply-accumulates per second.
//
//   build/tools/bench_kernels [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "aprune/kernels.hpp"

namespace {

using aprune::kernels::ConvDims;

struct ConvCase {
  ConvDims d;
  std::vector<float> in, weight, out, grad_out, grad_in, grad_weight;
};

ConvCase make_case(int n, int c_in, int hw, int k, int c_out, int stride) {
  ConvCase c;
  c.d.n = n;
  c.d.c_in = c_in;
  c.d.h = hw;
  c.d.w = hw;
  c.d.k = k;
  c.d.c_out = c_out;
  c.d.stride = stride;
  c.d.pad = k / 2;
  c.d.oh = aprune::kernels::conv_out_size(hw, k, stride, c.d.pad);
  c.d.ow = c.d.oh;

  std::mt19937 rng(42);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  auto fill = [&](std::vector<float>& v, size_t size) {
    v.resize(size);
    for (auto& x : v) x = dist(rng);
  };
  fill(c.in, (size_t)n * c_in * hw * hw);
  fill(c.weight, (size_t)k * k * c_in * c_out);
  fill(c.grad_out, (size_t)n * c_out * c.d.oh * c.d.ow);
  c.out.resize(c.grad_out.size());
  c.grad_in.resize(c.in.size());
  c.grad_weight.resize(c.weight.size());
  return c;
}

int64_t conv_macs(const ConvDims& d) {
  return (int64_t)d.n * d.oh * d.ow * d.k * d.k * d.c_in * d.c_out;
}

// shape args: n, c_in, hw, k, c_out, stride
void shape_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 8, 16, 3, 8, 1});     // small supernet stage
  b->Args({16, 16, 8, 3, 16, 1});    // mid stage after downsampling
  b->Args({8, 32, 16, 3, 32, 1});    // wide stage
  b->Args({4, 64, 32, 3, 64, 1});    // larger-than-desk shape
  b->ArgNames({"n", "cin", "hw", "k", "cout", "s"});
}

template <typename F>
void run_conv_bench(benchmark::State& state, F kernel,
                    std::vector<float> ConvCase::*out_member) {
  ConvCase c = make_case((int)state.range(0), (int)state.range(1),
                         (int)state.range(2), (int)state.range(3),
                         (int)state.range(4), (int)state.range(5));
  for (auto _ : state) {
    kernel(c);
    benchmark::DoNotOptimize((c.*out_member).data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * conv_macs(c.d));
}

void BM_conv_forward_omp(benchmark::State& state) {
  run_conv_bench(
      state,
      [](ConvCase& c) {
        aprune::kernels::conv2d_forward(c.d, c.in.data(), c.weight.data(),
                                        c.out.data());
      },
      &ConvCase::out);
}

void BM_conv_forward_serial(benchmark::State& state) {
  run_conv_bench(
      state,
      [](ConvCase& c) {
        aprune::kernels::serial::conv2d_forward(c.d, c.in.data(),
                                                c.weight.data(), c.out.data());
      },
      &ConvCase::out);
}

void BM_conv_backward_input_omp(benchmark::State& state) {
  run_conv_bench(
      state,
      [](ConvCase& c) {
        std::fill(c.grad_in.begin(), c.grad_in.end(), 0.0f);
        aprune::kernels::conv2d_backward_input(c.d, c.grad_out.data(),
                                               c.weight.data(),
                                               c.grad_in.data());
      },
      &ConvCase::grad_in);
}

void BM_conv_backward_input_serial(benchmark::State& state) {
  run_conv_bench(
      state,
      [](ConvCase& c) {
        std::fill(c.grad_in.begin(), c.grad_in.end(), 0.0f);
        aprune::kernels::serial::conv2d_backward_input(c.d, c.grad_out.data(),
                                                       c.weight.data(),
                                                       c.grad_in.data());
      },
      &ConvCase::grad_in);
}

void BM_conv_backward_weight_omp(benchmark::State& state) {
  run_conv_bench(
      state,
      [](ConvCase& c) {
        std::fill(c.grad_weight.begin(), c.grad_weight.end(), 0.0f);
        aprune::kernels::conv2d_backward_weight(c.d, c.grad_out.data(),
                                                c.in.data(),
                                                c.grad_weight.data());
      },
      &ConvCase::grad_weight);
}

void BM_conv_backward_weight_serial(benchmark::State& state) {
  run_conv_bench(
      state,
      [](ConvCase& c) {
        std::fill(c.grad_weight.begin(), c.grad_weight.end(), 0.0f);
        aprune::kernels::serial::conv2d_backward_weight(c.d, c.grad_out.data(),
                                                        c.in.data(),
                                                        c.grad_weight.data());
      },
      &ConvCase::grad_weight);
}

void BM_dwconv_forward_omp(benchmark::State& state) {
  ConvCase c = make_case((int)state.range(0), (int)state.range(1),
                         (int)state.range(2), (int)state.range(3),
                         (int)state.range(1), (int)state.range(5));
  c.weight.assign((size_t)c.d.k * c.d.k * c.d.c_in, 0.5f);
  for (auto _ : state) {
    aprune::kernels::dwconv2d_forward(c.d, c.in.data(), c.weight.data(),
                                      c.out.data());
    benchmark::DoNotOptimize(c.out.data());
  }
  state.SetItemsProcessed(state.iterations() * (int64_t)c.d.n * c.d.oh *
                          c.d.ow * c.d.k * c.d.k * c.d.c_in);
}

void BM_dwconv_forward_serial(benchmark::State& state) {
  ConvCase c = make_case((int)state.range(0), (int)state.range(1),
                         (int)state.range(2), (int)state.range(3),
                         (int)state.range(1), (int)state.range(5));
  c.weight.assign((size_t)c.d.k * c.d.k * c.d.c_in, 0.5f);
  for (auto _ : state) {
    aprune::kernels::serial::dwconv2d_forward(c.d, c.in.data(),
                                              c.weight.data(), c.out.data());
    benchmark::DoNotOptimize(c.out.data());
  }
  state.SetItemsProcessed(state.iterations() * (int64_t)c.d.n * c.d.oh *
                          c.d.ow * c.d.k * c.d.k * c.d.c_in);
}

BENCHMARK(BM_conv_forward_omp)->Apply(shape_args)->UseRealTime();
BENCHMARK(BM_conv_forward_serial)->Apply(shape_args)->UseRealTime();
BENCHMARK(BM_conv_backward_input_omp)->Apply(shape_args)->UseRealTime();
BENCHMARK(BM_conv_backward_input_serial)->Apply(shape_args)->UseRealTime();
BENCHMARK(BM_conv_backward_weight_omp)->Apply(shape_args)->UseRealTime();
BENCHMARK(BM_conv_backward_weight_serial)->Apply(shape_args)->UseRealTime();
BENCHMARK(BM_dwconv_forward_omp)->Apply(shape_args)->UseRealTime();
BENCHMARK(BM_dwconv_forward_serial)->Apply(shape_args)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
