#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "aprune/arch.hpp"
#include "aprune/errors.hpp"
#include "aprune/indicators.hpp"
#include "aprune/regularizers.hpp"
#include "test_util.hpp"

using namespace aprune;

namespace {

// Saturating magnitude: at alpha = +/-40 the positive side rounds to exactly
// 1.0 in double already at T=1; the negative side leaves a ~4e-18 residue
// until the temperature drops. kColdT is the end-of-schedule temperature
// (T0/50), where exp(-40/T) underflows and both sides are exactly 0/1.
constexpr float kSat = 40.0f;
constexpr double kColdT = 0.02;

IndicatorSet make_set(const std::vector<std::vector<float>>& alphas,
                      double temperature = 1.0) {
  std::vector<IndicatorSite> sites;
  for (size_t i = 0; i < alphas.size(); ++i)
    sites.push_back({"site" + std::to_string(i), (int)alphas[i].size(), {}});
  IndicatorSet set(sites, 1);
  for (size_t i = 0; i < alphas.size(); ++i)
    set.alpha((int)i).tensor.data() = alphas[i];
  set.set_temperature(temperature);
  return set;
}

// Two gated 3x3 convs on an 8x8 map: the enumeration workbench. The stem
// input (3 channels) is not prunable.
ArchitectureSpec two_layer_spec(int w0 = 4, int w1 = 4) {
  ArchitectureSpec spec;
  spec.family = "plain";
  spec.num_classes = 1;
  spec.input_c = 3;
  spec.input_h = spec.input_w = 8;
  spec.layers.push_back(
      {"conv1", LayerKind::kConv, 3, 3, w0, 1, 8, 8, -1, 0});
  spec.layers.push_back(
      {"conv2", LayerKind::kConv, 3, w0, w1, 1, 8, 8, 0, 1});
  spec.sites.push_back({"conv1", w0, {0}});
  spec.sites.push_back({"conv2", w1, {1}});
  return spec;
}

// One 3x3 conv 16->16 on a 32x32 map, both ends gated.
ArchitectureSpec single_conv_spec() {
  ArchitectureSpec spec;
  spec.family = "plain";
  spec.num_classes = 1;
  spec.input_c = 16;
  spec.input_h = spec.input_w = 32;
  spec.layers.push_back(
      {"conv", LayerKind::kConv, 3, 16, 16, 1, 32, 32, 0, 1});
  spec.sites.push_back({"in", 16, {}});
  spec.sites.push_back({"out", 16, {0}});
  return spec;
}

// Central differences of a double-valued function of one site's alpha
// vector, using the actually-stored float abscissae so the only error left
// is truncation.
template <typename F>
std::vector<double> fd_alpha(IndicatorSet& set, int site, F&& value,
                             double h = 1e-3) {
  auto& a = set.alpha(site).tensor.data();
  std::vector<double> g(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    const float keep = a[i];
    a[i] = (float)(keep + h);
    const double xp = a[i], fp = value();
    a[i] = (float)(keep - h);
    const double xm = a[i], fm = value();
    a[i] = keep;
    g[i] = (fp - fm) / (xp - xm);
  }
  return g;
}

}  // namespace

TEST_CASE("lasso hand values") {
  // H(1)+H(-1) = 1 exactly by sigmoid symmetry
  auto set = make_set({{1.0f, -1.0f}});
  CHECK(reg::lasso_value(set) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(reg::lasso(set).item() == doctest::Approx(1.0).epsilon(1e-6));

  // all alpha = 0 -> half the channel count
  auto half = make_set({{0, 0, 0, 0}, {0, 0}});
  CHECK(reg::lasso_value(half) == 3.0);

  // saturated on -> the channel count itself
  auto on = make_set({std::vector<float>(6, kSat)});
  CHECK(reg::lasso_value(on) == 6.0);
  CHECK(reg::lasso(on).item() == 6.0f);
}

TEST_CASE("cost expectation hand values on the single conv") {
  auto spec = single_conv_spec();

  // all indicators at 0.5 on both ends: a quarter of the full cost
  auto half = make_set({std::vector<float>(16, 0.0f),
                        std::vector<float>(16, 0.0f)});
  CHECK(reg::flops_expectation_value(half, spec) == 589824.0);
  CHECK(reg::flops_expectation(half, spec).item() == 589824.0f);

  // fully on: the exact discrete count; fully off: zero
  auto on = make_set({std::vector<float>(16, kSat),
                      std::vector<float>(16, kSat)},
                     kColdT);
  CHECK(reg::flops_expectation_value(on, spec) == 2359296.0);
  CHECK(reg::flops_expectation_value(on, spec) ==
        (double)discrete_flops(spec).total);
  auto off = make_set({std::vector<float>(16, -kSat),
                       std::vector<float>(16, -kSat)},
                      kColdT);
  CHECK(reg::flops_expectation_value(off, spec) == 0.0);

  // site count mismatch is rejected
  auto wrong = make_set({std::vector<float>(16, 0.0f)});
  CHECK_THROWS_AS(reg::flops_expectation(wrong, spec), ShapeError);
}

TEST_CASE("cost expectation equals the discrete counter on every mask") {
  auto spec = two_layer_spec();
  std::vector<std::vector<float>> alphas = {{0, 0, 0, 0}, {0, 0, 0, 0}};
  auto set = make_set(alphas, kColdT);

  for (int mask = 0; mask < 256; ++mask) {
    std::vector<std::vector<uint8_t>> keep = {{0, 0, 0, 0}, {0, 0, 0, 0}};
    for (int bit = 0; bit < 8; ++bit) {
      const bool on = (mask >> bit) & 1;
      keep[bit / 4][bit % 4] = on ? 1 : 0;
      set.alpha(bit / 4).tensor.data()[bit % 4] = on ? kSat : -kSat;
    }
    const long long want = discrete_flops(prune_spec(spec, keep)).total;
    CHECK(reg::flops_expectation_value(set, spec) == (double)want);
    CHECK(reg::flops_expectation(set, spec).item() == (float)want);
  }
}

TEST_CASE("cost penalty branches and dead zone") {
  const double F = 1e6, eps = 0.05;

  // upper branch at E = 2F
  CHECK(reg::flops_regularizer_value(2e6, F, eps) ==
        doctest::Approx(14.508657738524219).epsilon(1e-9));
  // lower branch at E = 0.5F
  CHECK(reg::flops_regularizer_value(5e5, F, eps) ==
        doctest::Approx(-13.122363377404328).epsilon(1e-9));
  // the dead zone [(1-eps)F, F] is exactly zero, closed at both edges
  CHECK(reg::flops_regularizer_value(1e6, F, eps) == 0.0);
  CHECK(reg::flops_regularizer_value(0.95e6, F, eps) == 0.0);
  CHECK(reg::flops_regularizer_value(0.97e6, F, eps) == 0.0);
  CHECK(reg::flops_regularizer_value(0.9499e6, F, eps) != 0.0);
  CHECK(reg::flops_regularizer_value(1.0001e6, F, eps) != 0.0);

  CHECK_THROWS_AS(reg::flops_regularizer_value(0.0, F, eps), ConfigError);
  CHECK_THROWS_AS(reg::flops_regularizer_value(1e5, 0.0, eps), ConfigError);

  // graph versions agree with the twins
  Tensor e_hi = Tensor::full({1}, 2e6f);
  CHECK(reg::flops_regularizer(e_hi, F, eps).item() ==
        doctest::Approx(14.5086577).epsilon(1e-6));
  Tensor e_lo = Tensor::full({1}, 5e5f);
  CHECK(reg::flops_regularizer(e_lo, F, eps).item() ==
        doctest::Approx(-13.1223634).epsilon(1e-6));
  Tensor e_in = Tensor::full({1}, 0.97e6f);
  CHECK(reg::flops_regularizer(e_in, F, eps).item() == 0.0f);
}

TEST_CASE("cost penalty gradient flows only outside the dead zone") {
  auto spec = single_conv_spec();
  const double eps = 0.05;

  auto run = [&](float alpha_fill, double target) {
    auto set = make_set({std::vector<float>(16, alpha_fill),
                         std::vector<float>(16, alpha_fill)});
    Tensor e = reg::flops_expectation(set, spec);
    Tensor r = reg::flops_regularizer(e, target, eps);
    if (r.node()->parents.empty()) return 0.0;  // dead-zone constant
    backward(r);
    double mag = 0.0;
    for (float g : set.alpha(0).tensor.grad()) mag += std::fabs(g);
    return mag;
  };

  // E = 589824 at alpha=0; push the target far below / above / around it
  CHECK(run(0.0f, 1e5) > 0.0);               // E above target: log branch
  CHECK(run(0.0f, 4e6) > 0.0);               // E below dead zone: -log branch
  CHECK(run(0.0f, 589824.0 / 0.99) == 0.0);  // inside the dead zone
}

TEST_CASE("symmetry hand values") {
  // relaxed sums 3 and 5 -> gap 2
  std::vector<float> a(8, -kSat), b(8, -kSat);
  std::fill_n(a.begin(), 3, kSat);
  std::fill_n(b.begin(), 5, kSat);
  auto set = make_set({a, b});
  std::vector<ResidualPair> one = {{0, 1}};
  CHECK(reg::symmetry_value(set, one) == 2.0);
  CHECK(reg::symmetry(set, one).item() == 2.0f);

  // second pair with gap 0.5 (sums 1.0 and 0.5): additive total 2.5
  auto set2 = make_set({a, b, {kSat}, {0.0f}});
  std::vector<ResidualPair> two = {{0, 1}, {2, 3}};
  CHECK(reg::symmetry_value(set2, two) == 2.5);
  CHECK(reg::symmetry(set2, two).item() == 2.5f);

  // identical alpha vectors on both ends -> exactly zero
  auto mirror = make_set({{0.3f, -1.2f, 0.9f}, {0.3f, -1.2f, 0.9f}});
  CHECK(reg::symmetry_value(mirror, one) == 0.0);
  CHECK(reg::symmetry(mirror, one).item() == 0.0f);
}

TEST_CASE("symmetry ignores channel order within a site") {
  std::vector<float> a = {0.4f, -1.1f, 2.0f, 0.0f, -0.6f};
  std::vector<float> p = a;
  std::rotate(p.begin(), p.begin() + 2, p.end());
  std::vector<ResidualPair> pair = {{0, 1}};
  auto lhs = make_set({a, std::vector<float>(5, 0.2f)});
  auto rhs = make_set({p, std::vector<float>(5, 0.2f)});
  CHECK(reg::symmetry_value(lhs, pair) ==
        doctest::Approx(reg::symmetry_value(rhs, pair)).epsilon(1e-12));
}

TEST_CASE("regularizer gradients match finite differences") {
  auto spec = two_layer_spec();
  std::vector<ResidualPair> pairs = {{0, 1}};
  // moderate alphas, away from the symmetry equality point
  auto set = make_set({{0.8f, -0.4f, 1.5f, 0.2f}, {-1.0f, 0.6f, 0.1f, 2.2f}},
                      0.7);

  struct Term {
    const char* name;
    std::function<Tensor()> graph;
    std::function<double()> value;
  };
  const std::vector<Term> terms = {
      {"lasso", [&] { return reg::lasso(set); },
       [&] { return reg::lasso_value(set); }},
      {"flops", [&] { return reg::flops_expectation(set, spec); },
       [&] { return reg::flops_expectation_value(set, spec); }},
      {"symmetry", [&] { return reg::symmetry(set, pairs); },
       [&] { return reg::symmetry_value(set, pairs); }},
  };

  for (const auto& term : terms) {
    CAPTURE(term.name);
    Tensor out = term.graph();
    backward(out);
    for (int s = 0; s < set.num_sites(); ++s) {
      auto analytic = set.alpha(s).tensor.grad();
      auto numeric = fd_alpha(set, s, term.value);
      REQUIRE(analytic.size() == numeric.size());
      for (size_t i = 0; i < analytic.size(); ++i) {
        const double tol =
            1e-4 * std::max(1.0, std::fabs(numeric[i]));
        CHECK(std::fabs((double)analytic[i] - numeric[i]) <= tol);
      }
      set.alpha(s).tensor.zero_grad();
    }
  }
}

TEST_CASE("total penalty assembles the weighted terms") {
  auto spec = two_layer_spec();
  spec.residual_pairs = {{0, 1}};
  auto set = make_set({{0.8f, -0.4f, 1.5f, 0.2f}, {-1.0f, 0.6f, 0.1f, 2.2f}},
                      0.7);

  RegularizerConfig cfg;
  cfg.lambda_flops = 2.0;
  cfg.target_flops = 1000.0;  // far below E: the log branch is active
  cfg.lambda_sym = 0.01;
  cfg.lambda_lasso = 0.5;

  const double e = reg::flops_expectation_value(set, spec);
  const double want = 2.0 * reg::flops_regularizer_value(e, 1000.0, 0.05) +
                      0.01 * reg::symmetry_value(set, spec.residual_pairs) +
                      0.5 * reg::lasso_value(set);
  Tensor total = reg::total_penalty(set, spec, cfg);
  CHECK(total.item() == doctest::Approx(want).epsilon(1e-5));

  // gradient reaches alpha through the assembled objective
  backward(total);
  double mag = 0.0;
  for (float g : set.alpha(0).tensor.grad()) mag += std::fabs(g);
  CHECK(mag > 0.0);

  // with every weight zero the penalty is a flat zero
  RegularizerConfig off;
  off.lambda_flops = 0.0;
  CHECK(reg::total_penalty(set, spec, off).item() == 0.0f);
}

TEST_CASE("config validation") {
  RegularizerConfig cfg;
  cfg.target_flops = 500.0;
  cfg.validate(1000);

  RegularizerConfig bad_eps = cfg;
  bad_eps.epsilon = 0.0;
  CHECK_THROWS_AS(bad_eps.validate(1000), ConfigError);
  bad_eps.epsilon = 1.0;
  CHECK_THROWS_AS(bad_eps.validate(1000), ConfigError);

  RegularizerConfig big = cfg;
  big.target_flops = 2000.0;
  CHECK_THROWS_AS(big.validate(1000), ConfigError);

  RegularizerConfig missing = cfg;
  missing.target_flops = 0.0;
  CHECK_THROWS_AS(missing.validate(1000), ConfigError);
  missing.lambda_flops = 0.0;  // penalty off: no target needed
  missing.validate(1000);

  RegularizerConfig neg = cfg;
  neg.lambda_sym = -0.5;
  CHECK_THROWS_AS(neg.validate(1000), ConfigError);
}
