#include <gtest/gtest.h>

#include <cmath>

#include "evpr/repr/grids.hpp"
#include "evpr/repr/kernel.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"

using namespace evpr;
using events::Event;
using events::EventBin;
using repr::KernelFunction;
using repr::PolarityMode;

TEST(Kernel, TrilinearValues) {
  EXPECT_DOUBLE_EQ(repr::trilinear_kernel(0.0), 1.0);
  EXPECT_DOUBLE_EQ(repr::trilinear_kernel(0.5), 0.5);
  EXPECT_DOUBLE_EQ(repr::trilinear_kernel(-0.5), 0.5);
  EXPECT_DOUBLE_EQ(repr::trilinear_kernel(1.5), 0.0);
  EXPECT_DOUBLE_EQ(repr::trilinear_kernel(-1.5), 0.0);
  EXPECT_DOUBLE_EQ(repr::trilinear_kernel(1.0), 0.0);
}

TEST(Kernel, MlpZeroWeightsReducesToFinalBias) {
  repr::MlpKernel kernel(3, repr::MlpActivation::Tanh, /*prefit=*/false);
  auto params = kernel.params();
  for (auto& [name, p] : params) p->value.fill(0.0);
  // hand-computed: h1 = tanh(b1), h2 = tanh(W2 h1 + b2), out = w3 . h2 + b3;
  // with all weights zero the output is exactly the final bias.
  std::map<std::string, ag::Var> by_name(params.begin(), params.end());
  by_name["kernel.b1"]->value.fill(0.7);
  by_name["kernel.b2"]->value.fill(-0.4);
  by_name["kernel.b3"]->value.fill(1.25);
  for (double tau : {-1.0, 0.0, 0.3, 2.0}) EXPECT_DOUBLE_EQ(kernel.value(tau), 1.25);
}

TEST(Kernel, MlpForwardMatchesIndependentEvaluation) {
  repr::MlpKernel kernel(5);
  const auto w = oracle::MlpWeights::from(kernel);
  for (double tau = -1.5; tau <= 1.5; tau += 0.111)
    EXPECT_NEAR(kernel.value(tau), oracle::mlp_forward(w, tau), 1e-13);
}

TEST(Kernel, PrefitApproximatesTrilinear) {
  repr::MlpKernel kernel(7);
  double max_err = 0.0;
  for (double tau = -1.5; tau <= 1.5; tau += 0.01)
    max_err = std::max(max_err, std::fabs(kernel.value(tau) - repr::trilinear_kernel(tau)));
  EXPECT_LT(max_err, 0.05);
}

TEST(Kernel, KernelValueRespectsMlpWindow) {
  repr::MlpKernel mlp(11);
  const auto kernel = KernelFunction::learned(mlp, 1.5);
  EXPECT_DOUBLE_EQ(repr::kernel_value(kernel, 1.6), 0.0);
  EXPECT_DOUBLE_EQ(repr::kernel_value(kernel, -2.0), 0.0);
  EXPECT_NE(repr::kernel_value(kernel, 0.0), 0.0);
}

TEST(Kernel, DerivativeTauMatchesFiniteDifference) {
  repr::MlpKernel kernel(13);
  for (double tau : {-1.2, -0.4, 0.0, 0.33, 1.4}) {
    const double h = 1e-5;
    const double fd = (kernel.value(tau + h) - kernel.value(tau - h)) / (2 * h);
    EXPECT_NEAR(kernel.derivative_tau(tau), fd, 1e-6 + 1e-3 * std::fabs(fd));
  }
}

TEST(Kernel, ParamGradMatchesFiniteDifference) {
  repr::MlpKernel kernel(17, repr::MlpActivation::Tanh, /*prefit=*/false);
  auto params = kernel.params();
  auto build = [&kernel] {
    // scalar probe: a weighted sum of kernel values, wrapped as a custom node
    // (value() itself is not a graph op)
    double v = kernel.value(-0.8) + 2.0 * kernel.value(0.1) - 0.5 * kernel.value(1.2);
    auto node = ag::constant(ag::Tensor::scalar(v));
    node->requires_grad = true;
    node->backprop = [&kernel](ag::Node& n) {
      kernel.accumulate_param_grads(-0.8, n.grad[0]);
      kernel.accumulate_param_grads(0.1, 2.0 * n.grad[0]);
      kernel.accumulate_param_grads(1.2, -0.5 * n.grad[0]);
    };
    for (auto& [name, p] : kernel.params()) node->inputs.push_back(p);
    return node;
  };
  const auto report = fdcheck::check_params(build, params, 1e-4, 16);
  EXPECT_LT(report.max_rel_err, 1e-3) << report.worst;
}

// ---------------------------------------------------------------------------
// Voxel grids
// ---------------------------------------------------------------------------

TEST(Est, EmptyBinGivesZeroTensor) {
  const EventBin bin({}, {5, 6}, "empty");
  const auto grid = repr::build_est(bin, 4, KernelFunction::trilinear(), PolarityMode::Split);
  EXPECT_EQ(grid.values.shape(), (ag::Shape{8, 6, 5}));
  for (std::size_t i = 0; i < grid.values.size(); ++i) EXPECT_DOUBLE_EQ(grid.values[i], 0.0);

  const auto signed_grid =
      repr::build_est(bin, 4, KernelFunction::trilinear(), PolarityMode::SignedSingle);
  EXPECT_EQ(signed_grid.values.shape(), (ag::Shape{4, 6, 5}));
}

TEST(Est, EventOnSampleGetsFullWeight) {
  // C=3 over [0, 1000]: samples at 0, 500, 1000. An ON event at exactly 500
  // puts weight 1 on channel 1 at its pixel, nothing anywhere else.
  std::vector<Event> ev{Event{0, 0, 0, 1}, Event{2, 3, 500, 1}, Event{0, 0, 1000, 1}};
  const EventBin bin(ev, {8, 8}, "peak");
  const auto grid = repr::build_est(bin, 3, KernelFunction::trilinear(), PolarityMode::SignedSingle);
  EXPECT_DOUBLE_EQ(grid.values.at(1, 3, 2), 1.0);
  // anchors contribute only at (0,0)
  for (int n = 0; n < 3; ++n)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (!(x == 0 && y == 0) && !(n == 1 && x == 2 && y == 3))
          EXPECT_DOUBLE_EQ(grid.values.at(n, y, x), 0.0) << n << " " << y << " " << x;
}

TEST(Est, MidpointEventSplitsHalfAndHalf) {
  // Event at t0 + 0.5*dt with C=3: 0.5 on channel 0 and 0.5 on channel 1.
  std::vector<Event> ev{Event{0, 0, 0, 1}, Event{4, 2, 250, 1}, Event{0, 0, 1000, 1}};
  const EventBin bin(ev, {8, 8}, "mid");
  const auto grid = repr::build_est(bin, 3, KernelFunction::trilinear(), PolarityMode::SignedSingle);
  EXPECT_DOUBLE_EQ(grid.values.at(0, 2, 4), 0.5);
  EXPECT_DOUBLE_EQ(grid.values.at(1, 2, 4), 0.5);
  EXPECT_DOUBLE_EQ(grid.values.at(2, 2, 4), 0.0);
}

TEST(Est, SplitModeRoutesPolarityBanks) {
  std::vector<Event> ev{Event{1, 1, 0, 1}, Event{2, 2, 500, -1}, Event{3, 3, 1000, 1}};
  const EventBin bin(ev, {8, 8}, "banks");
  const auto grid = repr::build_est(bin, 2, KernelFunction::trilinear(), PolarityMode::Split);
  ASSERT_EQ(grid.values.dim(0), 4);  // 2 ON channels then 2 OFF channels
  EXPECT_DOUBLE_EQ(grid.values.at(0, 1, 1), 1.0);   // ON bank, channel 0
  EXPECT_DOUBLE_EQ(grid.values.at(1, 3, 3), 1.0);   // ON bank, channel 1
  EXPECT_DOUBLE_EQ(grid.values.at(2, 2, 2), 0.5);   // OFF bank, channel 0 (midpoint)
  EXPECT_DOUBLE_EQ(grid.values.at(3, 2, 2), 0.5);   // OFF bank, channel 1
  EXPECT_DOUBLE_EQ(grid.values.at(2, 1, 1), 0.0);
}

TEST(Est, DegenerateSingleTimestampPutsMassOnChannelZero) {
  std::vector<Event> ev{Event{1, 1, 400, 1}, Event{2, 2, 400, -1}};
  const EventBin bin(ev, {4, 4}, "degenerate");
  const auto grid = repr::build_est(bin, 3, KernelFunction::trilinear(), PolarityMode::SignedSingle);
  EXPECT_DOUBLE_EQ(grid.values.at(0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(grid.values.at(0, 2, 2), -1.0);
  for (int n = 1; n < 3; ++n)
    for (std::size_t i = 0; i < 16; ++i)
      EXPECT_DOUBLE_EQ(grid.values[static_cast<std::size_t>(n) * 16 + i], 0.0);
}

TEST(Est, RejectsZeroChannels) {
  const EventBin bin({}, {4, 4}, "x");
  EXPECT_THROW(repr::build_est(bin, 0, KernelFunction::trilinear()), ParamError);
  EXPECT_THROW(repr::build_evg(bin, 0), ParamError);
}

TEST(Est, RandomBinsMatchScalarAccumulationOracle) {
  rng::Engine engine(21);
  repr::MlpKernel mlp(22);
  const auto mlp_weights = oracle::MlpWeights::from(mlp);
  for (int trial = 0; trial < 12; ++trial) {
    const int c = 1 + static_cast<int>(engine.uniform_int(0, 3));
    const auto bin = oracle::random_bin(engine, 12, 9, 500);
    const bool use_mlp = trial % 2 == 1;
    const auto mode = trial % 4 < 2 ? PolarityMode::Split : PolarityMode::SignedSingle;

    const auto kernel =
        use_mlp ? KernelFunction::learned(mlp, 1.5) : KernelFunction::trilinear();
    const auto grid = repr::build_est(bin, c, kernel, mode);

    oracle::EstSpec spec;
    spec.time_bins = c;
    spec.use_mlp = use_mlp;
    spec.mlp = &mlp_weights;
    spec.mode = mode;
    const auto reference = oracle::est_reference(bin, spec);
    ASSERT_EQ(grid.values.shape(), reference.shape());
    EXPECT_LE(ag::max_abs_diff(grid.values, reference), 1e-12) << "trial " << trial;
  }
}

TEST(Est, TrilinearPermutationInvariance) {
  rng::Engine engine(23);
  const auto bin = oracle::random_bin(engine, 10, 10, 400, "perm");
  const auto grid = repr::build_est(bin, 4, KernelFunction::trilinear(), PolarityMode::Split);

  // reverse the events with equal timestamps kept stable (already sorted by t;
  // shuffle within the sorted order by stable re-sort of a permuted copy)
  std::vector<Event> shuffled = bin.events();
  rng::Engine perm(24);
  perm.shuffle(shuffled);
  std::stable_sort(shuffled.begin(), shuffled.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  const EventBin permuted(shuffled, bin.geometry(), "perm2");
  const auto grid2 = repr::build_est(permuted, 4, KernelFunction::trilinear(), PolarityMode::Split);
  EXPECT_LE(ag::max_abs_diff(grid.values, grid2.values), 1e-12);
}

TEST(Est, TimeScalingInvariance) {
  rng::Engine engine(25);
  std::vector<Event> ev;
  for (int i = 0; i < 200; ++i)
    ev.push_back(Event{static_cast<int>(engine.uniform_int(0, 7)),
                       static_cast<int>(engine.uniform_int(0, 7)), 100 * i,
                       engine.uniform01() < 0.5 ? -1 : 1});
  const EventBin bin(ev, {8, 8}, "base");
  std::vector<Event> scaled = ev;
  for (auto& e : scaled) e.t *= 8;
  const EventBin bin8(scaled, {8, 8}, "scaled");
  const auto a = repr::build_est(bin, 4, KernelFunction::trilinear(), PolarityMode::SignedSingle);
  const auto b = repr::build_est(bin8, 4, KernelFunction::trilinear(), PolarityMode::SignedSingle);
  EXPECT_LE(ag::max_abs_diff(a.values, b.values), 1e-12);
}

TEST(Est, SignedSingleTotalMassEqualsPolaritySum) {
  rng::Engine engine(27);
  const auto bin = oracle::random_bin(engine, 10, 8, 600, "mass");
  const auto grid = repr::build_est(bin, 5, KernelFunction::trilinear(), PolarityMode::SignedSingle);
  double total = 0.0;
  for (std::size_t i = 0; i < grid.values.size(); ++i) total += grid.values[i];
  double polarity_sum = 0.0;
  for (const Event& e : bin.events()) polarity_sum += e.p;
  EXPECT_NEAR(total, polarity_sum, 1e-9);
}

TEST(Est, GradientWrtMlpParamsMatchesFiniteDifferences) {
  rng::Engine engine(29);
  repr::MlpKernel mlp(30);
  const auto bin = oracle::random_bin(engine, 6, 6, 60, "grad");
  ag::Var probe = ag::constant(ag::Tensor{ag::Shape{8, 6, 6}});
  for (auto& v : probe->value.vec()) v = engine.normal();
  auto build = [&] {
    return ag::sum_all(ag::mul(repr::build_est_var(bin, 4, mlp, 1.5, PolarityMode::Split), probe));
  };
  const auto report = fdcheck::check_params(build, mlp.params(), 1e-4, 20);
  EXPECT_LT(report.max_rel_err, 1e-3) << report.worst;
}

TEST(Est, VarAndPlainPathsAgreeBitwise) {
  rng::Engine engine(31);
  repr::MlpKernel mlp(32);
  const auto bin = oracle::random_bin(engine, 8, 8, 300, "paths");
  const auto plain = repr::build_est(bin, 3, KernelFunction::learned(mlp, 1.5), PolarityMode::Split);
  const auto var = repr::build_est_var(bin, 3, mlp, 1.5, PolarityMode::Split);
  EXPECT_EQ(ag::max_abs_diff(plain.values, var->value), 0.0);
}

// ---------------------------------------------------------------------------
// Alternate representations
// ---------------------------------------------------------------------------

TEST(AltRepr, EventFrameSignedCancellation) {
  std::vector<Event> ev{Event{3, 3, 10, 1}, Event{3, 3, 20, -1}};
  const EventBin bin(ev, {8, 8}, "cancel");
  const auto ef = repr::build_ef(bin);
  EXPECT_EQ(ef.shape(), (ag::Shape{1, 8, 8}));
  EXPECT_DOUBLE_EQ(ef.at(0, 3, 3), 0.0);
}

TEST(AltRepr, EvgDiscardsPolarity) {
  std::vector<Event> ev{Event{3, 3, 10, 1}, Event{3, 3, 20, -1}};
  const EventBin bin(ev, {8, 8}, "evg");
  const auto evg = repr::build_evg(bin, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < evg.size(); ++i) total += evg[i];
  EXPECT_NEAR(total, 2.0, 1e-12);
}

TEST(AltRepr, EvgEqualsAbsSignedEstForSinglePolarity) {
  rng::Engine engine(33);
  std::vector<Event> ev;
  for (int i = 0; i < 300; ++i)
    ev.push_back(Event{static_cast<int>(engine.uniform_int(0, 9)),
                       static_cast<int>(engine.uniform_int(0, 9)), i * 37, -1});
  const EventBin bin(ev, {10, 10}, "off_only");
  const auto evg = repr::build_evg(bin, 3);
  const auto est = repr::build_est(bin, 3, KernelFunction::trilinear(), PolarityMode::SignedSingle);
  for (std::size_t i = 0; i < evg.size(); ++i)
    EXPECT_DOUBLE_EQ(evg[i], std::fabs(est.values[i]));
}

TEST(AltRepr, FourChannelHistogramMatchesIndependentCount) {
  rng::Engine engine(35);
  const auto bin = oracle::random_bin(engine, 9, 7, 500, "hist");
  const auto img = repr::build_4ch(bin);
  ASSERT_EQ(img.shape(), (ag::Shape{4, 7, 9}));
  std::vector<double> on(63, 0.0), off(63, 0.0);
  for (const Event& e : bin.events()) {
    if (e.p == 1)
      on[static_cast<std::size_t>(e.y * 9 + e.x)] += 1.0;
    else
      off[static_cast<std::size_t>(e.y * 9 + e.x)] += 1.0;
  }
  for (std::size_t i = 0; i < 63; ++i) {
    EXPECT_DOUBLE_EQ(img[i], on[i]);
    EXPECT_DOUBLE_EQ(img[63 + i], off[i]);
  }
}

TEST(AltRepr, FourChannelTimestampsNormalized) {
  std::vector<Event> ev{Event{0, 0, 100, 1}, Event{1, 0, 300, 1}, Event{2, 0, 500, -1}};
  const EventBin bin(ev, {4, 1}, "norm");
  const auto img = repr::build_4ch(bin);
  EXPECT_DOUBLE_EQ(img.at(2, 0, 0), 0.0);  // ON at t_first
  EXPECT_DOUBLE_EQ(img.at(2, 0, 1), 0.5);  // ON at midpoint
  EXPECT_DOUBLE_EQ(img.at(3, 0, 2), 1.0);  // OFF at t_last
  EXPECT_DOUBLE_EQ(img.at(2, 0, 3), 0.0);  // untouched pixel
}
