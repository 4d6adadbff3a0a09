#include <gtest/gtest.h>

#include "evpr/net/backbone.hpp"
#include "support/fd.hpp"

using namespace evpr;
using net::Backbone;
using net::BackboneConfig;
using net::LayerKind;

TEST(Backbone, DeskSmallDeclaredShape) {
  const auto config = BackboneConfig::make("desk-small", 8);
  EXPECT_EQ(config.descriptor_depth, 128);
  EXPECT_EQ(config.declared_height, 4);
  EXPECT_EQ(config.declared_width, 4);
  Backbone backbone(config, 1);
  ag::Tensor input{ag::Shape{8, 64, 64}};
  const auto fm = backbone.extract(input);
  EXPECT_EQ(fm.depth(), 128);
  EXPECT_EQ(fm.height(), config.declared_height);
  EXPECT_EQ(fm.width(), config.declared_width);
}

TEST(Backbone, PaperDeepDeclaresSevenBySeven) {
  const auto config = BackboneConfig::make("paper-deep", 4);
  EXPECT_EQ(config.declared_height, 7);
  EXPECT_EQ(config.declared_width, 7);
  EXPECT_EQ(config.descriptor_depth, 512);
}

TEST(Backbone, PaperDeepForwardShapeAndFiniteness) {
  // Small input keeps this cheap; the stage arithmetic still applies.
  Backbone backbone(BackboneConfig::make("paper-deep", 2), 2);
  rng::Engine engine(3);
  ag::Tensor input{ag::Shape{2, 64, 64}};
  for (auto& v : input.vec()) v = engine.normal();
  const auto fm = backbone.extract(input);
  EXPECT_EQ(fm.depth(), 512);
  EXPECT_EQ(fm.height(), 2);
  EXPECT_EQ(fm.width(), 2);
  EXPECT_TRUE(fm.values.all_finite());
}

TEST(Backbone, UnknownArchitectureRejected) {
  EXPECT_THROW(BackboneConfig::make("resnet-1000", 4), ConfigError);
}

TEST(Backbone, DeterministicOnZeroInput) {
  // Bias-free at init (biases start at zero), so this is the network's raw
  // response to a zero tensor; two calls must agree bitwise.
  Backbone backbone(BackboneConfig::make("desk-small", 8), 7);
  ag::Tensor zero{ag::Shape{8, 64, 64}};
  const auto a = backbone.extract(zero);
  const auto b = backbone.extract(zero);
  EXPECT_EQ(ag::max_abs_diff(a.values, b.values), 0.0);
}

TEST(Backbone, EvalForwardIsPureOnRandomInput) {
  Backbone backbone(BackboneConfig::make("desk-small", 4), 11);
  rng::Engine engine(12);
  ag::Tensor input{ag::Shape{4, 32, 32}};
  for (auto& v : input.vec()) v = engine.normal();
  const auto a = backbone.extract(input);
  const auto b = backbone.extract(input);
  EXPECT_EQ(ag::max_abs_diff(a.values, b.values), 0.0);
}

TEST(Backbone, ChannelMismatchIsShapeError) {
  Backbone backbone(BackboneConfig::make("desk-small", 8), 1);
  ag::Tensor wrong{ag::Shape{4, 64, 64}};
  EXPECT_THROW(backbone.extract(wrong), ShapeError);
}

TEST(Backbone, StructureEndsAtConvolutionalStage) {
  for (const char* arch : {"desk-small", "paper-deep"}) {
    Backbone backbone(BackboneConfig::make(arch, 4), 5);
    const auto& structure = backbone.structure();
    ASSERT_FALSE(structure.empty());
    // no pooling or classifier tail: the net ends inside a conv stage
    const LayerKind last = structure.back();
    EXPECT_TRUE(last == LayerKind::Conv || last == LayerKind::Norm ||
                last == LayerKind::Activation || last == LayerKind::Add)
        << arch;
    // pooling may appear only as the early stem pool, never at the end
    for (std::size_t i = structure.size() - 3; i < structure.size(); ++i)
      EXPECT_NE(structure[i], LayerKind::MaxPool) << arch;
  }
}

TEST(Backbone, InputJacobianMatchesFiniteDifferences) {
  Backbone backbone(BackboneConfig::make("desk-small", 2), 21);
  rng::Engine engine(22);
  ag::Var input = ag::parameter(ag::Tensor{ag::Shape{2, 64, 64}});
  for (auto& v : input->value.vec()) v = engine.normal();
  ag::Var probe = ag::constant(ag::Tensor{ag::Shape{128, 4, 4}});
  for (auto& v : probe->value.vec()) v = engine.normal();
  auto build = [&] { return ag::sum_all(ag::mul(backbone.forward(input), probe)); };
  const double err = fdcheck::check_direction(build, input, 23, 1e-6);
  EXPECT_LT(err, 1e-3);
}

TEST(Backbone, ParameterGradientsMatchFiniteDifferences) {
  // Tiny spatial extent to keep the FD sweep fast; norm layers still see a
  // 4x4 grid after the first stride so statistics are nontrivial.
  Backbone backbone(BackboneConfig::make("desk-small", 2), 31);
  rng::Engine engine(32);
  ag::Var input = ag::constant(ag::Tensor{ag::Shape{2, 32, 32}});
  for (auto& v : input->value.vec()) v = engine.normal();
  ag::Var probe = ag::constant(ag::Tensor{ag::Shape{128, 2, 2}});
  for (auto& v : probe->value.vec()) v = engine.normal();
  auto build = [&] { return ag::sum_all(ag::mul(backbone.forward(input), probe)); };
  const auto report = fdcheck::check_params(build, backbone.params(), 1e-6, 6, 1234, 1e-4);
  EXPECT_LT(report.max_rel_err, 1e-3) << report.worst;
}
