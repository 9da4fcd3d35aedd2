#include <gtest/gtest.h>

#include <cmath>

#include "wastesite/nn/gradient_check.hpp"
#include "wastesite/nn/network.hpp"
#include "wastesite/nn/train.hpp"
#include "wastesite/nn/weights_io.hpp"

namespace wastesite::nn {
namespace {

NetworkSpec mlp_spec(std::size_t in, std::size_t hidden) {
  return {{in},
          {LayerSpec::dense("d1", in, hidden), LayerSpec::relu("r1"),
           LayerSpec::dense("d2", hidden, hidden), LayerSpec::relu("r2"),
           LayerSpec::dense("d3", hidden, 1), LayerSpec::sigmoid("out")}};
}

Tensor<float> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Tensor<float> t(std::move(shape));
  CounterRng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(rng.normal() * scale);
  return t;
}

TEST(Network, SameSeedBuildsIdenticalWeights) {
  NetworkSpec spec{{4}, {LayerSpec::dense("d", 4, 1), LayerSpec::sigmoid("s")}};
  const auto a = build_network(spec, 7);
  const auto b = build_network(spec, 7);
  const auto c = build_network(spec, 8);
  EXPECT_EQ(*a.parameters()[0], *b.parameters()[0]);
  EXPECT_NE(*a.parameters()[0], *c.parameters()[0]);
}

TEST(Network, GlorotBound) {
  NetworkSpec spec{{100}, {LayerSpec::dense("d", 100, 100)}};
  const double bound = std::sqrt(6.0 / 200.0);
  EXPECT_NEAR(bound, 0.1732, 1e-4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto net = build_network(spec, seed);
    double largest = 0;
    for (const float w : net.parameters()[0]->values()) largest = std::max(largest, std::abs(double(w)));
    EXPECT_LE(largest, bound);
    EXPECT_GT(largest, 0.9 * bound);
    for (const float b : net.parameters()[1]->values()) EXPECT_EQ(b, 0.0f);
  }
  NetworkSpec conv{{8, 8, 3}, {LayerSpec::conv2d("c", 3, 3, 3, 5)}};
  const auto net = build_network(conv, 1);
  const double cbound = std::sqrt(6.0 / (27 + 45));
  for (const float w : net.parameters()[0]->values()) EXPECT_LE(std::abs(double(w)), cbound);
}

TEST(Network, CompositionErrorNamesBothLayers) {
  NetworkSpec spec{{28, 28, 24},
                   {LayerSpec::conv2d("first", 3, 3, 24, 12, Padding::same),
                    LayerSpec::conv2d("second", 3, 3, 24, 8, Padding::same)}};
  try {
    build_network(spec, 0);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'second'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'first'"), std::string::npos) << msg;
  }
}

TEST(Network, ZeroWeightsGiveHalf) {
  NetworkSpec spec{{5}, {LayerSpec::dense("d", 5, 1), LayerSpec::sigmoid("s")}};
  auto net = build_network(spec, 3);
  for (auto* p : net.parameters()) p->fill(0.0f);
  const auto y = net.infer(random_tensor({4, 5}, 11));
  for (const float v : y.values()) EXPECT_EQ(v, 0.5f);
}

TEST(Network, IdentityOneByOneConv) {
  NetworkSpec spec{{6, 5, 3}, {LayerSpec::conv2d("c", 1, 1, 3, 3)}};
  auto net = build_network(spec, 0);
  auto& k = *net.parameters()[0];
  k.fill(0.0f);
  for (std::size_t c = 0; c < 3; ++c) k[c * 3 + c] = 1.0f;
  const auto x = random_tensor({2, 6, 5, 3}, 5);
  EXPECT_EQ(net.infer(x), x);
}

TEST(Network, InferIsDeterministicWithDropout) {
  NetworkSpec spec{{6},
                   {LayerSpec::dense("d", 6, 16), LayerSpec::relu("r"), LayerSpec::dropout("drop", 0.5),
                    LayerSpec::dense("o", 16, 1), LayerSpec::sigmoid("s")}};
  auto net = build_network(spec, 2);
  const auto x = random_tensor({8, 6}, 1);
  EXPECT_EQ(net.infer(x), net.infer(x));
  net.set_mode(Mode::train);
  EXPECT_NE(net.forward(x, 0), net.forward(x, 1));
}

TEST(Network, BatchShapeMismatch) {
  const auto net = build_network(mlp_spec(3, 4), 0);
  EXPECT_THROW(net.infer(Tensor<float>({2, 4})), ShapeError);
}

TEST(Network, NonFiniteActivationReportsLayer) {
  const auto net = build_network(mlp_spec(3, 4), 0);
  Tensor<float> x({1, 3}, 1.0f);
  x[1] = std::numeric_limits<float>::quiet_NaN();
  try {
    net.infer(x);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
  }
}

TEST(Backprop, LinearLayerSquaredLossClosedForm) {
  NetworkSpec spec{{3}, {LayerSpec::dense("lin", 3, 1)}};
  auto net = build_network(spec, 4);
  Tensor<double> x({1, 3}, std::vector<double>{0.5, -1.25, 2.0});
  auto dnet = net.cast<double>();
  PassContext ctx;
  ctx.mode = Mode::train;
  const auto tape = dnet.record(x, ctx);
  const double yhat = tape.output[0];
  const double y = 0.3;
  const auto grads = dnet.backward(tape, Tensor<double>({1, 1}, std::vector<double>{yhat - y}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(grads[0][i], x[i] * (yhat - y));
  EXPECT_EQ(grads[1][0], yhat - y);
}

TEST(Backprop, ThreeLayerMlpAgreesWithFiniteDifferences) {
  const auto net = build_network(mlp_spec(5, 12), 21);
  const auto x = random_tensor({4, 5}, 3);
  Tensor<float> t({4, 1}, std::vector<float>{1, 0, 1, 0});
  const auto report = gradient_check(net, x, t);
  EXPECT_GT(report.checked, 20u);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst;
}

TEST(Backprop, ConvPoolDenseStack) {
  NetworkSpec spec{{8, 8, 3},
                   {LayerSpec::conv2d("c1", 3, 3, 3, 4, Padding::same), LayerSpec::relu("r1"),
                    LayerSpec::conv2d("c2", 3, 3, 4, 5), LayerSpec::relu("r2"),
                    LayerSpec::maxpool("p", 2), LayerSpec::flatten("f"),
                    LayerSpec::dense("d", 45, 1), LayerSpec::sigmoid("s")}};
  const auto net = build_network(spec, 5);
  const auto x = random_tensor({3, 8, 8, 3}, 9);
  Tensor<float> t({3, 1}, std::vector<float>{1, 0, 0.7f});
  const auto report = gradient_check(net, x, t);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst;
}

TEST(Backprop, BatchNormInIsolation) {
  NetworkSpec spec{{4, 4, 3},
                   {LayerSpec::batchnorm("bn", 3), LayerSpec::flatten("f"), LayerSpec::dense("d", 48, 1),
                    LayerSpec::sigmoid("s")}};
  auto net = build_network(spec, 8);
  auto params = net.parameters();
  CounterRng rng(3);
  for (auto& v : params[0]->values()) v = static_cast<float>(1 + 0.3 * rng.normal());
  for (auto& v : params[1]->values()) v = static_cast<float>(0.2 * rng.normal());
  const auto x = random_tensor({3, 4, 4, 3}, 4, 2.0);
  Tensor<float> t({3, 1}, std::vector<float>{1, 0, 1});
  const auto report = gradient_check(net, x, t, {.per_tensor = 12});
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst;
}

TEST(Backprop, DropoutLayerWhenDisabledIsTransparent) {
  NetworkSpec spec{{6},
                   {LayerSpec::dense("d", 6, 8), LayerSpec::dropout("drop", 0.4),
                    LayerSpec::dense("o", 8, 1), LayerSpec::sigmoid("s")}};
  const auto net = build_network(spec, 2);
  const auto report = gradient_check(net, random_tensor({5, 6}, 2), Tensor<float>({5, 1}, 1.0f));
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst;
}

TEST(Backprop, DropoutTrainModeMaskMatchesGradient) {
  NetworkSpec spec{{4}, {LayerSpec::dropout("drop", 0.5)}};
  auto net = build_network<double>(spec, 1);
  Tensor<double> x({1, 4}, std::vector<double>{1, 2, 3, 4});
  PassContext ctx;
  ctx.mode = Mode::train;
  ctx.seed = 99;
  const auto tape = net.record(x, ctx);
  PassContext ctx2 = ctx;
  (void)ctx2;
  const auto& cache = tape.caches[0];
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(tape.output[i], cache.mask[i] ? x[i] * 2.0 : 0.0);
  }
}

TEST(BatchNorm, InferMatchesTrainStatisticsAfterTraining) {
  NetworkSpec spec{{3}, {LayerSpec::batchnorm("bn", 3)}};
  auto net = build_network(spec, 0);
  const auto x = random_tensor({64, 3}, 17, 3.0);
  PassContext ctx;
  ctx.mode = Mode::train;
  Tensor<float> train_out;
  for (int i = 0; i < 200; ++i) {
    const auto tape = net.record(x, ctx);
    net.absorb(tape);
    train_out = tape.output;
  }
  const auto infer_out = net.infer(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(infer_out[i], train_out[i], 1e-3);
}

TEST(Adam, ZeroGradientLeavesWeightsUnchanged) {
  Tensor<float> w({3}, std::vector<float>{0.1f, -0.2f, 0.3f});
  const auto before = w;
  Adam<float> adam;
  std::vector<Tensor<float>*> params{&w};
  std::vector<Tensor<float>> grads{Tensor<float>({3}, 0.0f)};
  for (int i = 0; i < 5; ++i) adam.step(params, grads, 0.001);
  EXPECT_EQ(w, before);
}

// Two isotropic Gaussian clouds 8 sigma apart: separable by construction.
void two_blobs(std::size_t n, std::uint64_t seed, Tensor<float>& x, Tensor<float>& y) {
  x = Tensor<float>({n, 2});
  y = Tensor<float>({n, 1});
  CounterRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    const double cx = pos ? 2.0 : -2.0;
    x[2 * i] = static_cast<float>(cx + 0.5 * rng.normal());
    x[2 * i + 1] = static_cast<float>(cx + 0.5 * rng.normal());
    y[i] = pos ? 1.0f : 0.0f;
  }
}

TEST(Train, SeparableBlobsReachHighAccuracy) {
  Tensor<float> x, y;
  two_blobs(400, 1, x, y);
  auto net = build_network(NetworkSpec{{2},
                                       {LayerSpec::dense("d1", 2, 8), LayerSpec::relu("r"),
                                        LayerSpec::dense("d2", 8, 1), LayerSpec::sigmoid("s")}},
                           3);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 32;
  const auto hist = train(net, x, y, cfg);
  ASSERT_EQ(hist.loss.size(), 50u);
  EXPECT_LT(hist.loss.back(), hist.loss.front());
  EXPECT_GE(accuracy(net, x, y), 0.99);
}

TEST(Train, ZeroLearningRateKeepsWeights) {
  Tensor<float> x, y;
  two_blobs(64, 2, x, y);
  auto net = build_network(mlp_spec(2, 6), 4);
  const auto before = net;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  train(net, x, y, cfg);
  const auto a = net.parameters();
  const auto b = before.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST(Train, DeterministicLossHistory) {
  Tensor<float> x, y;
  two_blobs(128, 3, x, y);
  NetworkSpec spec{{2},
                   {LayerSpec::dense("d1", 2, 8), LayerSpec::relu("r"), LayerSpec::dropout("dr", 0.3),
                    LayerSpec::dense("d2", 8, 1), LayerSpec::sigmoid("s")}};
  auto a = build_network(spec, 5);
  auto b = build_network(spec, 5);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  EXPECT_EQ(train(a, x, y, cfg).loss, train(b, x, y, cfg).loss);
}

TEST(Train, NanInputAbortsWithEpochAndBatch) {
  Tensor<float> x, y;
  two_blobs(64, 3, x, y);
  x[100] = std::numeric_limits<float>::infinity();
  auto net = build_network(mlp_spec(2, 4), 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(net, x, y, cfg);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0 batch"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsBadConfig) {
  Tensor<float> x, y;
  two_blobs(8, 3, x, y);
  auto net = build_network(mlp_spec(2, 4), 1);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(train(net, x, y, cfg), ConfigError);
  cfg.batch_size = 4;
  y[0] = 1.5f;
  EXPECT_THROW(train(net, x, y, cfg), DataError);
}

TEST(TrainConfig, HalvingSchedule) {
  TrainConfig cfg;
  cfg.schedule = LrSchedule{0.5, 10};
  EXPECT_DOUBLE_EQ(cfg.rate_at(0), 0.001);
  EXPECT_DOUBLE_EQ(cfg.rate_at(9), 0.001);
  EXPECT_DOUBLE_EQ(cfg.rate_at(10), 0.0005);
  EXPECT_DOUBLE_EQ(cfg.rate_at(25), 0.00025);
}

TEST(WeightsIo, RoundTripIsBitExact) {
  NetworkSpec spec{{6, 6, 2},
                   {LayerSpec::conv2d("c", 3, 3, 2, 4, Padding::same), LayerSpec::batchnorm("bn", 4),
                    LayerSpec::relu("r"), LayerSpec::maxpool("p", 2), LayerSpec::flatten("f"),
                    LayerSpec::dense("d", 36, 1), LayerSpec::sigmoid("s")}};
  auto net = build_network(spec, 12);
  auto bufs = net.buffers();
  (*bufs[0])[1] = 0.123456789f;
  const std::string bytes = encode_weights(net);
  EXPECT_EQ(bytes.substr(0, 4), "WSNN");
  const auto back = decode_weights(bytes);
  EXPECT_EQ(back.spec(), net.spec());
  EXPECT_EQ(back.seed(), net.seed());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) EXPECT_EQ(*back.parameters()[i], *net.parameters()[i]);
  for (std::size_t i = 0; i < net.buffers().size(); ++i) EXPECT_EQ(*back.buffers()[i], *net.buffers()[i]);
  EXPECT_EQ(encode_weights(back), bytes);
}

TEST(WeightsIo, RejectsCorruptContainers) {
  auto net = build_network(mlp_spec(2, 3), 1);
  std::string bytes = encode_weights(net);
  EXPECT_THROW(decode_weights(bytes.substr(0, bytes.size() - 3)), FormatError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_weights(bytes), FormatError);
}

}  // namespace
}  // namespace wastesite::nn
