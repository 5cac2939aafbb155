#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "malite/error.hpp"
#include "malite/net.hpp"

using namespace malite;

namespace {

using namespace malite::testing;

NetConfig tiny_config(int classes = 3) { return NetConfig::malite_default(classes).scaled(0.25); }

void check_all_below(const std::vector<double>& errors) {
  for (double e : errors) CHECK(e < 1e-3);
}

}  // namespace

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(1);
  for (const auto& s : gradcheck_shapes()) check_all_below(conv_errors(s, rng));
}

TEST_CASE("depthwise gradients") {
  std::mt19937_64 rng(2);
  for (const auto& s : gradcheck_shapes()) check_all_below(depthwise_errors(s, rng));
}

TEST_CASE("batch norm gradients in training mode") {
  std::mt19937_64 rng(3);
  for (const auto& s : gradcheck_shapes()) check_all_below(batch_norm_errors(s, rng));
}

TEST_CASE("bottleneck gradients") {
  std::mt19937_64 rng(4);
  for (const auto& spec : gradcheck_blocks()) check_all_below(bottleneck_errors(spec, rng));
}

TEST_CASE("fully connected with softmax cross-entropy gradients") {
  std::mt19937_64 rng(5);
  for (const auto& d : classifier_shapes()) check_all_below(classifier_errors(d[0], d[1], d[2], rng));
}

TEST_CASE("whole model gradient") {
  std::mt19937_64 rng(6);
  NetConfig cfg = tiny_config(3);
  Model<double> m(cfg);
  m.initialize(9);
  Tensor<double> x = random_tensor<double>({2, 32, 32, 1}, rng);
  const std::vector<int> labels{0, 2};
  auto loss = [&] { return softmax_cross_entropy(m.forward(x, Mode::Train), labels).loss; };
  m.zero_grad();
  auto lr = softmax_cross_entropy(m.forward(x, Mode::Train), labels);
  m.backward(lr.grad);
  for (auto* p : m.params()) {
    if (!p->trainable || (p->name != "stem.w" && p->name != "block3.depthwise.w" && p->name != "fc.w")) continue;
    const auto ana = p->grad.data;
    CHECK_MESSAGE(rel_error(numeric_grad(p->value.data, loss), ana) < 1e-3, p->name);
  }
}

TEST_CASE("identity kernels pass input through") {
  std::mt19937_64 rng(7);
  Tensor<float> x = random_tensor<float>({2, 5, 6, 3}, rng);
  Conv2d<float> pw("pw", 3, 3, 1, 1);
  for (int c = 0; c < 3; ++c) pw.weight().value.data[static_cast<std::size_t>(c) * 3 + c] = 1.0f;
  CHECK(pw.forward(x).data == x.data);
  DepthwiseConv2d<float> dw("dw", 3, 3, 1);
  for (int c = 0; c < 3; ++c) dw.weight().value.at(0, 1, 1, c) = 1.0f;
  CHECK(dw.forward(x).data == x.data);
  Conv2d<float> full("full", 3, 3, 3, 1);
  for (int c = 0; c < 3; ++c) full.weight().value.at(1, 1, c, c) = 1.0f;
  CHECK(full.forward(x).data == x.data);
}

TEST_CASE("same padding output shapes") {
  std::mt19937_64 rng(8);
  for (int h : {4, 5, 7, 16}) {
    Tensor<float> x = random_tensor<float>({1, h, h + 1, 2}, rng);
    Conv2d<float> s1("a", 2, 3, 3, 1);
    Conv2d<float> s2("b", 2, 3, 3, 2);
    DepthwiseConv2d<float> d2("c", 2, 3, 2);
    CHECK(s1.forward(x).shape == Shape{1, h, h + 1, 3});
    CHECK(s2.forward(x).shape == Shape{1, (h + 1) / 2, (h + 2) / 2, 3});
    CHECK(d2.forward(x).shape == Shape{1, (h + 1) / 2, (h + 2) / 2, 2});
  }
  Conv2d<float> c("c", 2, 3, 3, 1);
  CHECK_THROWS_AS(c.forward(Tensor<float>({1, 4, 4, 5})), Error);
}

TEST_CASE("residual block with zeroed projection is the identity") {
  std::mt19937_64 rng(9);
  Bottleneck<float> b("b", {4, 4, 1, 6, 3});
  std::vector<Param<float>*> ps;
  b.collect(ps);
  for (auto* p : ps) fill_random(*p, rng);
  for (auto* p : ps)
    if (p->name.ends_with(".var")) for (auto& v : p->value.data) v = std::abs(v) + 0.5f;
  b.project_bn().gamma().value.zero();
  b.project_bn().beta().value.zero();
  Tensor<float> x = random_tensor<float>({2, 6, 6, 4}, rng);
  CHECK(b.forward(x, Mode::Infer).data == x.data);
  Bottleneck<float> strided("s", {4, 4, 2, 6, 3});
  CHECK_FALSE(strided.spec().residual());
}

TEST_CASE("batch norm modes") {
  std::mt19937_64 rng(10);
  BatchNorm<double> bn("bn", 3);
  Tensor<double> x = random_tensor<double>({4, 3, 3, 3}, rng, 3.0);
  for (auto& v : x.data) v += 5.0;
  Tensor<double> y = bn.forward(x, Mode::Train);
  const std::size_t m = x.size() / 3;
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0, xmean = 0, xvar = 0;
    for (std::size_t i = static_cast<std::size_t>(c); i < y.size(); i += 3) mean += y.data[i], xmean += x.data[i];
    mean /= m;
    xmean /= m;
    for (std::size_t i = static_cast<std::size_t>(c); i < y.size(); i += 3) {
      var += (y.data[i] - mean) * (y.data[i] - mean);
      xvar += (x.data[i] - xmean) * (x.data[i] - xmean);
    }
    var /= m;
    xvar /= m;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
    CHECK(var == doctest::Approx(xvar / (xvar + 1e-5)));
    CHECK(bn.running_mean().value.data[c] == doctest::Approx(0.1 * xmean));
    CHECK(bn.running_var().value.data[c] == doctest::Approx(0.9 + 0.1 * xvar));
  }
  // inference uses the stored statistics
  bn.running_mean().value.data = {1.0, 2.0, 3.0};
  bn.running_var().value.data = {4.0, 4.0, 4.0};
  Tensor<double> z = bn.forward(x, Mode::Infer);
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(z.data[i] == doctest::Approx((x.data[i] - 1.0 - static_cast<double>(i % 3)) / std::sqrt(4.0 + 1e-5)));
}

TEST_CASE("learning rate schedule") {
  CHECK(TrainConfig::kPublishedLrStart == 1e-4);
  CHECK(TrainConfig::kPublishedLrEnd == 5e-5);
  CHECK(TrainConfig::kPublishedWarmupSteps == 5000);
  CHECK(TrainConfig::kPublishedEpochs == 1000);
  LrSchedule s(1e-3, 1e-4, 10, 110);
  CHECK(s.at(0) == doctest::Approx(1e-4));
  CHECK(s.at(9) == doctest::Approx(1e-3));
  CHECK(s.at(10) == doctest::Approx(1e-3));
  CHECK(s.at(109) == doctest::Approx(1e-4));
  // a quarter cosine is at start - (start - end)(1 - cos(pi/4)) halfway through
  CHECK(s.at(10 + 99 / 2) == doctest::Approx(1e-4 + 9e-4 * std::cos(std::numbers::pi / 4 * (49.0 / 49.5))));
  double prev = s.at(10);
  for (long i = 11; i < 110; ++i) {
    CHECK(s.at(i) <= prev);
    prev = s.at(i);
  }
  for (long i = 1; i < 10; ++i) CHECK(s.at(i) > s.at(i - 1));
}

TEST_CASE("single sample is memorised for most seeds") {
  int fitted = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Model<float> m(tiny_config(3));
    m.initialize(seed);
    TrainConfig tc;
    tc.lr_start = 1e-2;
    tc.lr_end = 1e-3;
    tc.warmup_steps = 2;
    Trainer tr(m, tc, 60);
    std::mt19937_64 rng(seed + 100);
    Batch b{random_tensor<float>({2, 32, 32, 1}, rng), {1, 1}};
    double loss = 0;
    for (int i = 0; i < 60; ++i) loss = tr.train_step(b);
    fitted += loss < 0.05;
  }
  CHECK(fitted >= 9);
}

TEST_CASE("prediction does not depend on batch composition") {
  Model<float> m(tiny_config(4));
  m.initialize(3);
  std::mt19937_64 rng(11);
  Tensor<float> batch = random_tensor<float>({4, 32, 32, 1}, rng);
  Prediction all = predict(m, batch);
  for (int i = 0; i < 4; ++i) {
    Tensor<float> one({1, 32, 32, 1});
    std::copy(batch.data.begin() + i * 1024, batch.data.begin() + (i + 1) * 1024, one.data.begin());
    Prediction p = predict(m, one);
    CHECK(p.classes[0] == all.classes[static_cast<std::size_t>(i)]);
    for (int c = 0; c < 4; ++c) CHECK(p.probabilities[0][c] == doctest::Approx(all.probabilities[i][c]));
  }
}

TEST_CASE("weights round trip") {
  Model<float> a(tiny_config(3));
  a.initialize(1);
  ByteWriter w;
  write_weights(a, w);
  auto bytes = w.take();
  Model<float> b(tiny_config(3));
  ByteReader r(bytes);
  read_weights(b, r);
  auto pa = a.params(), pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
  Model<float> other(tiny_config(5));
  ByteReader r2(bytes);
  CHECK_THROWS_AS(read_weights(other, r2), Error);
}

TEST_CASE("config validation and json") {
  NetConfig c = NetConfig::malite_default();
  CHECK(net_config_from_json(to_json(c)).blocks.size() == 8);
  NetConfig bad = c;
  bad.blocks.pop_back();
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.blocks[3].expansion = 4;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(net_config_from_json("{\"blocks\": 3}"), Error);
  NetConfig half = c.scaled(0.5);
  CHECK(half.stem_channels == 16);
  CHECK(half.blocks[7].out_channels == 32);
  CHECK(to_json(net_config_from_json(to_json(half))) == to_json(half));
}

TEST_CASE("non-finite loss is reported") {
  Model<float> m(tiny_config(2));
  m.initialize(0);
  m.params().back()->value.data[0] = NAN;
  Trainer tr(m, TrainConfig{}, 10);
  Batch b{Tensor<float>({2, 32, 32, 1}, 0.5f), {0, 1}};
  try {
    tr.train_step(b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericalError);
  }
}
