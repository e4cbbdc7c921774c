#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "fundaq/nn/adam.hpp"
#include "fundaq/nn/resnet.hpp"
#include "fundaq/nn/train.hpp"
#include "fundaq/nn/weights.hpp"
#include "fundaq/rng.hpp"
#include "fundaq/synth.hpp"
#include "support/network_checks.hpp"

using namespace fundaq;
using namespace fundaq::nn;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor<T> t(std::move(s));
    for (auto& v : t.values()) v = static_cast<T>(rng.normal() * scale);
    return t;
}

using testkit::rel_error;

constexpr double kStep = 1e-5;
constexpr double kMaxRelError = 1e-4;

// Central differences of scalar `loss` against every element of `x`, compared
// with `analytic`.
double max_layer_error(Tensor<double>& x, const Tensor<double>& analytic, const std::function<double()>& loss) {
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + kStep;
        const double up = loss();
        x[i] = saved - kStep;
        const double down = loss();
        x[i] = saved;
        worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * kStep)));
    }
    return worst;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<Example> synthetic_examples(std::size_t n, int side, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = synth::synth_generate(synth::sample_params(rng), side);
        out.push_back({to_model_input(s.image), normalize_sheet(s.sheet).value()});
    }
    return out;
}

}  // namespace

TEST(Conv2d, Examples) {
    Rng rng(1);
    const auto x = random_tensor<double>({2, 3, 5, 4}, rng);
    Tensor<double> eye({3, 3, 1, 1});
    for (std::size_t c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
    EXPECT_EQ(conv2d(x, eye, nullptr, 1, 0), x);

    const Tensor<double> ones({1, 1, 3, 3}, 1.0);
    const auto nine = conv2d(ones, ones, nullptr, 1, 0);
    ASSERT_EQ(nine.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_EQ(nine[0], 9.0);

    const auto s2 = conv2d(Tensor<double>({1, 1, 4, 4}, 1.0), ones, nullptr, 2, 1);
    EXPECT_EQ(s2.shape(), (Shape{1, 1, 2, 2}));
    // Top-left window sees a 2x2 patch of ones, the rest is zero padding.
    EXPECT_EQ(s2[0], 4.0);
    EXPECT_EQ(s2[3], 9.0);

    const Tensor<double> bias({1}, 0.5);
    EXPECT_EQ(conv2d(ones, ones, &bias, 1, 0)[0], 9.5);
    EXPECT_THROW(conv2d(x, Tensor<double>({1, 2, 3, 3}), nullptr, 1, 1), ShapeError);
}

TEST(Conv2d, MatchesDirectSum) {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t cin = 1 + rng.below(3), cout = 1 + rng.below(3), k = 1 + 2 * rng.below(3);
        const std::size_t stride = 1 + rng.below(2), pad = rng.below(3);
        const std::size_t H = k + rng.below(6), W = k + rng.below(6);
        const auto x = random_tensor<double>({2, cin, H, W}, rng);
        const auto w = random_tensor<double>({cout, cin, k, k}, rng);
        const auto y = conv2d(x, w, nullptr, stride, pad);
        const std::size_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
        ASSERT_EQ(y.shape(), (Shape{2, cout, Ho, Wo}));
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t o = 0; o < cout; ++o)
                for (std::size_t oy = 0; oy < Ho; ++oy)
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                        double s = 0;
                        for (std::size_t c = 0; c < cin; ++c)
                            for (std::size_t ky = 0; ky < k; ++ky)
                                for (std::size_t kx = 0; kx < k; ++kx) {
                                    const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                                    const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                                    if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                                    s += x.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) * w.at(o, c, ky, kx);
                                }
                        ASSERT_NEAR(y.at(n, o, oy, ox), s, 1e-12);
                    }
    }
}

TEST(BatchNorm, Examples) {
    // Channel with mean 0 and biased variance 1.
    Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, -1, 1, -1});
    Tensor<double> gamma({1}, 1.0), beta({1}, 0.0);
    BatchNormState<double> st(1);
    const auto y = batchnorm2d(x, gamma, beta, st, Mode::train);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
    EXPECT_NEAR(st.running_mean[0], 0.0, 1e-15);
    EXPECT_NEAR(st.running_var[0], 0.9 + 0.1 * (4.0 / 3.0), 1e-15);

    Tensor<double> constant({2, 1, 3, 3}, 7.0);
    Tensor<double> b2({1}, 0.25);
    BatchNormState<double> st2(1);
    const auto flat = batchnorm2d(constant, gamma, b2, st2, Mode::train);
    for (double v : flat.values()) EXPECT_EQ(v, 0.25);

    BatchNormState<double> st3(1);
    st3.running_mean[0] = 2.0;
    st3.running_var[0] = 4.0;
    Tensor<double> g3({1}, 3.0), b3({1}, -1.0);
    Tensor<double> x3({1, 1, 1, 2}, std::vector<double>{6.0, 0.0});
    const auto y3 = batchnorm2d(x3, g3, b3, st3, Mode::infer);
    EXPECT_NEAR(y3[0], (6.0 - 2.0) / std::sqrt(4.0 + 1e-5) * 3.0 - 1.0, 1e-15);
    EXPECT_NEAR(y3[1], (0.0 - 2.0) / std::sqrt(4.0 + 1e-5) * 3.0 - 1.0, 1e-15);
    EXPECT_EQ(st3.running_mean[0], 2.0);

    EXPECT_THROW(batchnorm2d(x, Tensor<double>({2}, 1.0), beta, st, Mode::train), ShapeError);
}

TEST(Mse, Examples) {
    Tensor<double> p({2}, std::vector<double>{1, 0}), t({2}, std::vector<double>{0, 0});
    auto [loss, grad] = mse_loss(p, t);
    EXPECT_EQ(loss, 0.5);
    EXPECT_EQ(grad.values(), (std::vector<double>{1, 0}));
    auto [zero, zgrad] = mse_loss(p, p);
    EXPECT_EQ(zero, 0.0);
    for (double g : zgrad.values()) EXPECT_EQ(g, 0.0);

    Rng rng(3);
    const auto a = random_tensor<double>({9}, rng), b = random_tensor<double>({9}, rng);
    Tensor<double> scaled({9});
    for (std::size_t i = 0; i < 9; ++i) scaled[i] = b[i] + 3.0 * (a[i] - b[i]);
    EXPECT_NEAR(mse_loss(scaled, b).first, 9.0 * mse_loss(a, b).first, 1e-12);
    EXPECT_THROW(mse_loss(a, Tensor<double>({8})), ShapeError);
}

TEST(Layers, ConvGradientCheck) {
    Rng rng(4);
    auto x = random_tensor<double>({2, 2, 5, 5}, rng);
    auto w = random_tensor<double>({3, 2, 3, 3}, rng);
    auto b = random_tensor<double>({3}, rng);
    const auto r = random_tensor<double>({2, 3, 3, 3}, rng);
    auto loss = [&] { return dot(conv2d(x, w, &b, 2, 1), r); };
    Tensor<double> gw(w.shape()), gb(b.shape());
    const auto gx = conv2d_backward(x, w, r, 2, 1, gw, &gb);
    EXPECT_LE(max_layer_error(x, gx, loss), kMaxRelError);
    EXPECT_LE(max_layer_error(w, gw, loss), kMaxRelError);
    EXPECT_LE(max_layer_error(b, gb, loss), kMaxRelError);
}

TEST(Layers, BatchNormGradientCheck) {
    Rng rng(5);
    auto x = random_tensor<double>({3, 2, 2, 3}, rng);
    auto gamma = random_tensor<double>({2}, rng);
    auto beta = random_tensor<double>({2}, rng);
    const auto r = random_tensor<double>({3, 2, 2, 3}, rng);
    auto loss = [&] {
        BatchNormState<double> st(2);
        return dot(batchnorm2d(x, gamma, beta, st, Mode::train), r);
    };
    BatchNormState<double> st(2);
    BatchNormCache<double> cache;
    batchnorm2d(x, gamma, beta, st, Mode::train, {}, &cache);
    Tensor<double> gg(gamma.shape()), gbeta(beta.shape());
    const auto gx = batchnorm2d_backward(r, gamma, cache, gg, gbeta);
    EXPECT_LE(max_layer_error(x, gx, loss), kMaxRelError);
    EXPECT_LE(max_layer_error(gamma, gg, loss), kMaxRelError);
    EXPECT_LE(max_layer_error(beta, gbeta, loss), kMaxRelError);
}

TEST(Layers, LinearPoolReluGradientCheck) {
    Rng rng(6);
    {
        Linear<double> fc(4, 3);
        fc.init(rng, 1.0);
        auto x = random_tensor<double>({2, 4}, rng);
        const auto r = random_tensor<double>({2, 3}, rng);
        auto loss = [&] { return dot(fc.forward(x), r); };
        fc.forward(x);
        fc.weight().zero_grad();
        fc.bias().zero_grad();
        const auto gx = fc.backward(r);
        const auto gw = fc.weight().grad;
        const auto gb = fc.bias().grad;
        EXPECT_LE(max_layer_error(x, gx, loss), kMaxRelError);
        EXPECT_LE(max_layer_error(fc.weight().value, gw, loss), kMaxRelError);
        EXPECT_LE(max_layer_error(fc.bias().value, gb, loss), kMaxRelError);
    }
    {
        MaxPool2d<double> pool(3, 2, 1);
        auto x = random_tensor<double>({2, 2, 6, 5}, rng);
        pool.forward(x);
        const auto r = random_tensor<double>({2, 2, 3, 3}, rng);
        const auto gx = pool.backward(r);
        EXPECT_LE(max_layer_error(x, gx, [&] { return dot(MaxPool2d<double>(3, 2, 1).forward(x), r); }), kMaxRelError);
    }
    {
        GlobalAvgPool<double> gap;
        auto x = random_tensor<double>({2, 3, 4, 2}, rng);
        gap.forward(x);
        const auto r = random_tensor<double>({2, 3}, rng);
        const auto gx = gap.backward(r);
        EXPECT_LE(max_layer_error(x, gx, [&] { return dot(GlobalAvgPool<double>().forward(x), r); }), kMaxRelError);
    }
    {
        ReLU<double> relu;
        auto x = random_tensor<double>({30}, rng);
        for (auto& v : x.values())
            if (std::abs(v) < 1e-3) v = 0.5;
        relu.forward(x);
        const auto r = random_tensor<double>({30}, rng);
        const auto gx = relu.backward(r);
        EXPECT_LE(max_layer_error(x, gx, [&] { return dot(ReLU<double>().forward(x), r); }), kMaxRelError);
    }
}

TEST(Network, MiniGradientCheckWithWeightDecay) {
    const auto r = testkit::mini_network_gradcheck(1200, kStep);
    EXPECT_GE(r.checked, 1200u);
    EXPECT_EQ(r.arrays_covered, r.arrays);
    EXPECT_LE(r.worst, kMaxRelError) << r.worst_at;
}

TEST(Adam, FirstStepMatchesBiasCorrectedMoments) { EXPECT_LE(testkit::adam_first_step_deviation(), 1e-12); }

TEST(Network, ZeroNetworkGivesZeroOutputAndGradients) {
    ResNet<double> net(NetworkConfig::mini());
    net.for_each_param([](const std::string&, Param<double>& p) { p.value.fill(0.0); });
    Rng rng(9);
    const auto batch = random_tensor<double>({3, 3, 64, 64}, rng);
    const auto y = net.forward(batch, Mode::infer);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
    compute_gradients(net, batch, Tensor<double>({3}, 0.0), 1e-5);
    net.for_each_param([](const std::string& name, Param<double>& p) {
        for (double g : p.grad.values()) ASSERT_EQ(g, 0.0) << name;
    });
}

TEST(Network, OutputShapeAndIdenticalImages) {
    ResNet<float> net(NetworkConfig::mini());
    net.init(10);
    Rng rng(11);
    const auto one = random_tensor<float>({1, 3, 64, 64}, rng);
    Tensor<float> batch({4, 3, 64, 64});
    for (std::size_t n = 0; n < 4; ++n) std::copy(one.values().begin(), one.values().end(), batch.data() + n * one.size());
    const auto y = net.forward(batch, Mode::infer);
    ASSERT_EQ(y.shape(), Shape{4});
    for (std::size_t n = 1; n < 4; ++n) EXPECT_EQ(y[n], y[0]);
    EXPECT_THROW(net.forward(Tensor<float>({1, 3, 32, 32}), Mode::infer), ShapeError);
}

TEST(Network, DuplicatedBatchLeavesGradientsUnchanged) {
    ResNet<double> a(NetworkConfig::mini()), b(NetworkConfig::mini());
    a.init(12);
    b.init(12);
    Rng rng(13);
    const auto x = random_tensor<double>({2, 3, 64, 64}, rng);
    Tensor<double> xx({4, 3, 64, 64});
    std::copy(x.values().begin(), x.values().end(), xx.data());
    std::copy(x.values().begin(), x.values().end(), xx.data() + x.size());
    const Tensor<double> t({2}, std::vector<double>{0.1, 0.9}), tt({4}, std::vector<double>{0.1, 0.9, 0.1, 0.9});
    compute_gradients(a, x, t, 1e-5);
    compute_gradients(b, xx, tt, 1e-5);
    std::vector<Tensor<double>> ga;
    a.for_each_param([&](const std::string&, Param<double>& p) { ga.push_back(p.grad); });
    std::size_t i = 0;
    b.for_each_param([&](const std::string& name, Param<double>& p) {
        const auto& g = ga[i++];
        for (std::size_t k = 0; k < g.size(); ++k) ASSERT_NEAR(p.grad[k], g[k], 1e-10 * std::max(1.0, std::abs(g[k]))) << name;
    });
}

TEST(Network, ResidualBlockWithZeroConvIsIdentity) {
    BasicBlock<double> block(4, 4, 1);
    Rng rng(14);
    auto x = random_tensor<double>({2, 4, 5, 5}, rng);
    const auto y = block.forward(x, Mode::infer);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], std::max(0.0, x[i]));
    for (auto& v : x.values()) v = std::abs(v);
    EXPECT_EQ(block.forward(x, Mode::infer), x);
}

TEST(Network, GlobalAveragePool) {
    GlobalAvgPool<double> gap;
    Rng rng(15);
    const auto x = random_tensor<double>({2, 3, 4, 5}, rng);
    const auto y = gap.forward(x);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 3; ++c) {
            double s = 0;
            for (std::size_t i = 0; i < 20; ++i) s += x[(n * 3 + c) * 20 + i];
            EXPECT_NEAR(y[n * 3 + c], s / 20, 1e-15);
        }
    const auto k = gap.forward(Tensor<double>({1, 2, 3, 3}, 2.5));
    EXPECT_EQ(k.values(), (std::vector<double>{2.5, 2.5}));
}

TEST(Adam, FirstStepClosedForm) {
    ResNet<double> net(NetworkConfig::mini());
    net.init(16);
    Rng rng(17);
    std::vector<Tensor<double>> before, grads;
    net.for_each_param([&](const std::string&, Param<double>& p) {
        for (auto& g : p.grad.values()) g = rng.normal() * std::pow(10.0, rng.uniform(-6, 2));
        before.push_back(p.value);
        grads.push_back(p.grad);
    });
    AdamState<double> st;
    const double lr = 1e-4;
    adam_step(net, st, lr);
    EXPECT_EQ(st.t, 1u);
    std::size_t a = 0;
    net.for_each_param([&](const std::string& name, Param<double>& p) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = grads[a][i];
            const double expected = before[a][i] - lr * g / (std::abs(g) + 1e-8);
            ASSERT_NEAR(p.value[i], expected, 1e-12) << name;
            ASSERT_LT((p.value[i] - before[a][i]) * g, 0.0);
        }
        ++a;
    });
}

TEST(Adam, ScalarExampleAndZeroGradient) {
    ResNet<double> net(NetworkConfig::mini());
    net.init(18);
    net.for_each_param([](const std::string&, Param<double>& p) { p.grad.fill(1.0); });
    double w0 = 0;
    net.for_each_param([&](const std::string& name, Param<double>& p) {
        if (name == "fc.bias") w0 = p.value[0];
    });
    AdamState<double> st;
    adam_step(net, st, 1e-4);
    net.for_each_param([&](const std::string& name, Param<double>& p) {
        if (name == "fc.bias") {
            EXPECT_NEAR(p.value[0] - w0, -1e-4 / (1.0 + 1e-8), 1e-15);
        }
    });

    ResNet<double> still(NetworkConfig::mini());
    still.init(19);
    const auto before = snapshot(still);
    AdamState<double> st2;
    for (int i = 0; i < 5; ++i) {
        still.zero_grad();
        adam_step(still, st2, 1e-3);
    }
    EXPECT_EQ(snapshot(still), before);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    ResNet<double> net(NetworkConfig::mini());
    net.init(20);
    net.for_each_param([](const std::string& name, Param<double>& p) {
        if (name == "layer2.0.conv1.weight") p.grad[3] = std::nan("");
    });
    const auto before = snapshot(net);
    AdamState<double> st;
    try {
        adam_step(net, st, 1e-4);
        FAIL();
    } catch (const NonFiniteGradient& e) {
        EXPECT_EQ(e.parameter, "layer2.0.conv1.weight");
        EXPECT_NE(std::string(e.what()).find("layer2.0.conv1.weight"), std::string::npos);
    }
    EXPECT_EQ(snapshot(net), before);
    EXPECT_EQ(st.t, 0u);
}

TEST(Weights, RoundTripIsBitExact) {
    ResNet<float> net(NetworkConfig::mini());
    net.init(21);
    net.for_each_buffer([](const std::string&, Tensor<float>& t) { t.fill(0.75f); });
    const auto bytes = save_weights(net);
    EXPECT_EQ(bytes.substr(0, 4), "FQ8W");
    auto loaded = load_weights<float>(bytes, 64);
    EXPECT_EQ(loaded.config(), NetworkConfig::mini());
    EXPECT_EQ(save_weights(loaded), bytes);
    Rng rng(22);
    const auto x = random_tensor<float>({3, 3, 64, 64}, rng);
    EXPECT_EQ(net.forward(x, Mode::infer), loaded.forward(x, Mode::infer));

    ResNet<double> dn(NetworkConfig::mini());
    dn.init(23);
    const auto dbytes = save_weights(dn);
    auto reloaded = load_weights<double>(dbytes, 64);
    EXPECT_EQ(save_weights(reloaded), dbytes);
}

TEST(Weights, CanonicalNamesAndConfigInference) {
    ResNet<float> net(NetworkConfig::canonical());
    std::vector<std::string> names;
    net.for_each_array([&](const std::string& n, Tensor<float>&) { names.push_back(n); });
    auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
    EXPECT_TRUE(has("conv1.weight"));
    EXPECT_TRUE(has("layer4.1.bn2.running_var"));
    EXPECT_TRUE(has("layer2.0.downsample.0.weight"));
    EXPECT_TRUE(has("fc.bias"));
    EXPECT_FALSE(has("layer1.0.downsample.0.weight"));
    EXPECT_EQ(net.parameter_count(), 11177025u);
}

TEST(Weights, MalformedFilesAreRejected) {
    ResNet<float> net(NetworkConfig::mini());
    net.init(24);
    const auto bytes = save_weights(net);
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
        EXPECT_THROW(parse_weights(std::string_view(bytes).substr(0, cut)), WeightFormatError) << cut;
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(parse_weights(bad), WeightFormatError);
    auto version = bytes;
    version[4] = 2;
    EXPECT_THROW(parse_weights(version), WeightFormatError);

    auto map = parse_weights(bytes);
    map["layer9.0.mystery.weight"] = StoredArray{DType::f32, {1}, {0.0}};
    try {
        assign_weights(net, map);
        FAIL();
    } catch (const WeightFormatError& e) {
        EXPECT_NE(std::string(e.what()).find("layer9.0.mystery.weight"), std::string::npos);
    }
    map = parse_weights(bytes);
    map["fc.weight"].shape = {1, 8};
    map["fc.weight"].values.resize(8);
    EXPECT_THROW(assign_weights(net, map), WeightFormatError);
    map = parse_weights(bytes);
    map.erase("fc.bias");
    EXPECT_THROW(assign_weights(net, map), WeightFormatError);
    EXPECT_NO_THROW(assign_weights(net, map, {true}));
}

TEST(Training, EarlyStoppingPlateau) {
    EarlyStopping s(10, 1e-6);
    std::size_t epoch = 0;
    const std::vector<double> falling = {1.0, 0.8, 0.6, 0.5, 0.4};
    for (double v : falling) {
        ++epoch;
        EXPECT_TRUE(s.update(v));
        EXPECT_FALSE(s.should_stop());
    }
    while (!s.should_stop()) {
        ++epoch;
        s.update(0.4 - 5e-7);  // below the improvement threshold
    }
    EXPECT_EQ(epoch, 15u);
    EXPECT_EQ(s.best_epoch(), 5u);
    EXPECT_EQ(s.best(), 0.4);
}

TEST(Training, ConfigAndEmptySets) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.patience = 60;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    const auto ex = synthetic_examples(2, 64, 1);
    EXPECT_THROW(train<float>({}, ex, NetworkConfig::mini(), TrainConfig{}), std::invalid_argument);
    EXPECT_THROW(train<float>(ex, {}, NetworkConfig::mini(), TrainConfig{}), std::invalid_argument);
}

TEST(Training, LossDescendsAndIsDeterministic) {
    const auto set = synthetic_examples(32, 64, 25);
    const auto val = synthetic_examples(8, 64, 26);
    TrainConfig cfg;
    cfg.max_epochs = 5;
    cfg.patience = 5;
    cfg.learning_rate = 1e-3;
    cfg.seed = 27;
    cfg.deterministic = true;

    // Initial loss: the untrained network (same init) scored batch by batch in train mode.
    ResNet<float> fresh(NetworkConfig::mini());
    fresh.init(cfg.seed);
    double mean = 0;
    for (const auto& e : set) mean += e.target;
    fresh.set_head_bias(static_cast<float>(mean / 32));
    double initial = 0;
    for (std::size_t i = 0; i < set.size(); i += 4) {
        std::vector<const Example*> ptrs;
        Tensor<float> t({4});
        for (std::size_t j = 0; j < 4; ++j) {
            ptrs.push_back(&set[i + j]);
            t[j] = static_cast<float>(set[i + j].target);
        }
        initial += mse_loss(fresh.forward(stack_inputs<float>(ptrs), Mode::train), t).first * 4;
    }
    initial /= 32;

    auto a = train<float>(set, val, NetworkConfig::mini(), cfg);
    ASSERT_EQ(a.history.size(), 5u);
    EXPECT_LT(a.history.back().train_mse, initial);
    for (const auto& r : a.history) EXPECT_TRUE(std::isfinite(r.val_mse));

    auto b = train<float>(set, val, NetworkConfig::mini(), cfg);
    EXPECT_EQ(save_weights(a.net), save_weights(b.net));
    EXPECT_EQ(serialize_history(a.history), serialize_history(b.history));
}

TEST(Training, ConstantTargetIsLearned) {
    auto set = synthetic_examples(12, 64, 28);
    for (auto& e : set) e.target = 0.6;
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    const auto r = train<float>(set, set, NetworkConfig::mini(), cfg);
    // The head bias starts at the mean target, so validation error is tiny from the start.
    EXPECT_LT(r.history.front().val_mse, 1e-3);
}

TEST(Predict, ClampAndSideCheck) {
    EXPECT_EQ(clamp_score(1.3).value(), 1.0);
    EXPECT_EQ(clamp_score(-0.2).value(), 0.0);
    EXPECT_EQ(clamp_score(0.73).value(), 0.73);

    ResNet<float> net(NetworkConfig::mini());
    net.init(29);
    net.set_head_bias(5.0f);
    const auto in = to_model_input(ImageBuffer(64, 64, {100, 50, 20}));
    EXPECT_EQ(predict(net, in).value(), 1.0);
    net.set_head_bias(-5.0f);
    EXPECT_EQ(predict(net, in).value(), 0.0);
    EXPECT_THROW(predict(net, to_model_input(ImageBuffer(32, 32))), ShapeError);
}
