#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundaq/nn/layers.hpp"

namespace fundaq::nn {

struct NetworkConfig {
    std::size_t input_side = 512;
    std::size_t stem_channels = 64;
    std::vector<std::size_t> blocks{2, 2, 2, 2};
    std::vector<std::size_t> widths{64, 128, 256, 512};

    /// 18-layer residual configuration.
    static NetworkConfig canonical() { return {}; }
    /// Desk-scale profile for training runs on CPU.
    static NetworkConfig mini() { return {64, 8, {1, 1}, {8, 16}}; }

    void validate() const {
        if (input_side == 0 || stem_channels == 0) throw std::invalid_argument("network sizes must be positive");
        if (blocks.empty() || blocks.size() != widths.size())
            throw std::invalid_argument("network needs one width per stage");
        for (std::size_t i = 0; i < blocks.size(); ++i)
            if (blocks[i] == 0 || widths[i] == 0) throw std::invalid_argument("stage block counts and widths must be positive");
    }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Two 3x3 conv/batch-norm pairs with an identity or 1x1-projection shortcut.
template <typename T>
class BasicBlock {
public:
    BasicBlock(std::size_t in, std::size_t out, std::size_t stride)
        : conv1_(in, out, 3, stride, 1, false), bn1_(out), conv2_(out, out, 3, 1, 1, false), bn2_(out) {
        if (stride != 1 || in != out) {
            down_conv_.emplace(in, out, 1, stride, 0, false);
            down_bn_.emplace(out);
        }
    }

    void init(Rng& rng) {
        conv1_.init(rng);
        conv2_.init(rng);
        if (down_conv_) down_conv_->init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x), mode));
        h = bn2_.forward(conv2_.forward(h), mode);
        if (down_conv_) {
            const Tensor<T> sc = down_bn_->forward(down_conv_->forward(x), mode);
            for (std::size_t i = 0; i < h.size(); ++i) h[i] += sc[i];
        } else {
            for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
        }
        return relu_out_.forward(h);
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const Tensor<T> g = relu_out_.backward(gy);
        Tensor<T> gx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(g)))));
        const Tensor<T> gsc = down_conv_ ? down_conv_->backward(down_bn_->backward(g)) : g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gsc[i];
        return gx;
    }

    template <typename F>
    void for_each_param(const std::string& prefix, F&& f) {
        conv1_.for_each_param(prefix + "conv1.", f);
        bn1_.for_each_param(prefix + "bn1.", f);
        conv2_.for_each_param(prefix + "conv2.", f);
        bn2_.for_each_param(prefix + "bn2.", f);
        if (down_conv_) {
            down_conv_->for_each_param(prefix + "downsample.0.", f);
            down_bn_->for_each_param(prefix + "downsample.1.", f);
        }
    }
    template <typename F>
    void for_each_buffer(const std::string& prefix, F&& f) {
        bn1_.for_each_buffer(prefix + "bn1.", f);
        bn2_.for_each_buffer(prefix + "bn2.", f);
        if (down_bn_) down_bn_->for_each_buffer(prefix + "downsample.1.", f);
    }

private:
    Conv2d<T> conv1_;
    BatchNorm2d<T> bn1_;
    ReLU<T> relu1_;
    Conv2d<T> conv2_;
    BatchNorm2d<T> bn2_;
    std::optional<Conv2d<T>> down_conv_;
    std::optional<BatchNorm2d<T>> down_bn_;
    ReLU<T> relu_out_;
};

/// Residual regression network: 7x7/2 stem, 3x3/2 max pool, residual
/// stages, global average pool, single-output affine head. Array names follow
/// the torchvision ResNet state-dict layout so backbone weights can be imported.
template <typename T>
class ResNet {
public:
    explicit ResNet(NetworkConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        stem_conv_ = Conv2d<T>(3, cfg_.stem_channels, 7, 2, 3, false);
        stem_bn_ = BatchNorm2d<T>(cfg_.stem_channels);
        std::size_t in = cfg_.stem_channels;
        for (std::size_t s = 0; s < cfg_.blocks.size(); ++s) {
            std::vector<BasicBlock<T>> stage;
            for (std::size_t b = 0; b < cfg_.blocks[s]; ++b) {
                const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
                stage.emplace_back(in, cfg_.widths[s], stride);
                in = cfg_.widths[s];
            }
            stages_.push_back(std::move(stage));
        }
        fc_ = Linear<T>(in, 1);
    }

    const NetworkConfig& config() const { return cfg_; }

    /// Fan-in scaled normal convolution weights, unit gamma, zero beta, small head.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        stem_conv_.init(rng);
        for (auto& stage : stages_)
            for (auto& block : stage) block.init(rng);
        fc_.init(rng, 0.01);
    }

    void set_head_bias(T b) { fc_.bias().value[0] = b; }

    /// [B,3,S,S] -> [B] raw (unclamped) scores.
    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        expect_rank(x, 4, "network input");
        if (x.dim(1) != 3 || x.dim(2) != cfg_.input_side || x.dim(3) != cfg_.input_side)
            throw ShapeError("network input: expected [B,3," + std::to_string(cfg_.input_side) + "," +
                             std::to_string(cfg_.input_side) + "], got " + shape_str(x.shape()));
        Tensor<T> h = pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x), mode)));
        for (auto& stage : stages_)
            for (auto& block : stage) h = block.forward(h, mode);
        const Tensor<T> y = fc_.forward(gap_.forward(h));
        return Tensor<T>({x.dim(0)}, y.values());
    }

    /// Back-propagates d(loss)/d(output) [B] from the last train-mode forward;
    /// parameter gradients are accumulated.
    void backward(const Tensor<T>& grad_out) {
        Tensor<T> g({grad_out.size(), 1}, grad_out.values());
        g = gap_.backward(fc_.backward(g));
        for (auto s = stages_.rbegin(); s != stages_.rend(); ++s)
            for (auto b = s->rbegin(); b != s->rend(); ++b) g = b->backward(g);
        stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(pool_.backward(g))));
    }

    void zero_grad() {
        for_each_param([](const std::string&, Param<T>& p) { p.zero_grad(); });
    }

    /// Visits every trainable array in a fixed order.
    template <typename F>
    void for_each_param(F&& f) {
        stem_conv_.for_each_param("conv1.", f);
        stem_bn_.for_each_param("bn1.", f);
        for (std::size_t s = 0; s < stages_.size(); ++s)
            for (std::size_t b = 0; b < stages_[s].size(); ++b)
                stages_[s][b].for_each_param(block_prefix(s, b), f);
        fc_.for_each_param("fc.", f);
    }

    /// Visits batch-norm running statistics.
    template <typename F>
    void for_each_buffer(F&& f) {
        stem_bn_.for_each_buffer("bn1.", f);
        for (std::size_t s = 0; s < stages_.size(); ++s)
            for (std::size_t b = 0; b < stages_[s].size(); ++b)
                stages_[s][b].for_each_buffer(block_prefix(s, b), f);
    }

    /// Every persisted array (parameters then buffers).
    template <typename F>
    void for_each_array(F&& f) {
        for_each_param([&](const std::string& n, Param<T>& p) { f(n, p.value); });
        for_each_buffer([&](const std::string& n, Tensor<T>& t) { f(n, t); });
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for_each_param([&](const std::string&, Param<T>& p) { n += p.value.size(); });
        return n;
    }

private:
    static std::string block_prefix(std::size_t s, std::size_t b) {
        return "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
    }

    NetworkConfig cfg_;
    Conv2d<T> stem_conv_;
    BatchNorm2d<T> stem_bn_;
    ReLU<T> stem_relu_;
    MaxPool2d<T> pool_{3, 2, 1};
    std::vector<std::vector<BasicBlock<T>>> stages_;
    GlobalAvgPool<T> gap_;
    Linear<T> fc_;
};

/// Mean squared error and its gradient 2(pred - target)/B.
template <typename T>
std::pair<T, Tensor<T>> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape() || pred.rank() != 1)
        throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    const T B = static_cast<T>(pred.size());
    T loss{};
    Tensor<T> grad(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T r = pred[i] - target[i];
        loss += r * r;
        grad[i] = T{2} * r / B;
    }
    return {loss / B, std::move(grad)};
}

/// Forward (train mode), MSE, backward. Gradients are reset first, and the
/// L2 term weight_decay * w is added to every decayed array (convolution and
/// head weights). Returns the MSE (without the decay term).
template <typename T>
T compute_gradients(ResNet<T>& net, const Tensor<T>& batch, const Tensor<T>& targets, double weight_decay) {
    net.zero_grad();
    const Tensor<T> pred = net.forward(batch, Mode::train);
    auto [loss, grad] = mse_loss(pred, targets);
    net.backward(grad);
    if (weight_decay != 0.0) {
        const T wd = static_cast<T>(weight_decay);
        net.for_each_param([wd](const std::string&, Param<T>& p) {
            if (!p.decay) return;
            for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += wd * p.value[i];
        });
    }
    return loss;
}

}  // namespace fundaq::nn
