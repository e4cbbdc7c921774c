#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "fundaq/nn/tensor.hpp"
#include "fundaq/rng.hpp"

namespace fundaq::nn {

enum class Mode { train, infer };

/// A trainable array with its accumulated gradient.
template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;
    bool decay = false;  // receives the L2 weight-decay term

    Param() = default;
    Param(Shape shape, bool decay) : value(shape), grad(shape), decay(decay) {}
    void zero_grad() { grad.fill(T{}); }
};

struct Conv2dGeometry {
    std::size_t in_ch, out_ch, kernel, stride, pad;
    std::size_t out_extent(std::size_t in) const {
        if (in + 2 * pad < kernel) throw ShapeError("convolution kernel larger than padded input");
        return (in + 2 * pad - kernel) / stride + 1;
    }
};

namespace detail {

template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, const Conv2dGeometry& g, std::size_t Ho,
            std::size_t Wo, T* col) {
    const std::size_t k = g.kernel;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* row = col + ((c * k + ky) * k + kx) * Ho * Wo;
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    T* dst = row + oy * Wo;
                    if (iy < 0 || iy >= static_cast<long>(H)) {
                        std::fill(dst, dst + Wo, T{});
                        continue;
                    }
                    const T* src = x + (c * H + static_cast<std::size_t>(iy)) * W;
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(W)) ? T{} : src[ix];
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W, const Conv2dGeometry& g, std::size_t Ho,
                std::size_t Wo, T* x) {
    const std::size_t k = g.kernel;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = col + ((c * k + ky) * k + kx) * Ho * Wo;
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                    T* dst = x + (c * H + static_cast<std::size_t>(iy)) * W;
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix >= 0 && ix < static_cast<long>(W)) dst[ix] += row[oy * Wo + ox];
                    }
                }
            }
}

}  // namespace detail

/// Cross-correlation with zero padding. input [B,Cin,H,W], weights
/// [Cout,Cin,k,k], optional bias [Cout] -> [B,Cout,H',W'].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const std::type_identity_t<Tensor<T>>* bias, std::size_t stride,
                 std::size_t padding) {
    expect_rank(input, 4, "conv2d input");
    expect_rank(weights, 4, "conv2d weights");
    if (weights.dim(2) != weights.dim(3)) throw ShapeError("conv2d kernel must be square");
    if (weights.dim(1) != input.dim(1)) throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) + ", weights " + shape_str(weights.shape()));
    if (stride == 0) throw ShapeError("conv2d stride must be positive");
    const Conv2dGeometry g{weights.dim(1), weights.dim(0), weights.dim(2), stride, padding};
    if (bias) expect_shape(*bias, {g.out_ch}, "conv2d bias");
    const std::size_t B = input.dim(0), H = input.dim(2), W = input.dim(3);
    const std::size_t Ho = g.out_extent(H), Wo = g.out_extent(W);
    const std::size_t ckk = g.in_ch * g.kernel * g.kernel, hw = Ho * Wo;

    Tensor<T> out({B, g.out_ch, Ho, Wo});
    std::vector<T> col(ckk * hw);
    for (std::size_t n = 0; n < B; ++n) {
        const T* x = input.data() + n * g.in_ch * H * W;
        T* y = out.data() + n * g.out_ch * hw;
        detail::im2col(x, g.in_ch, H, W, g, Ho, Wo, col.data());
        gemm_nn(g.out_ch, hw, ckk, weights.data(), col.data(), y, false);
        if (bias)
            for (std::size_t co = 0; co < g.out_ch; ++co)
                for (std::size_t i = 0; i < hw; ++i) y[co * hw + i] += (*bias)[co];
    }
    return out;
}

/// Gradients of conv2d. grad_weights and grad_bias are accumulated into.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out, std::size_t stride,
                          std::size_t padding, Tensor<T>& grad_weights, std::type_identity_t<Tensor<T>>* grad_bias) {
    const Conv2dGeometry g{weights.dim(1), weights.dim(0), weights.dim(2), stride, padding};
    const std::size_t B = input.dim(0), H = input.dim(2), W = input.dim(3);
    const std::size_t Ho = g.out_extent(H), Wo = g.out_extent(W);
    expect_shape(grad_out, {B, g.out_ch, Ho, Wo}, "conv2d grad_out");
    const std::size_t ckk = g.in_ch * g.kernel * g.kernel, hw = Ho * Wo;

    Tensor<T> grad_in(input.shape());
    std::vector<T> col(ckk * hw), gcol(ckk * hw);
    for (std::size_t n = 0; n < B; ++n) {
        const T* x = input.data() + n * g.in_ch * H * W;
        const T* gy = grad_out.data() + n * g.out_ch * hw;
        detail::im2col(x, g.in_ch, H, W, g, Ho, Wo, col.data());
        gemm_nt(g.out_ch, ckk, hw, gy, col.data(), grad_weights.data(), true);
        gemm_tn(ckk, hw, g.out_ch, weights.data(), gy, gcol.data(), false);
        detail::col2im_add(gcol.data(), g.in_ch, H, W, g, Ho, Wo, grad_in.data() + n * g.in_ch * H * W);
        if (grad_bias)
            for (std::size_t co = 0; co < g.out_ch; ++co) {
                T acc{};
                for (std::size_t i = 0; i < hw; ++i) acc += gy[co * hw + i];
                (*grad_bias)[co] += acc;
            }
    }
    return grad_in;
}

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride, std::size_t pad, bool bias)
        : stride_(stride), pad_(pad), weight_({out_ch, in_ch, kernel, kernel}, true) {
        if (bias) bias_.emplace(Shape{out_ch}, false);
    }

    /// Normal draws with std sqrt(2 / fan_in).
    void init(Rng& rng) {
        const double fan_in = static_cast<double>(weight_.value.dim(1) * weight_.value.dim(2) * weight_.value.dim(3));
        const double std = std::sqrt(2.0 / fan_in);
        for (auto& w : weight_.value.values()) w = static_cast<T>(rng.normal() * std);
        if (bias_) bias_->value.fill(T{});
    }

    Tensor<T> forward(const Tensor<T>& x) {
        input_ = x;
        return conv2d(x, weight_.value, bias_ ? &bias_->value : nullptr, stride_, pad_);
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        return conv2d_backward(input_, weight_.value, gy, stride_, pad_, weight_.grad, bias_ ? &bias_->grad : nullptr);
    }

    template <typename F>
    void for_each_param(const std::string& prefix, F&& f) {
        f(prefix + "weight", weight_);
        if (bias_) f(prefix + "bias", *bias_);
    }

    Param<T>& weight() { return weight_; }

private:
    std::size_t stride_ = 1, pad_ = 0;
    Param<T> weight_;
    std::optional<Param<T>> bias_;
    Tensor<T> input_;
};

struct BatchNormSettings {
    double eps = 1e-5;
    double momentum = 0.1;
};

/// Running statistics of a batch-norm layer.
template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    explicit BatchNormState(std::size_t channels = 1) : running_mean({channels}, T{0}), running_var({channels}, T{1}) {}
};

/// Values cached by a train-mode forward pass for the backward pass.
template <typename T>
struct BatchNormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
};

/// Per-channel normalization of [B,C,H,W]. Train mode uses batch statistics
/// (biased variance) and folds the unbiased variance into the running
/// estimate; infer mode uses the running estimates.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormState<T>& state,
                      Mode mode, const BatchNormSettings& s = {}, BatchNormCache<T>* cache = nullptr) {
    expect_rank(input, 4, "batchnorm2d input");
    const std::size_t B = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
    expect_shape(gamma, {C}, "batchnorm2d gamma");
    expect_shape(beta, {C}, "batchnorm2d beta");
    expect_shape(state.running_mean, {C}, "batchnorm2d running_mean");
    expect_shape(state.running_var, {C}, "batchnorm2d running_var");
    const std::size_t N = B * HW;
    if (N == 0) throw ShapeError("batchnorm2d on an empty batch");

    Tensor<T> out(input.shape());
    if (cache) {
        cache->xhat = Tensor<T>(input.shape());
        cache->inv_std.assign(C, T{});
    }
    for (std::size_t c = 0; c < C; ++c) {
        T mean, var;
        if (mode == Mode::train) {
            T sum{};
            for (std::size_t n = 0; n < B; ++n) {
                const T* p = input.data() + (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) sum += p[i];
            }
            mean = sum / static_cast<T>(N);
            T sq{};
            for (std::size_t n = 0; n < B; ++n) {
                const T* p = input.data() + (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) sq += (p[i] - mean) * (p[i] - mean);
            }
            var = sq / static_cast<T>(N);
            const T unbiased = N > 1 ? sq / static_cast<T>(N - 1) : var;
            const T m = static_cast<T>(s.momentum);
            state.running_mean[c] = (T{1} - m) * state.running_mean[c] + m * mean;
            state.running_var[c] = (T{1} - m) * state.running_var[c] + m * unbiased;
        } else {
            mean = state.running_mean[c];
            var = state.running_var[c];
        }
        const T inv_std = T{1} / std::sqrt(var + static_cast<T>(s.eps));
        if (cache) cache->inv_std[c] = inv_std;
        for (std::size_t n = 0; n < B; ++n) {
            const std::size_t off = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                const T xh = (input[off + i] - mean) * inv_std;
                if (cache) cache->xhat[off + i] = xh;
                out[off + i] = xh * gamma[c] + beta[c];
            }
        }
    }
    return out;
}

/// Train-mode batch-norm gradient; gamma/beta gradients are accumulated.
template <typename T>
Tensor<T> batchnorm2d_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma, const BatchNormCache<T>& cache,
                               Tensor<T>& grad_gamma, Tensor<T>& grad_beta) {
    const std::size_t B = grad_out.dim(0), C = grad_out.dim(1), HW = grad_out.dim(2) * grad_out.dim(3);
    const T N = static_cast<T>(B * HW);
    Tensor<T> grad_in(grad_out.shape());
    for (std::size_t c = 0; c < C; ++c) {
        T sum_dy{}, sum_dy_xhat{};
        for (std::size_t n = 0; n < B; ++n) {
            const std::size_t off = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                sum_dy += grad_out[off + i];
                sum_dy_xhat += grad_out[off + i] * cache.xhat[off + i];
            }
        }
        grad_gamma[c] += sum_dy_xhat;
        grad_beta[c] += sum_dy;
        const T k = gamma[c] * cache.inv_std[c] / N;
        for (std::size_t n = 0; n < B; ++n) {
            const std::size_t off = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i)
                grad_in[off + i] = k * (N * grad_out[off + i] - sum_dy - cache.xhat[off + i] * sum_dy_xhat);
        }
    }
    return grad_in;
}

template <typename T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(std::size_t channels)
        : gamma_({channels}, false), beta_({channels}, false), state_(channels) {
        gamma_.value.fill(T{1});
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        mode_ = mode;
        return batchnorm2d(x, gamma_.value, beta_.value, state_, mode, settings_, mode == Mode::train ? &cache_ : nullptr);
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (mode_ != Mode::train) throw std::logic_error("batchnorm backward requires a train-mode forward");
        return batchnorm2d_backward(gy, gamma_.value, cache_, gamma_.grad, beta_.grad);
    }

    template <typename F>
    void for_each_param(const std::string& prefix, F&& f) {
        f(prefix + "weight", gamma_);
        f(prefix + "bias", beta_);
    }
    template <typename F>
    void for_each_buffer(const std::string& prefix, F&& f) {
        f(prefix + "running_mean", state_.running_mean);
        f(prefix + "running_var", state_.running_var);
    }

    Param<T>& gamma() { return gamma_; }
    Param<T>& beta() { return beta_; }
    BatchNormState<T>& state() { return state_; }

private:
    Param<T> gamma_, beta_;
    BatchNormState<T> state_;
    BatchNormSettings settings_;
    BatchNormCache<T> cache_;
    Mode mode_ = Mode::infer;
};

template <typename T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> y = x;
        for (auto& v : y.values()) v = v > T{} ? v : T{};
        output_ = y;
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) const {
        Tensor<T> gx = gy;
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (!(output_[i] > T{})) gx[i] = T{};
        return gx;
    }

private:
    Tensor<T> output_;
};

/// Max pooling with -inf padding.
template <typename T>
class MaxPool2d {
public:
    MaxPool2d(std::size_t kernel = 3, std::size_t stride = 2, std::size_t pad = 1) : k_(kernel), s_(stride), p_(pad) {}

    Tensor<T> forward(const Tensor<T>& x) {
        expect_rank(x, 4, "maxpool input");
        in_shape_ = x.shape();
        const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const Conv2dGeometry g{C, C, k_, s_, p_};
        const std::size_t Ho = g.out_extent(H), Wo = g.out_extent(W);
        Tensor<T> y({B, C, Ho, Wo});
        argmax_.assign(y.size(), 0);
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t oy = 0; oy < Ho; ++oy)
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                        T best = -std::numeric_limits<T>::infinity();
                        std::size_t best_i = 0;
                        for (std::size_t ky = 0; ky < k_; ++ky) {
                            const long iy = static_cast<long>(oy * s_ + ky) - static_cast<long>(p_);
                            if (iy < 0 || iy >= static_cast<long>(H)) continue;
                            for (std::size_t kx = 0; kx < k_; ++kx) {
                                const long ix = static_cast<long>(ox * s_ + kx) - static_cast<long>(p_);
                                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                const std::size_t idx = ((n * C + c) * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix);
                                if (x[idx] > best) {
                                    best = x[idx];
                                    best_i = idx;
                                }
                            }
                        }
                        const std::size_t o = ((n * C + c) * Ho + oy) * Wo + ox;
                        y[o] = best;
                        argmax_[o] = best_i;
                    }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) const {
        Tensor<T> gx(in_shape_);
        for (std::size_t o = 0; o < gy.size(); ++o) gx[argmax_[o]] += gy[o];
        return gx;
    }

private:
    std::size_t k_, s_, p_;
    Shape in_shape_;
    std::vector<std::size_t> argmax_;
};

/// [B,C,H,W] -> [B,C], arithmetic mean per channel.
template <typename T>
class GlobalAvgPool {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        expect_rank(x, 4, "global pool input");
        in_shape_ = x.shape();
        const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
        Tensor<T> y({B, C});
        for (std::size_t i = 0; i < B * C; ++i) {
            T acc{};
            for (std::size_t j = 0; j < HW; ++j) acc += x[i * HW + j];
            y[i] = acc / static_cast<T>(HW);
        }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) const {
        Tensor<T> gx(in_shape_);
        const std::size_t HW = in_shape_[2] * in_shape_[3];
        for (std::size_t i = 0; i < gy.size(); ++i)
            for (std::size_t j = 0; j < HW; ++j) gx[i * HW + j] = gy[i] / static_cast<T>(HW);
        return gx;
    }

private:
    Shape in_shape_;
};

/// y = x W^T + b with W [out,in].
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out) : weight_({out, in}, true), bias_({out}, false) {}

    void init(Rng& rng, double std) {
        for (auto& w : weight_.value.values()) w = static_cast<T>(rng.normal() * std);
        bias_.value.fill(T{});
    }

    Tensor<T> forward(const Tensor<T>& x) {
        expect_rank(x, 2, "linear input");
        if (x.dim(1) != weight_.value.dim(1)) throw ShapeError("linear input width mismatch");
        input_ = x;
        const std::size_t B = x.dim(0), out = weight_.value.dim(0);
        Tensor<T> y({B, out});
        gemm_nt(B, out, x.dim(1), x.data(), weight_.value.data(), y.data(), false);
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t o = 0; o < out; ++o) y[n * out + o] += bias_.value[o];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const std::size_t B = input_.dim(0), in = input_.dim(1), out = weight_.value.dim(0);
        gemm_tn(out, in, B, gy.data(), input_.data(), weight_.grad.data(), true);
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t o = 0; o < out; ++o) bias_.grad[o] += gy[n * out + o];
        Tensor<T> gx(input_.shape());
        gemm_nn(B, in, out, gy.data(), weight_.value.data(), gx.data(), false);
        return gx;
    }

    template <typename F>
    void for_each_param(const std::string& prefix, F&& f) {
        f(prefix + "weight", weight_);
        f(prefix + "bias", bias_);
    }

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    Param<T> weight_, bias_;
    Tensor<T> input_;
};

}  // namespace fundaq::nn
