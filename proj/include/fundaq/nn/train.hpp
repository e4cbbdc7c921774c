#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundaq/csv.hpp"
#include "fundaq/image.hpp"
#include "fundaq/nn/adam.hpp"
#include "fundaq/nn/resnet.hpp"
#include "fundaq/rubric.hpp"

namespace fundaq::nn {

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    std::size_t batch_size = 4;
    std::size_t max_epochs = 50;
    std::size_t patience = 10;
    double min_improvement = 1e-6;  // absolute, on validation MSE
    std::uint64_t seed = 42;
    bool deterministic = false;

    void validate() const {
        if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || batch_size == 0 || max_epochs == 0 || patience == 0)
            throw std::invalid_argument("training hyperparameters must be positive");
        if (patience > max_epochs) throw std::invalid_argument("patience must not exceed max_epochs");
    }
};

struct Example {
    ModelInput input;
    double target = 0.0;
};

/// Stacks inputs into [B,3,S,S].
template <typename T>
Tensor<T> stack_inputs(std::span<const Example* const> items) {
    if (items.empty()) throw ShapeError("empty batch");
    const std::size_t side = static_cast<std::size_t>(items.front()->input.side);
    const std::size_t per = 3 * side * side;
    Tensor<T> batch({items.size(), 3, side, side});
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& v = items[i]->input.values;
        if (v.size() != per) throw ShapeError("batch items differ in size");
        std::copy(v.begin(), v.end(), batch.data() + i * per);
    }
    return batch;
}

/// Patience rule: an epoch improves when its metric beats the best so far by
/// more than min_improvement; training stops once `patience` consecutive
/// epochs have not improved.
class EarlyStopping {
public:
    EarlyStopping(std::size_t patience, double min_improvement) : patience_(patience), min_improvement_(min_improvement) {}

    /// Records one epoch's metric. Returns true when it is a new best.
    bool update(double metric) {
        ++epoch_;
        if (metric < best_ - min_improvement_) {
            best_ = metric;
            best_epoch_ = epoch_;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }

    bool should_stop() const { return stale_ >= patience_; }
    double best() const { return best_; }
    std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update

private:
    std::size_t patience_;
    double min_improvement_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t epoch_ = 0;
    std::size_t stale_ = 0;
};

struct EpochRecord {
    std::size_t epoch;  // 1-based
    double train_mse;
    double val_mse;
};

template <typename T>
struct TrainResult {
    ResNet<T> net;  // best-validation weights
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

/// Mean squared error of raw network outputs (infer mode).
template <typename T>
double evaluate_mse(ResNet<T>& net, const std::vector<Example>& set, std::size_t batch_size) {
    double sse = 0.0;
    std::vector<const Example*> ptrs;
    for (const auto& e : set) ptrs.push_back(&e);
    for (std::size_t i = 0; i < ptrs.size(); i += batch_size) {
        const std::size_t n = std::min(batch_size, ptrs.size() - i);
        const auto out = net.forward(stack_inputs<T>(std::span<const Example* const>(ptrs.data() + i, n)), Mode::infer);
        for (std::size_t j = 0; j < n; ++j) {
            const double r = static_cast<double>(out[j]) - ptrs[i + j]->target;
            sse += r * r;
        }
    }
    return sse / static_cast<double>(set.size());
}

template <typename T>
std::vector<Tensor<T>> snapshot(ResNet<T>& net) {
    std::vector<Tensor<T>> s;
    net.for_each_array([&](const std::string&, Tensor<T>& t) { s.push_back(t); });
    return s;
}

template <typename T>
void restore(ResNet<T>& net, const std::vector<Tensor<T>>& s) {
    std::size_t i = 0;
    net.for_each_array([&](const std::string&, Tensor<T>& t) { t = s.at(i++); });
}

/// Mini-batch Adam on MSE with early stopping on validation MSE. The head
/// bias starts at the mean training target. All reductions run in a fixed
/// sequential order, so a given seed reproduces bit-identical weights.
template <typename T>
TrainResult<T> train(const std::vector<Example>& train_set, const std::vector<Example>& val_set, const NetworkConfig& net_cfg,
                     const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) throw std::invalid_argument("training and validation sets must be non-empty");

    ResNet<T> net(net_cfg);
    net.init(cfg.seed);
    double mean_target = 0.0;
    for (const auto& e : train_set) mean_target += e.target;
    net.set_head_bias(static_cast<T>(mean_target / static_cast<double>(train_set.size())));

    AdamState<T> adam;
    EarlyStopping stopper(cfg.patience, cfg.min_improvement);
    Rng order_rng(cfg.seed ^ 0xA0761D6478BD642Full);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult<T> result{net, {}, 0, false};
    std::vector<Tensor<T>> best = snapshot(net);
    std::vector<const Example*> batch_ptrs;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(order));
        double sse = 0.0;
        for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - i);
            batch_ptrs.clear();
            Tensor<T> targets({n});
            for (std::size_t j = 0; j < n; ++j) {
                batch_ptrs.push_back(&train_set[order[i + j]]);
                targets[j] = static_cast<T>(train_set[order[i + j]].target);
            }
            const T loss = compute_gradients(net, stack_inputs<T>(batch_ptrs), targets, cfg.weight_decay);
            sse += static_cast<double>(loss) * static_cast<double>(n);
            adam_step(net, adam, cfg.learning_rate);
        }
        const EpochRecord rec{epoch, sse / static_cast<double>(train_set.size()), evaluate_mse(net, val_set, cfg.batch_size)};
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (stopper.update(rec.val_mse)) best = snapshot(net);
        if (stopper.should_stop()) {
            result.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    restore(net, best);
    result.net = std::move(net);
    result.best_epoch = stopper.best_epoch();
    return result;
}

inline std::string serialize_history(const std::vector<EpochRecord>& history) {
    std::string out = csv::join({"epoch", "train_mse", "val_mse"});
    for (const auto& r : history)
        out += csv::join({std::to_string(r.epoch), csv::full_precision(r.train_mse), csv::full_precision(r.val_mse)});
    return out;
}

inline QualityScore clamp_score(double raw) { return QualityScore(std::clamp(raw, 0.0, 1.0)); }

/// Clamped [0,1] score for one image (infer mode).
template <typename T>
QualityScore predict(ResNet<T>& net, const ModelInput& input) {
    if (static_cast<std::size_t>(input.side) != net.config().input_side)
        throw ShapeError("input side " + std::to_string(input.side) + " does not match network input " +
                         std::to_string(net.config().input_side));
    const Example e{input, 0.0};
    const Example* p = &e;
    const auto out = net.forward(stack_inputs<T>(std::span<const Example* const>(&p, 1)), Mode::infer);
    return clamp_score(static_cast<double>(out[0]));
}

}  // namespace fundaq::nn
