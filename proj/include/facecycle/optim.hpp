#pragma once

#include <cstdint>
#include <vector>

#include <torch/types.h>

namespace facecycle {

struct AdamOptions {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with externally visible moments so they can be checkpointed exactly.
class Adam {
public:
    Adam(std::vector<torch::Tensor> params, AdamOptions options);

    void zero_grad();
    /// Parameters without a gradient are skipped.
    void step();

    void set_lr(double lr) { options_.lr = lr; }
    double lr() const { return options_.lr; }
    const AdamOptions& options() const { return options_; }

    std::int64_t steps() const { return steps_; }
    void set_steps(std::int64_t steps) { steps_ = steps; }
    std::vector<torch::Tensor>& first_moments() { return exp_avg_; }
    std::vector<torch::Tensor>& second_moments() { return exp_avg_sq_; }
    const std::vector<torch::Tensor>& first_moments() const { return exp_avg_; }
    const std::vector<torch::Tensor>& second_moments() const { return exp_avg_sq_; }

private:
    std::vector<torch::Tensor> params_;
    std::vector<torch::Tensor> exp_avg_;
    std::vector<torch::Tensor> exp_avg_sq_;
    AdamOptions options_;
    std::int64_t steps_ = 0;
};

/// Momentum SGD with L2 weight decay in the Caffe formulation:
/// v <- momentum * v + lr * (g + decay * w);  w <- w - v.
class MomentumSgd {
public:
    MomentumSgd(std::vector<torch::Tensor> params, double momentum, double weight_decay);

    void zero_grad();
    void step(double lr);

private:
    std::vector<torch::Tensor> params_;
    std::vector<torch::Tensor> history_;
    double momentum_;
    double weight_decay_;
};

}  // namespace facecycle
