#include "facecycle/optim.hpp"

#include <cmath>

#include <torch/torch.h>

namespace facecycle {

Adam::Adam(std::vector<torch::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        exp_avg_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
        exp_avg_sq_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
    }
}

void Adam::zero_grad() {
    for (auto& p : params_)
        if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
}

void Adam::step() {
    torch::NoGradGuard no_grad;
    ++steps_;
    const double bias1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double bias2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    const double step_size = options_.lr / bias1;
    const double bias2_sqrt = std::sqrt(bias2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.grad().defined()) continue;
        const auto& g = p.grad();
        exp_avg_[i].mul_(options_.beta1).add_(g, 1.0 - options_.beta1);
        exp_avg_sq_[i].mul_(options_.beta2).addcmul_(g, g, 1.0 - options_.beta2);
        auto denom = (exp_avg_sq_[i].sqrt() / bias2_sqrt).add_(options_.eps);
        p.addcdiv_(exp_avg_[i], denom, -step_size);
    }
}

MomentumSgd::MomentumSgd(std::vector<torch::Tensor> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    for (const auto& p : params_) history_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
}

void MomentumSgd::zero_grad() {
    for (auto& p : params_)
        if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
}

void MomentumSgd::step(double lr) {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        auto update = p.grad().defined() ? p.grad().clone() : torch::zeros_like(p);
        if (weight_decay_ != 0.0) update.add_(p, weight_decay_);
        history_[i].mul_(momentum_).add_(update, lr);
        p.sub_(history_[i]);
    }
}

}  // namespace facecycle
