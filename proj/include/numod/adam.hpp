#pragma once

#include <cmath>
#include <cstdint>

#include "numod/types.hpp"

namespace numod {

struct AdamState {
    std::int64_t step = 0;
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(Eigen::Index n, double learning_rate)
        : first_moment(Eigen::VectorXd::Zero(n)), second_moment(Eigen::VectorXd::Zero(n)), lr(learning_rate) {}

    Eigen::Index size() const { return first_moment.size(); }
};

/// One bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads) {
    if(params.size() != grads.size() || params.size() != state.size())
        throw Error("adam_step: length mismatch (params " + std::to_string(params.size()) + ", grads " + std::to_string(grads.size()) + ", state " + std::to_string(state.size()) + ")");
    ++state.step;
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
    params.array() -= state.lr * (state.first_moment.array() / c1) / ((state.second_moment.array() / c2).sqrt() + state.eps);
}

} // namespace numod
