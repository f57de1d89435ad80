#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "numod/types.hpp"

namespace numod {

/// Layer sizes of a generative fully connected network:
/// latent -> hidden1 -> hidden2 -> output.
struct GfcnShape {
    int latent = 5;
    int hidden1 = 10;
    int hidden2 = 20;
    int output = 1;

    bool operator==(const GfcnShape&) const = default;

    std::size_t parameter_count() const {
        return std::size_t(hidden1) * latent + hidden1 + std::size_t(hidden2) * hidden1 + hidden2 + std::size_t(output) * hidden2 + output;
    }
    void validate() const {
        if(latent < 1 || hidden1 < 1 || hidden2 < 1 || output < 1)
            throw Error("gfcn: all layer sizes must be >= 1");
    }
};

/// Weights and biases of one network, stored in a single flat vector so the
/// optimizer can treat them as one parameter group. Matrix views are
/// column-major and laid out as w1, b1, w2, b2, w3, b3.
class GfcnParams {
  public:
    using MatMap = Eigen::Map<Eigen::MatrixXd>;
    using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
    using VecMap = Eigen::Map<Eigen::VectorXd>;
    using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

    GfcnParams() = default;
    explicit GfcnParams(const GfcnShape& shape) : m_shape(shape) {
        shape.validate();
        m_values = Eigen::VectorXd::Zero(Eigen::Index(shape.parameter_count()));
    }

    const GfcnShape& shape() const { return m_shape; }
    Eigen::VectorXd& flat() { return m_values; }
    const Eigen::VectorXd& flat() const { return m_values; }

    MatMap w1() { return {ptr(off_w1()), m_shape.hidden1, m_shape.latent}; }
    VecMap b1() { return {ptr(off_b1()), m_shape.hidden1}; }
    MatMap w2() { return {ptr(off_w2()), m_shape.hidden2, m_shape.hidden1}; }
    VecMap b2() { return {ptr(off_b2()), m_shape.hidden2}; }
    MatMap w3() { return {ptr(off_w3()), m_shape.output, m_shape.hidden2}; }
    VecMap b3() { return {ptr(off_b3()), m_shape.output}; }

    ConstMatMap w1() const { return {ptr(off_w1()), m_shape.hidden1, m_shape.latent}; }
    ConstVecMap b1() const { return {ptr(off_b1()), m_shape.hidden1}; }
    ConstMatMap w2() const { return {ptr(off_w2()), m_shape.hidden2, m_shape.hidden1}; }
    ConstVecMap b2() const { return {ptr(off_b2()), m_shape.hidden2}; }
    ConstMatMap w3() const { return {ptr(off_w3()), m_shape.output, m_shape.hidden2}; }
    ConstVecMap b3() const { return {ptr(off_b3()), m_shape.output}; }

    /// Sum of squared weights, biases excluded.
    double weight_squared_norm() const { return w1().squaredNorm() + w2().squaredNorm() + w3().squaredNorm(); }

    /// Flat 0/1 vector marking weight entries (1) versus biases (0).
    Eigen::VectorXd weight_indicator() const {
        GfcnParams ind(m_shape);
        ind.w1().setOnes();
        ind.w2().setOnes();
        ind.w3().setOnes();
        return ind.m_values;
    }

    bool all_finite() const { return m_values.allFinite(); }

  private:
    std::size_t off_w1() const { return 0; }
    std::size_t off_b1() const { return off_w1() + std::size_t(m_shape.hidden1) * m_shape.latent; }
    std::size_t off_w2() const { return off_b1() + std::size_t(m_shape.hidden1); }
    std::size_t off_b2() const { return off_w2() + std::size_t(m_shape.hidden2) * m_shape.hidden1; }
    std::size_t off_w3() const { return off_b2() + std::size_t(m_shape.hidden2); }
    std::size_t off_b3() const { return off_w3() + std::size_t(m_shape.output) * m_shape.hidden2; }

    double* ptr(std::size_t off) { return m_values.data() + off; }
    const double* ptr(std::size_t off) const { return m_values.data() + off; }

    GfcnShape m_shape;
    Eigen::VectorXd m_values;
};

/// Activations kept for the backward pass; one column per latent vector.
struct GfcnCache {
    Eigen::MatrixXd input;  // latent codes, d x B
    Eigen::MatrixXd pre1;   // W1 u + b1
    Eigen::MatrixXd act1;   // relu(pre1)
    Eigen::MatrixXd pre2;
    Eigen::MatrixXd act2;
    Eigen::MatrixXd output; // sigmoid(W3 act2 + b3), m x B
};

struct GfcnGradients {
    GfcnParams params;
    Eigen::MatrixXd latent; // d x B
};

inline double sigmoid(double z) {
    // keep the result strictly inside (0,1)
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::min(hi, std::max(lo, s));
}

/// Forward pass for a batch of latent codes (one per column).
inline GfcnCache gfcn_forward(const GfcnParams& params, const Eigen::Ref<const Eigen::MatrixXd>& latents) {
    const GfcnShape& s = params.shape();
    if(latents.rows() != s.latent)
        throw Error("gfcn_forward: latent size " + std::to_string(latents.rows()) + " does not match network input " + std::to_string(s.latent));
    GfcnCache c;
    c.input = latents;
    c.pre1 = (params.w1() * latents).colwise() + params.b1();
    c.act1 = c.pre1.cwiseMax(0.0);
    c.pre2 = (params.w2() * c.act1).colwise() + params.b2();
    c.act2 = c.pre2.cwiseMax(0.0);
    c.output = ((params.w3() * c.act2).colwise() + params.b3()).unaryExpr([](double z) { return sigmoid(z); });
    return c;
}

/// Backward pass: gradients of sum(output .* grad_output) with respect to
/// the parameters (summed over the batch) and to each latent code.
/// relu'(0) is taken as 0.
inline GfcnGradients gfcn_backward(const GfcnParams& params, const GfcnCache& cache, const Eigen::Ref<const Eigen::MatrixXd>& grad_output) {
    const GfcnShape& s = params.shape();
    if(grad_output.rows() != s.output || grad_output.cols() != cache.output.cols())
        throw Error("gfcn_backward: grad_output has wrong dimensions");
    GfcnGradients g{GfcnParams(s), Eigen::MatrixXd()};

    const Eigen::MatrixXd d3 = grad_output.cwiseProduct(cache.output.cwiseProduct((1.0 - cache.output.array()).matrix()));
    g.params.w3().noalias() = d3 * cache.act2.transpose();
    g.params.b3() = d3.rowwise().sum();

    Eigen::MatrixXd d2 = params.w3().transpose() * d3;
    d2 = (cache.pre2.array() > 0.0).select(d2, 0.0);
    g.params.w2().noalias() = d2 * cache.act1.transpose();
    g.params.b2() = d2.rowwise().sum();

    Eigen::MatrixXd d1 = params.w2().transpose() * d2;
    d1 = (cache.pre1.array() > 0.0).select(d1, 0.0);
    g.params.w1().noalias() = d1 * cache.input.transpose();
    g.params.b1() = d1.rowwise().sum();

    g.latent = params.w1().transpose() * d1;
    return g;
}

/// Glorot-uniform weights, zero biases; deterministic for a given seed.
inline GfcnParams init_params(const GfcnShape& shape, std::uint64_t seed) {
    GfcnParams p(shape);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](auto&& w) {
        const double bound = std::sqrt(6.0 / double(w.rows() + w.cols()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for(Eigen::Index j = 0; j < w.cols(); ++j)
            for(Eigen::Index i = 0; i < w.rows(); ++i)
                w(i, j) = dist(rng);
    };
    fill(p.w1());
    fill(p.w2());
    fill(p.w3());
    return p;
}

} // namespace numod
