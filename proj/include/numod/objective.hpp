#pragma once

#include <cmath>
#include <string>

#include "numod/gfcn.hpp"
#include "numod/types.hpp"

namespace numod {

/// How the invariant residual is turned into the prior map.
///  - distance: M = sigmoid(|s - sigma|), always in [0.5,1). The default;
///    M >= 0.5 means the L1 split always prefers C = 0.
///  - shifted:  M = sigmoid(|s| - sigma), below 0.5 where |s| < sigma, so
///    small invariant residuals are attributed to illumination.
enum class PriorMode { distance, shifted };

inline const char* to_string(PriorMode m) { return m == PriorMode::shifted ? "shifted" : "distance"; }

inline PriorMode prior_mode_from_string(const std::string& s) {
    if(s == "distance")
        return PriorMode::distance;
    if(s == "shifted")
        return PriorMode::shifted;
    throw Error("unknown prior mode '" + s + "' (expected distance or shifted)");
}

/// Per-pixel weight steering the split of the residual into illumination
/// (C) and foreground (F).
struct PriorMap {
    Eigen::VectorXd m_values;
    double sigma = 0.0;
};

inline double prior_argument(double s, double sigma, PriorMode mode) {
    return mode == PriorMode::distance ? std::abs(s - sigma) : std::abs(s) - sigma;
}

// d(argument)/ds, with sign(0) = 0
inline double prior_argument_slope(double s, double sigma, PriorMode mode) {
    const double v = mode == PriorMode::distance ? s - sigma : s;
    return double(v > 0.0) - double(v < 0.0);
}

inline PriorMap compute_prior_map(const Eigen::Ref<const Eigen::VectorXd>& s_inv, double sigma, PriorMode mode = PriorMode::distance) {
    if(!(sigma >= 0.0))
        throw Error("compute_prior_map: sigma must be >= 0");
    PriorMap pm;
    pm.sigma = sigma;
    pm.m_values = s_inv.unaryExpr([sigma, mode](double s) { return 1.0 / (1.0 + std::exp(-prior_argument(s, sigma, mode))); });
    return pm;
}

/// Population standard deviation of all entries.
inline double population_std(const Eigen::Ref<const Eigen::MatrixXd>& v) {
    if(v.size() == 0)
        return 0.0;
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / double(v.size()));
}

namespace objective_detail {

inline double sign(double v) { return double(v > 0.0) - double(v < 0.0); }

inline void check_same(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b, const char* what) {
    if(a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(std::string(what) + ": dimension mismatch");
}

/// Repeats each row of a spatial map `channels` times (interleaved layout).
inline Eigen::MatrixXd broadcast_channels(const Eigen::Ref<const Eigen::MatrixXd>& spatial, int channels) {
    if(channels == 1)
        return spatial;
    Eigen::MatrixXd out(spatial.rows() * channels, spatial.cols());
    for(Eigen::Index j = 0; j < spatial.cols(); ++j)
        for(Eigen::Index p = 0; p < spatial.rows(); ++p)
            out.col(j).segment(p * channels, channels).setConstant(spatial(p, j));
    return out;
}

} // namespace objective_detail

/// Sum of absolute reconstruction errors of both networks. Columns are frames.
inline double loss_reconst(const Eigen::Ref<const Eigen::MatrixXd>& frames, const Eigen::Ref<const Eigen::MatrixXd>& invariant_frames,
                           const Eigen::Ref<const Eigen::MatrixXd>& b_outputs, const Eigen::Ref<const Eigen::MatrixXd>& b_inv_outputs) {
    objective_detail::check_same(frames, b_outputs, "loss_reconst");
    objective_detail::check_same(invariant_frames, b_inv_outputs, "loss_reconst");
    return (frames - b_outputs).cwiseAbs().sum() + (invariant_frames - b_inv_outputs).cwiseAbs().sum();
}

/// sum_i M_i^T |C_i| + (1 - M_i)^T |F_i| with M broadcast over channels.
inline double loss_decomp(const Eigen::Ref<const Eigen::MatrixXd>& prior_maps, const Eigen::Ref<const Eigen::MatrixXd>& c, const Eigen::Ref<const Eigen::MatrixXd>& f, int channels) {
    objective_detail::check_same(c, f, "loss_decomp");
    if(prior_maps.rows() * channels != c.rows() || prior_maps.cols() != c.cols())
        throw Error("loss_decomp: prior map does not broadcast onto C/F");
    const Eigen::MatrixXd m = objective_detail::broadcast_channels(prior_maps, channels);
    return (m.array() * c.array().abs()).sum() + ((1.0 - m.array()) * f.array().abs()).sum();
}

/// lambda/2 (|W1|^2 + |W2|^2), biases excluded.
inline double loss_reg(const GfcnParams& net1, const GfcnParams& net2, double lambda) {
    return lambda * (0.5 * net1.weight_squared_norm() + 0.5 * net2.weight_squared_norm());
}

struct LossTerms {
    double reconst = 0.0;
    double decomp = 0.0;
    double reg = 0.0;

    /// Batch objective; the online objective drops the weight decay term.
    double total(bool online = false) const { return reconst + decomp + (online ? 0.0 : reg); }
};

/// Inputs of the objective for a set of frames, one column per frame.
struct ObjectiveInputs {
    Eigen::MatrixXd frames;           // m x B
    Eigen::MatrixXd invariant_frames; // P x B
    Eigen::VectorXd sigma;            // per-frame std of the invariant image
    Eigen::MatrixXd u1;               // d x B
    Eigen::MatrixXd u2;               // d x B
    Eigen::MatrixXd c;                // m x B
    int channels = 3;
    PriorMode prior_mode = PriorMode::distance;
};

/// Everything the forward pass produces, kept for decomposition output.
struct ObjectiveForward {
    GfcnCache net1;
    GfcnCache net2;
    Eigen::MatrixXd sparse;      // S = I - B
    Eigen::MatrixXd sparse_inv;  // S_inv = I_inv - B_inv
    Eigen::MatrixXd prior;       // M, P x B
    Eigen::MatrixXd foreground;  // F = S - C
    LossTerms terms;
};

struct ObjectiveGradients {
    GfcnParams net1;
    GfcnParams net2;
    Eigen::MatrixXd u1;
    Eigen::MatrixXd u2;
    Eigen::MatrixXd c;
};

inline ObjectiveForward objective_forward(const GfcnParams& net1, const GfcnParams& net2, const ObjectiveInputs& in, double lambda) {
    const Eigen::Index cols = in.frames.cols();
    if(in.invariant_frames.cols() != cols || in.u1.cols() != cols || in.u2.cols() != cols || in.c.cols() != cols || in.sigma.size() != cols)
        throw Error("objective: inconsistent frame counts");
    if(in.invariant_frames.rows() * in.channels != in.frames.rows() || in.c.rows() != in.frames.rows())
        throw Error("objective: inconsistent image sizes");
    if(net1.shape().output != in.frames.rows() || net2.shape().output != in.invariant_frames.rows())
        throw Error("objective: network output size does not match images");

    ObjectiveForward fw;
    fw.net1 = gfcn_forward(net1, in.u1);
    fw.net2 = gfcn_forward(net2, in.u2);
    fw.sparse = in.frames - fw.net1.output;
    fw.sparse_inv = in.invariant_frames - fw.net2.output;
    fw.prior.resize(fw.sparse_inv.rows(), cols);
    for(Eigen::Index j = 0; j < cols; ++j)
        fw.prior.col(j) = compute_prior_map(fw.sparse_inv.col(j), in.sigma[j], in.prior_mode).m_values;
    fw.foreground = fw.sparse - in.c;

    fw.terms.reconst = fw.sparse.cwiseAbs().sum() + fw.sparse_inv.cwiseAbs().sum();
    double decomp = 0.0;
    for(Eigen::Index j = 0; j < cols; ++j)
        for(Eigen::Index p = 0; p < fw.prior.rows(); ++p) {
            const double m = fw.prior(p, j);
            for(int k = 0; k < in.channels; ++k) {
                const Eigen::Index i = p * in.channels + k;
                decomp += m * std::abs(in.c(i, j)) + (1.0 - m) * std::abs(fw.foreground(i, j));
            }
        }
    fw.terms.decomp = decomp;
    fw.terms.reg = loss_reg(net1, net2, lambda);
    return fw;
}

/// Gradients of the objective (|x| has subgradient 0 at 0). When
/// `online` is set the weight decay term is left out and the network
/// gradients are not needed by the caller, though they are still returned.
inline ObjectiveGradients objective_backward(const GfcnParams& net1, const GfcnParams& net2, const ObjectiveInputs& in, const ObjectiveForward& fw, double lambda, bool online = false) {
    using objective_detail::sign;
    const int ch = in.channels;
    const Eigen::Index cols = fw.sparse.cols();
    const Eigen::Index pixels = fw.prior.rows();

    // Decomposition coupling. F = I - B - C, so
    //   dL/dC = M sign(C) - (1 - M) sign(F)
    //   dL/dB = -sign(S) - (1 - M) sign(F)
    //   dL/dM = |C| - |F|, summed over channels since M is shared,
    // and M = sigmoid(a(S_inv)) with S_inv = I_inv - B_inv gives
    //   dM/dB_inv = -M (1 - M) a'(S_inv).
    ObjectiveGradients g;
    g.c.resize(fw.sparse.rows(), cols);
    Eigen::MatrixXd grad_b(fw.sparse.rows(), cols);
    Eigen::MatrixXd grad_binv(pixels, cols);
    for(Eigen::Index j = 0; j < cols; ++j) {
        const double sigma = in.sigma[j];
        for(Eigen::Index p = 0; p < pixels; ++p) {
            const double m = fw.prior(p, j);
            double grad_m = 0.0;
            for(int k = 0; k < ch; ++k) {
                const Eigen::Index i = p * ch + k;
                const double c = in.c(i, j);
                const double f = fw.foreground(i, j);
                const double w_f = (1.0 - m) * sign(f);
                g.c(i, j) = m * sign(c) - w_f;
                grad_b(i, j) = -sign(fw.sparse(i, j)) - w_f;
                grad_m += std::abs(c) - std::abs(f);
            }
            const double s = fw.sparse_inv(p, j);
            grad_binv(p, j) = -sign(s) - grad_m * m * (1.0 - m) * prior_argument_slope(s, sigma, in.prior_mode);
        }
    }

    GfcnGradients g1 = gfcn_backward(net1, fw.net1, grad_b);
    GfcnGradients g2 = gfcn_backward(net2, fw.net2, grad_binv);
    if(!online) {
        g1.params.w1() += lambda * net1.w1();
        g1.params.w2() += lambda * net1.w2();
        g1.params.w3() += lambda * net1.w3();
        g2.params.w1() += lambda * net2.w1();
        g2.params.w2() += lambda * net2.w2();
        g2.params.w3() += lambda * net2.w3();
    }
    g.net1 = std::move(g1.params);
    g.net2 = std::move(g2.params);
    g.u1 = std::move(g1.latent);
    g.u2 = std::move(g2.latent);
    return g;
}

} // namespace numod
