#pragma once

#include <cmath>
#include <random>

#include "numod/numod.hpp"

namespace numod_test {

/// A small objective instance whose residuals stay clear of every kink of
/// |.| and ReLU, so central differences are valid.
struct GradInstance {
    numod::GfcnParams net1;
    numod::GfcnParams net2;
    numod::ObjectiveInputs in;
};

inline double uniform_away(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution neg(0.5);
    const double v = mag(rng);
    return neg(rng) ? -v : v;
}

inline bool relu_clear(const numod::GfcnCache& c, double margin) {
    return (c.pre1.array().abs() >= margin).all() && (c.pre2.array().abs() >= margin).all();
}

inline GradInstance make_grad_instance(std::mt19937_64& rng, int width, int height, int channels, numod::PriorMode mode, int frames = 2) {
    const int pixels = width * height;
    const int m = pixels * channels;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for(;;) {
        GradInstance g;
        g.net1 = numod::init_params({5, 10, 20, m}, rng());
        g.net2 = numod::init_params({5, 10, 20, pixels}, rng());
        // non-zero biases exercise every path
        for(auto* net : {&g.net1, &g.net2}) {
            for(Eigen::Index i = 0; i < net->b1().size(); ++i) net->b1()[i] = 0.3 * gauss(rng);
            for(Eigen::Index i = 0; i < net->b2().size(); ++i) net->b2()[i] = 0.3 * gauss(rng);
        }
        auto& in = g.in;
        in.channels = channels;
        in.prior_mode = mode;
        in.u1 = Eigen::MatrixXd::NullaryExpr(5, frames, [&] { return gauss(rng); });
        in.u2 = Eigen::MatrixXd::NullaryExpr(5, frames, [&] { return gauss(rng); });
        const numod::GfcnCache c1 = numod::gfcn_forward(g.net1, in.u1);
        const numod::GfcnCache c2 = numod::gfcn_forward(g.net2, in.u2);
        if(!relu_clear(c1, 1e-3) || !relu_clear(c2, 1e-3))
            continue;

        // S and C with magnitudes >= 0.05 and F = S - C likewise
        in.frames.resize(m, frames);
        in.c.resize(m, frames);
        for(int j = 0; j < frames; ++j)
            for(int i = 0; i < m; ++i) {
                double s = 0, cc = 0;
                do {
                    s = uniform_away(rng, 0.05, 0.5);
                    cc = uniform_away(rng, 0.05, 0.5);
                } while(std::abs(s - cc) < 0.05);
                in.frames(i, j) = c1.output(i, j) + s;
                in.c(i, j) = cc;
            }

        // S_inv clear of 0 and of sigma; sigma depends on I_inv, so iterate
        in.invariant_frames.resize(pixels, frames);
        in.sigma.resize(frames);
        bool ok = true;
        for(int j = 0; j < frames; ++j) {
            Eigen::VectorXd s_inv(pixels);
            for(int p = 0; p < pixels; ++p)
                s_inv[p] = uniform_away(rng, 0.05, 0.6);
            bool clear = false;
            for(int round = 0; round < 200 && !clear; ++round) {
                const Eigen::VectorXd iinv = c2.output.col(j) + s_inv;
                const double sigma = numod::population_std(iinv);
                clear = true;
                for(int p = 0; p < pixels; ++p)
                    if(std::abs(s_inv[p] - sigma) < 0.05 || std::abs(std::abs(s_inv[p]) - sigma) < 0.05) {
                        s_inv[p] = uniform_away(rng, 0.05, 0.6);
                        clear = false;
                    }
                if(clear) {
                    in.invariant_frames.col(j) = iinv;
                    in.sigma[j] = sigma;
                }
            }
            ok = ok && clear;
        }
        if(ok)
            return g;
    }
}

inline double objective_value(const numod::GfcnParams& n1, const numod::GfcnParams& n2, const numod::ObjectiveInputs& in, double lambda, bool online) {
    return numod::objective_forward(n1, n2, in, lambda).terms.total(online);
}

/// ||a - n|| / max(||a|| + ||n||, tiny)
inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    const double denom = std::max(analytic.norm() + numeric.norm(), 1e-12);
    return (analytic - numeric).norm() / denom;
}

struct GradCheck {
    double net1 = 0, net2 = 0, u1 = 0, u2 = 0, c = 0;
    double worst() const { return std::max({net1, net2, u1, u2, c}); }
};

/// Compares analytic gradients against central differences for every
/// parameter group.
inline GradCheck check_gradients(GradInstance g, double lambda, bool online, double h = 1e-6) {
    const numod::ObjectiveForward fw = numod::objective_forward(g.net1, g.net2, g.in, lambda);
    const numod::ObjectiveGradients an = numod::objective_backward(g.net1, g.net2, g.in, fw, lambda, online);

    auto fd = [&](auto&& get) {
        Eigen::Ref<Eigen::VectorXd> v = get();
        Eigen::VectorXd out(v.size());
        for(Eigen::Index i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + h;
            const double up = objective_value(g.net1, g.net2, g.in, lambda, online);
            v[i] = keep - h;
            const double down = objective_value(g.net1, g.net2, g.in, lambda, online);
            v[i] = keep;
            out[i] = (up - down) / (2.0 * h);
        }
        return out;
    };
    auto flat = [](Eigen::MatrixXd& m) { return Eigen::Map<Eigen::VectorXd>(m.data(), m.size()); };
    auto cflat = [](const Eigen::MatrixXd& m) { return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(m.data(), m.size())); };

    GradCheck r;
    if(!online) {
        r.net1 = relative_error(an.net1.flat(), fd([&]() -> Eigen::Ref<Eigen::VectorXd> { return g.net1.flat(); }));
        r.net2 = relative_error(an.net2.flat(), fd([&]() -> Eigen::Ref<Eigen::VectorXd> { return g.net2.flat(); }));
    }
    r.u1 = relative_error(cflat(an.u1), fd([&]() -> Eigen::Ref<Eigen::VectorXd> { return flat(g.in.u1); }));
    r.u2 = relative_error(cflat(an.u2), fd([&]() -> Eigen::Ref<Eigen::VectorXd> { return flat(g.in.u2); }));
    r.c = relative_error(cflat(an.c), fd([&]() -> Eigen::Ref<Eigen::VectorXd> { return flat(g.in.c); }));
    return r;
}

/// FNV-1a over the raw parameter bytes.
inline std::uint64_t checksum(const numod::GfcnParams& p) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.flat().data());
    for(std::size_t i = 0; i < std::size_t(p.flat().size()) * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace numod_test
