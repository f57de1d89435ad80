#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "numod/adam.hpp"
#include "numod/gfcn.hpp"
#include "numod/invariant.hpp"
#include "numod/objective.hpp"
#include "numod/types.hpp"

namespace numod {

/// Hyperparameters. Iteration budgets are configurable; the defaults suit
/// short sequences.
struct TrainConfig {
    int latent = 5;
    int hidden1 = 10;
    int hidden2 = 20;
    double lambda = 0.005;
    double lr = 0.001;
    int epochs = 300;
    int minibatch_frames = 0;       // 0: whole sequence if n <= 256, else 64
    std::uint64_t seed = 0;
    int online_stream = 10;
    int online_iterations = 200;
    double pretrain_fraction = 0.5;
    double threshold_factor = 2.0;
    double threshold_floor = 1e-6;
    double latent_init_std = 0.1;
    PriorMode prior_mode = PriorMode::distance;

    void validate() const {
        if(latent < 1 || hidden1 < 1 || hidden2 < 1)
            throw Error("config: layer sizes must be positive");
        if(!(lambda >= 0.0) || !(lr > 0.0))
            throw Error("config: lambda must be >= 0 and lr > 0");
        if(epochs < 0 || minibatch_frames < 0 || online_stream < 1 || online_iterations < 0)
            throw Error("config: epochs, minibatch, stream length and iterations must be non-negative (stream >= 1)");
        if(!(pretrain_fraction > 0.0 && pretrain_fraction < 1.0))
            throw Error("config: pretrain_fraction must lie in (0,1)");
        if(!(threshold_factor > 0.0) || !(threshold_floor >= 0.0) || !(latent_init_std >= 0.0))
            throw Error("config: threshold_factor > 0, threshold_floor >= 0 and latent_init_std >= 0 required");
    }

    int effective_minibatch(std::size_t n) const {
        if(minibatch_frames > 0)
            return std::min<int>(minibatch_frames, int(n));
        return n <= 256 ? int(n) : 64;
    }
};

/// Per-frame optimizable state [u1; u2; c] in one flat vector.
class FrameVariables {
  public:
    FrameVariables() = default;
    FrameVariables(int latent, Eigen::Index m) : m_latent(latent), m_values(Eigen::VectorXd::Zero(2 * latent + m)) {}

    int latent() const { return m_latent; }
    Eigen::Index image_size() const { return m_values.size() - 2 * m_latent; }

    auto u1() { return m_values.segment(0, m_latent); }
    auto u2() { return m_values.segment(m_latent, m_latent); }
    auto c() { return m_values.segment(2 * m_latent, image_size()); }
    auto u1() const { return m_values.segment(0, m_latent); }
    auto u2() const { return m_values.segment(m_latent, m_latent); }
    auto c() const { return m_values.segment(2 * m_latent, image_size()); }

    Eigen::VectorXd& flat() { return m_values; }
    const Eigen::VectorXd& flat() const { return m_values; }

  private:
    int m_latent = 0;
    Eigen::VectorXd m_values;
};

/// Output for one frame. input = background + illumination + foreground.
struct Decomposition {
    Eigen::VectorXd background;   // B, in (0,1)
    Eigen::VectorXd illumination; // C
    Eigen::VectorXd foreground;   // F = S - C
    Eigen::VectorXd sparse;       // S = I - B
    Eigen::VectorXd background_inv;
    Eigen::VectorXd prior;        // M
    Mask mask;
};

/// Trained networks plus everything needed to apply them to new frames.
struct NumodModel {
    GfcnParams net1;
    GfcnParams net2;
    AdamState adam1;
    AdamState adam2;
    TrainConfig config;
    InvariantModel invariant;
    int width = 0;
    int height = 0;
    int channels = 0;
};

/// Streaming mean/variance (Welford) over foreground values.
struct RunningStats {
    std::uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void push(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / double(count);
        m2 += delta * (x - mean);
    }
    template <typename Derived>
    void push_all(const Eigen::DenseBase<Derived>& v) {
        for(Eigen::Index i = 0; i < v.size(); ++i)
            push(v.derived().coeff(i));
    }
    double stddev() const { return count == 0 ? 0.0 : std::sqrt(m2 / double(count)); }
};

/// b(x,y) = 1 iff max_c |F(x,y,c)| >= factor * t, with t floored.
inline Mask threshold_mask(const Eigen::Ref<const Eigen::VectorXd>& f, int width, int height, int channels, double t, double factor = 2.0, double floor = 1e-6) {
    if(f.size() != Eigen::Index(std::size_t(width) * height * channels))
        throw Error("threshold_mask: foreground size does not match dimensions");
    const double level = factor * std::max(t, floor);
    Mask mask(width, height);
    for(std::size_t p = 0; p < mask.pixels(); ++p) {
        double peak = 0.0;
        for(int c = 0; c < channels; ++c)
            peak = std::max(peak, std::abs(f[Eigen::Index(p * channels + c)]));
        mask.data[p] = peak >= level ? 1 : 0;
    }
    return mask;
}

struct ThresholdResult {
    std::vector<Mask> masks;
    double t = 0.0; // std of all foreground values
};

/// Batch thresholding: t is the population std over every element of every F.
inline ThresholdResult threshold_foreground(const std::vector<Eigen::VectorXd>& f_list, int width, int height, int channels, double factor = 2.0, double floor = 1e-6) {
    if(f_list.empty())
        throw Error("threshold_foreground: no frames");
    RunningStats stats;
    for(const auto& f : f_list)
        stats.push_all(f);
    ThresholdResult r;
    r.t = stats.stddev();
    for(const auto& f : f_list)
        r.masks.push_back(threshold_mask(f, width, height, channels, r.t, factor, floor));
    return r;
}

struct BatchResult {
    NumodModel model;
    std::vector<FrameVariables> variables;
    std::vector<Decomposition> decompositions;
    std::vector<double> epoch_losses; // objective summed over minibatches, before each epoch's updates
    LossTerms initial_terms;
    LossTerms final_terms;
    std::vector<double> sigma;
    double t = 0.0;
};

struct OnlineState {
    RunningStats stats;
    Eigen::VectorXd last_u1;
    Eigen::VectorXd last_u2;
    std::uint64_t rng_counter = 0;
};

struct OnlineResult {
    std::vector<FrameVariables> variables;
    std::vector<Decomposition> decompositions;
    std::vector<double> stream_losses; // final online objective per stream
    std::vector<double> stream_t;
    std::vector<double> sigma;
};

/// Called after every epoch (batch) or stream (online) with its index and loss.
using ProgressFn = std::function<void(int, double)>;

namespace trainer_detail {

inline Eigen::MatrixXd stack_columns(const Sequence& seq, std::size_t begin, std::size_t end) {
    const Eigen::Index m = Eigen::Index(seq.frames[begin].size());
    Eigen::MatrixXd out(m, Eigen::Index(end - begin));
    for(std::size_t i = begin; i < end; ++i)
        out.col(Eigen::Index(i - begin)) = seq.frames[i].data;
    return out;
}

inline void check_aligned(const Sequence& seq, const Sequence& inv) {
    if(seq.empty())
        throw Error("training: empty sequence");
    if(seq.size() != inv.size())
        throw Error("training: sequence and invariant sequence lengths differ");
    for(std::size_t i = 0; i < seq.size(); ++i) {
        const Frame& f = seq.frames[i];
        const Frame& g = inv.frames[i];
        if(f.width != seq.width() || f.height != seq.height() || f.channels != seq.channels())
            throw Error("training: frame " + std::to_string(i) + " has different dimensions");
        if(g.width != f.width || g.height != f.height || g.channels != 1)
            throw Error("training: invariant frame " + std::to_string(i) + " does not match its input frame");
    }
}

inline void randomize_latents(FrameVariables& v, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for(Eigen::Index k = 0; k < v.latent(); ++k)
        v.u1()[k] = stddev * dist(rng);
    for(Eigen::Index k = 0; k < v.latent(); ++k)
        v.u2()[k] = stddev * dist(rng);
}

inline ObjectiveInputs gather(const Sequence& seq, const Sequence& inv, const std::vector<double>& sigma, const std::vector<FrameVariables>& vars,
                              std::size_t begin, std::size_t end, PriorMode prior_mode, std::size_t var_offset = 0) {
    ObjectiveInputs in;
    in.channels = seq.channels();
    in.prior_mode = prior_mode;
    in.frames = stack_columns(seq, begin, end);
    in.invariant_frames = stack_columns(inv, begin, end);
    const Eigen::Index cols = Eigen::Index(end - begin);
    const int d = vars[begin - var_offset].latent();
    in.sigma.resize(cols);
    in.u1.resize(d, cols);
    in.u2.resize(d, cols);
    in.c.resize(in.frames.rows(), cols);
    for(Eigen::Index j = 0; j < cols; ++j) {
        const FrameVariables& v = vars[begin - var_offset + std::size_t(j)];
        in.sigma[j] = sigma[begin + std::size_t(j)];
        in.u1.col(j) = v.u1();
        in.u2.col(j) = v.u2();
        in.c.col(j) = v.c();
    }
    return in;
}

inline void check_finite(double loss, const std::string& where) {
    if(!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss " << where << "; lower the learning rate or check the input data";
        throw Error(msg.str());
    }
}

inline Decomposition decompose_column(const ObjectiveInputs& in, const ObjectiveForward& fw, Eigen::Index j) {
    Decomposition d;
    d.background = fw.net1.output.col(j);
    d.illumination = in.c.col(j);
    d.sparse = fw.sparse.col(j);
    d.foreground = fw.foreground.col(j);
    d.background_inv = fw.net2.output.col(j);
    d.prior = fw.prior.col(j);
    return d;
}

} // namespace trainer_detail

/// Std of each invariant frame; sigma of the prior map.
inline std::vector<double> invariant_sigmas(const Sequence& inv) {
    std::vector<double> out;
    out.reserve(inv.size());
    for(const auto& f : inv.frames)
        out.push_back(population_std(f.data));
    return out;
}

/// Computes decompositions for `vars` under fixed networks (no updates).
inline std::vector<Decomposition> decompose_frames(const NumodModel& model, const Sequence& seq, const Sequence& inv, const std::vector<double>& sigma,
                                                   const std::vector<FrameVariables>& vars, double* loss_out = nullptr) {
    std::vector<Decomposition> out;
    double loss = 0.0;
    const std::size_t chunk = 64;
    for(std::size_t b = 0; b < seq.size(); b += chunk) {
        const std::size_t e = std::min(seq.size(), b + chunk);
        const ObjectiveInputs in = trainer_detail::gather(seq, inv, sigma, vars, b, e, model.config.prior_mode);
        const ObjectiveForward fw = objective_forward(model.net1, model.net2, in, model.config.lambda);
        loss += fw.terms.reconst + fw.terms.decomp;
        for(Eigen::Index j = 0; j < in.frames.cols(); ++j)
            out.push_back(trainer_detail::decompose_column(in, fw, j));
    }
    if(loss_out)
        *loss_out = loss + loss_reg(model.net1, model.net2, model.config.lambda);
    return out;
}

/// Jointly optimizes both networks and every frame's latents and
/// illumination image with Adam, then thresholds the foregrounds.
inline BatchResult train_batch(const Sequence& seq, const Sequence& inv, const TrainConfig& config, const InvariantModel& invariant = {}, const ProgressFn& progress = {}) {
    config.validate();
    trainer_detail::check_aligned(seq, inv);
    const std::size_t n = seq.size();
    const Eigen::Index m = Eigen::Index(seq.frames.front().size());
    const Eigen::Index pixels = Eigen::Index(seq.frames.front().pixels());

    BatchResult r;
    NumodModel& model = r.model;
    model.config = config;
    model.invariant = invariant;
    model.width = seq.width();
    model.height = seq.height();
    model.channels = seq.channels();
    model.net1 = init_params({config.latent, config.hidden1, config.hidden2, int(m)}, config.seed);
    model.net2 = init_params({config.latent, config.hidden1, config.hidden2, int(pixels)}, config.seed + 1);
    model.adam1 = AdamState(model.net1.flat().size(), config.lr);
    model.adam2 = AdamState(model.net2.flat().size(), config.lr);

    std::mt19937_64 rng(config.seed + 2);
    r.variables.assign(n, FrameVariables(config.latent, m));
    for(auto& v : r.variables)
        trainer_detail::randomize_latents(v, rng, config.latent_init_std);
    std::vector<AdamState> frame_adam(n, AdamState(r.variables.front().flat().size(), config.lr));

    r.sigma = invariant_sigmas(inv);
    const std::size_t batch = std::size_t(config.effective_minibatch(n));

    auto full_terms = [&] {
        LossTerms t;
        for(std::size_t b = 0; b < n; b += batch) {
            const std::size_t e = std::min(n, b + batch);
            const ObjectiveForward fw = objective_forward(model.net1, model.net2, trainer_detail::gather(seq, inv, r.sigma, r.variables, b, e, config.prior_mode), config.lambda);
            t.reconst += fw.terms.reconst;
            t.decomp += fw.terms.decomp;
            t.reg = fw.terms.reg;
        }
        return t;
    };
    r.initial_terms = full_terms();
    trainer_detail::check_finite(r.initial_terms.total(), "at initialization");

    for(int epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for(std::size_t b = 0; b < n; b += batch) {
            const std::size_t e = std::min(n, b + batch);
            const ObjectiveInputs in = trainer_detail::gather(seq, inv, r.sigma, r.variables, b, e, config.prior_mode);
            const ObjectiveForward fw = objective_forward(model.net1, model.net2, in, config.lambda);
            epoch_loss += fw.terms.reconst + fw.terms.decomp + (b == 0 ? fw.terms.reg : 0.0);
            const ObjectiveGradients g = objective_backward(model.net1, model.net2, in, fw, config.lambda);

            adam_step(model.adam1, model.net1.flat(), g.net1.flat());
            adam_step(model.adam2, model.net2.flat(), g.net2.flat());
            Eigen::VectorXd grad(r.variables.front().flat().size());
            for(std::size_t i = b; i < e; ++i) {
                const Eigen::Index j = Eigen::Index(i - b);
                grad << g.u1.col(j), g.u2.col(j), g.c.col(j);
                adam_step(frame_adam[i], r.variables[i].flat(), grad);
            }
        }
        trainer_detail::check_finite(epoch_loss, "in epoch " + std::to_string(epoch));
        r.epoch_losses.push_back(epoch_loss);
        if(progress)
            progress(epoch, epoch_loss);
    }

    r.final_terms = full_terms();
    trainer_detail::check_finite(r.final_terms.total(), "after training");
    r.decompositions = decompose_frames(model, seq, inv, r.sigma, r.variables);

    std::vector<Eigen::VectorXd> fs;
    fs.reserve(n);
    for(const auto& d : r.decompositions)
        fs.push_back(d.foreground);
    ThresholdResult th = threshold_foreground(fs, model.width, model.height, model.channels, config.threshold_factor, config.threshold_floor);
    r.t = th.t;
    for(std::size_t i = 0; i < n; ++i)
        r.decompositions[i].mask = std::move(th.masks[i]);
    return r;
}

/// Seeds the online state from a batch run: foreground statistics and the
/// latents of the last frame.
inline OnlineState online_state_from(const BatchResult& pretrain) {
    OnlineState s;
    for(const auto& d : pretrain.decompositions)
        s.stats.push_all(d.foreground);
    if(!pretrain.variables.empty()) {
        s.last_u1 = pretrain.variables.back().u1();
        s.last_u2 = pretrain.variables.back().u2();
    }
    return s;
}

/// Processes frames in streams of config.online_stream with the network
/// weights frozen; only the per-frame latents and illumination images are
/// optimized, against the objective without weight decay.
inline OnlineResult train_online(const NumodModel& model, const Sequence& seq, const Sequence& inv, OnlineState& state, const ProgressFn& progress = {}) {
    const TrainConfig& config = model.config;
    config.validate();
    if(model.net1.flat().size() == 0 || model.net2.flat().size() == 0)
        throw Error("train_online: pretrained networks required");
    trainer_detail::check_aligned(seq, inv);
    if(seq.width() != model.width || seq.height() != model.height || seq.channels() != model.channels)
        throw Error("train_online: frame geometry does not match the model");
    const Eigen::Index m = Eigen::Index(seq.frames.front().size());
    if(model.net1.shape().output != m || model.net2.shape().output != Eigen::Index(seq.frames.front().pixels()))
        throw Error("train_online: network output sizes do not match frames");

    OnlineResult r;
    r.sigma = invariant_sigmas(inv);
    const std::size_t n = seq.size();
    const std::size_t stream = std::size_t(config.online_stream);
    int stream_index = 0;
    for(std::size_t b = 0; b < n; b += stream, ++stream_index) {
        const std::size_t e = std::min(n, b + stream);
        std::vector<FrameVariables> vars(e - b, FrameVariables(config.latent, m));
        std::mt19937_64 rng(config.seed + 1000003ULL * (++state.rng_counter));
        for(auto& v : vars) {
            if(state.last_u1.size() == config.latent && state.last_u2.size() == config.latent) {
                v.u1() = state.last_u1;
                v.u2() = state.last_u2;
            } else {
                trainer_detail::randomize_latents(v, rng, config.latent_init_std);
            }
        }
        std::vector<AdamState> adam(vars.size(), AdamState(vars.front().flat().size(), config.lr));
        Eigen::VectorXd grad(vars.front().flat().size());
        for(int it = 0; it < config.online_iterations; ++it) {
            const ObjectiveInputs in = trainer_detail::gather(seq, inv, r.sigma, vars, b, e, config.prior_mode, b);
            const ObjectiveForward fw = objective_forward(model.net1, model.net2, in, config.lambda);
            trainer_detail::check_finite(fw.terms.total(true), "in online stream " + std::to_string(stream_index));
            const ObjectiveGradients g = objective_backward(model.net1, model.net2, in, fw, config.lambda, true);
            for(std::size_t i = 0; i < vars.size(); ++i) {
                const Eigen::Index j = Eigen::Index(i);
                grad << g.u1.col(j), g.u2.col(j), g.c.col(j);
                adam_step(adam[i], vars[i].flat(), grad);
            }
        }

        const ObjectiveInputs in = trainer_detail::gather(seq, inv, r.sigma, vars, b, e, config.prior_mode, b);
        const ObjectiveForward fw = objective_forward(model.net1, model.net2, in, config.lambda);
        const double loss = fw.terms.total(true);
        trainer_detail::check_finite(loss, "in online stream " + std::to_string(stream_index));
        for(Eigen::Index j = 0; j < in.frames.cols(); ++j)
            state.stats.push_all(fw.foreground.col(j));
        const double t = state.stats.stddev();
        for(Eigen::Index j = 0; j < in.frames.cols(); ++j) {
            Decomposition d = trainer_detail::decompose_column(in, fw, j);
            d.mask = threshold_mask(d.foreground, model.width, model.height, model.channels, t, config.threshold_factor, config.threshold_floor);
            r.decompositions.push_back(std::move(d));
        }
        state.last_u1 = vars.back().u1();
        state.last_u2 = vars.back().u2();
        for(auto& v : vars)
            r.variables.push_back(std::move(v));
        r.stream_losses.push_back(loss);
        r.stream_t.push_back(t);
        if(progress)
            progress(stream_index, loss);
    }
    return r;
}

} // namespace numod
