#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "numod/parallel.hpp"
#include "numod/types.hpp"

namespace numod {

/// Settings of the illumination-invariant transform.
struct InvariantModel {
    double theta = 0.0;                 // angle of the illumination direction e, in [0,pi)
    int wiener_window = 7;              // odd, >= 3
    std::optional<double> wiener_noise; // unset: median of local variances
    double epsilon_log = 1e-4;          // floor applied to channel values before logs

    void validate() const {
        if(!(theta >= 0.0 && theta < std::numbers::pi))
            throw Error("invariant: theta must lie in [0,pi)");
        if(wiener_window < 3 || wiener_window % 2 == 0)
            throw Error("invariant: wiener_window must be odd and >= 3");
        if(wiener_noise && !(*wiener_noise >= 0.0))
            throw Error("invariant: wiener_noise must be >= 0");
        if(!(epsilon_log > 0.0))
            throw Error("invariant: epsilon_log must be > 0");
    }
};

/// Single-channel frame with values in [0,1].
using InvariantFrame = Frame;

namespace invariant_detail {

// Ranges at or below this are treated as constant images.
inline constexpr double kDegenerateRange = 1e-9;

inline void normalize_min_max(Eigen::VectorXd& v) {
    if(v.size() == 0)
        return;
    const double lo = v.minCoeff();
    const double hi = v.maxCoeff();
    if(!(hi - lo > kDegenerateRange)) {
        v.setConstant(0.5);
        return;
    }
    v = ((v.array() - lo) / (hi - lo)).cwiseMax(0.0).cwiseMin(1.0).matrix();
}

inline double safe_log(double value, double eps) { return std::log(std::max(value, eps)); }

} // namespace invariant_detail

/// Per pixel (log(R/G), log(B/G)) with each channel floored at `eps`.
/// Rows are pixels; column 0 is the R/G term, column 1 the B/G term.
inline Eigen::MatrixX2d log_chromaticity(const Frame& frame, double eps = 1e-4) {
    if(frame.channels != 3)
        throw Error("log_chromaticity: RGB frame required");
    const auto n = Eigen::Index(frame.pixels());
    Eigen::MatrixX2d out(n, 2);
    for(Eigen::Index p = 0; p < n; ++p) {
        const double lg = invariant_detail::safe_log(frame.data[3 * p + 1], eps);
        out(p, 0) = invariant_detail::safe_log(frame.data[3 * p + 0], eps) - lg;
        out(p, 1) = invariant_detail::safe_log(frame.data[3 * p + 2], eps) - lg;
    }
    return out;
}

/// Scalar coordinate along the unit vector orthogonal to e(theta).
inline Eigen::VectorXd project_orthogonal(const Eigen::MatrixX2d& chroma, double theta) {
    return -std::sin(theta) * chroma.col(0) + std::cos(theta) * chroma.col(1);
}

/// Shannon entropy (nats) of a histogram of `values` over their own range.
inline double histogram_entropy(const Eigen::VectorXd& values, int bins = 64) {
    if(values.size() == 0)
        return 0.0;
    const double lo = values.minCoeff();
    const double hi = values.maxCoeff();
    if(!(hi > lo))
        return 0.0;
    std::vector<std::size_t> counts(std::size_t(bins), 0);
    const double scale = bins / (hi - lo);
    for(double v : values)
        ++counts[std::size_t(std::min(bins - 1, int((v - lo) * scale)))];
    double h = 0.0;
    const double total = double(values.size());
    for(std::size_t c : counts) {
        if(c == 0)
            continue;
        const double p = double(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

struct CalibrationOptions {
    int n_angles = 180;
    int histogram_bins = 64;
    std::size_t max_frames = 10;           // frames pooled, evenly spaced
    std::size_t max_pixels_per_frame = 50000;
    double epsilon_log = 1e-4;
};

/// Entropy-minimizing estimate of the illumination direction. Ties go to
/// the smallest grid angle.
inline double calibrate_direction(const Sequence& seq, const CalibrationOptions& opt = {}) {
    if(seq.empty())
        throw Error("calibrate_direction: empty sequence");
    if(seq.channels() != 3)
        throw Error("calibrate_direction: RGB sequence required");
    if(opt.n_angles < 1)
        throw Error("calibrate_direction: n_angles must be >= 1");

    const std::size_t n_frames = std::min(opt.max_frames, seq.size());
    std::vector<Eigen::MatrixX2d> pooled;
    Eigen::Index total = 0;
    for(std::size_t k = 0; k < n_frames; ++k) {
        const std::size_t idx = n_frames == 1 ? 0 : k * (seq.size() - 1) / (n_frames - 1);
        Eigen::MatrixX2d chroma = log_chromaticity(seq.frames[idx], opt.epsilon_log);
        const std::size_t stride = std::max<std::size_t>(1, std::size_t(chroma.rows()) / std::max<std::size_t>(1, opt.max_pixels_per_frame));
        if(stride > 1) {
            const Eigen::Index kept = (chroma.rows() + Eigen::Index(stride) - 1) / Eigen::Index(stride);
            Eigen::MatrixX2d sub(kept, 2);
            for(Eigen::Index i = 0; i < kept; ++i)
                sub.row(i) = chroma.row(i * Eigen::Index(stride));
            chroma = std::move(sub);
        }
        total += chroma.rows();
        pooled.push_back(std::move(chroma));
    }
    Eigen::MatrixX2d all(total, 2);
    Eigen::Index off = 0;
    for(const auto& c : pooled) {
        all.middleRows(off, c.rows()) = c;
        off += c.rows();
    }

    double best_theta = 0.0;
    double best_entropy = 0.0;
    for(int a = 0; a < opt.n_angles; ++a) {
        const double theta = std::numbers::pi * a / opt.n_angles;
        const double h = histogram_entropy(project_orthogonal(all, theta), opt.histogram_bins);
        if(a == 0 || h < best_entropy) {
            best_entropy = h;
            best_theta = theta;
        }
    }
    return best_theta;
}

/// Shadow-free grayscale image: log-chromaticity projected orthogonally to
/// e, min-max normalized per frame (constant result -> 0.5).
inline InvariantFrame project_invariant(const Frame& frame, const InvariantModel& model) {
    Eigen::VectorXd proj = project_orthogonal(log_chromaticity(frame, model.epsilon_log), model.theta);
    invariant_detail::normalize_min_max(proj);
    return InvariantFrame(frame.width, frame.height, 1, std::move(proj));
}

/// Luminance (0.299R + 0.587G + 0.114B); grayscale frames pass through.
inline Eigen::VectorXd luminance(const Frame& frame) {
    if(frame.channels == 1)
        return frame.data;
    if(frame.channels != 3)
        throw Error("luminance: 1 or 3 channels required");
    const auto n = Eigen::Index(frame.pixels());
    Eigen::VectorXd out(n);
    for(Eigen::Index p = 0; p < n; ++p)
        out[p] = 0.299 * frame.data[3 * p] + 0.587 * frame.data[3 * p + 1] + 0.114 * frame.data[3 * p + 2];
    return out;
}

struct LocalStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

/// Mean and population variance over a square window clipped to the image.
inline LocalStats local_stats(const Eigen::VectorXd& img, int width, int height, int window) {
    const int r = window / 2;
    LocalStats s{Eigen::VectorXd(img.size()), Eigen::VectorXd(img.size())};
    for(int y = 0; y < height; ++y) {
        const int y0 = std::max(0, y - r), y1 = std::min(height - 1, y + r);
        for(int x = 0; x < width; ++x) {
            const int x0 = std::max(0, x - r), x1 = std::min(width - 1, x + r);
            const double n = double((y1 - y0 + 1) * (x1 - x0 + 1));
            double sum = 0.0;
            for(int yy = y0; yy <= y1; ++yy)
                for(int xx = x0; xx <= x1; ++xx)
                    sum += img[std::size_t(yy) * width + xx];
            const double mu = sum / n;
            double var = 0.0;
            for(int yy = y0; yy <= y1; ++yy)
                for(int xx = x0; xx <= x1; ++xx) {
                    const double d = img[std::size_t(yy) * width + xx] - mu;
                    var += d * d;
                }
            s.mean[std::size_t(y) * width + x] = mu;
            s.variance[std::size_t(y) * width + x] = var / n;
        }
    }
    return s;
}

/// Homomorphic reflectance: log-luminance minus its locally adaptive Wiener
/// estimate (the illumination), min-max normalized.
inline InvariantFrame wiener_reflectance(const Frame& frame, const InvariantModel& model) {
    constexpr double tiny = 1e-12;
    Eigen::VectorXd logl = luminance(frame).unaryExpr([&](double v) { return invariant_detail::safe_log(v, model.epsilon_log); });
    const LocalStats st = local_stats(logl, frame.width, frame.height, model.wiener_window);

    double noise = 0.0;
    if(model.wiener_noise) {
        noise = *model.wiener_noise;
    } else {
        std::vector<double> v(st.variance.data(), st.variance.data() + st.variance.size());
        auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
        std::nth_element(v.begin(), mid, v.end());
        noise = *mid;
    }

    Eigen::VectorXd refl(logl.size());
    for(Eigen::Index p = 0; p < logl.size(); ++p) {
        const double gain = std::max(st.variance[p] - noise, 0.0) / std::max(st.variance[p], tiny);
        const double illumination = st.mean[p] + gain * (logl[p] - st.mean[p]);
        refl[p] = logl[p] - illumination;
    }
    invariant_detail::normalize_min_max(refl);
    return InvariantFrame(frame.width, frame.height, 1, std::move(refl));
}

/// The invariant representation: mean of the projection and reflectance branches.
inline InvariantFrame psi(const Frame& frame, const InvariantModel& model) {
    const InvariantFrame a = project_invariant(frame, model);
    const InvariantFrame b = wiener_reflectance(frame, model);
    Eigen::VectorXd fused = (0.5 * (a.data + b.data)).cwiseMax(0.0).cwiseMin(1.0);
    return InvariantFrame(frame.width, frame.height, 1, std::move(fused));
}

/// psi over a whole sequence; parallel over frames, order preserved.
inline Sequence psi_sequence(const Sequence& seq, const InvariantModel& model, int threads = 1) {
    model.validate();
    Sequence out;
    out.frames.resize(seq.size());
    out.frame_ids = seq.frame_ids;
    parallel_for(seq.size(), threads, [&](std::size_t i) { out.frames[i] = psi(seq.frames[i], model); });
    return out;
}

} // namespace numod
