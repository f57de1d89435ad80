#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "numod/types.hpp"

namespace numod {

using Rgb = std::array<double, 3>;

enum class BackgroundKind { flat, gradient, texture };
enum class EventKind { global_gain, half_frame_gain, soft_shadow_ellipse };

inline const char* to_string(EventKind k) {
    switch(k) {
    case EventKind::global_gain: return "global-gain";
    case EventKind::half_frame_gain: return "half-frame-gain";
    case EventKind::soft_shadow_ellipse: return "soft-shadow-ellipse";
    }
    return "?";
}

/// Rectangle moving linearly from (x0,y0) at start_frame to (x1,y1) at
/// end_frame; visible only within that range. Coordinates are the top-left
/// corner in pixels.
struct SynthObject {
    int width = 8;
    int height = 8;
    Rgb color{0.9, 0.2, 0.1};
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int start_frame = 0;
    int end_frame = -1; // -1: last frame
};

/// Illumination change over frames [start, end] (inclusive). Gains ramp
/// linearly from magnitude to magnitude_end. Shadows darken by the config's
/// shadow_darkening inside an ellipse moving from (cx0,cy0) to (cx1,cy1),
/// with a smoothstep penumbra of relative width `softness` around the rim.
struct IlluminationEvent {
    EventKind kind = EventKind::global_gain;
    int start = 0;
    int end = 0;
    double magnitude = 1.0;
    double magnitude_end = 1.0;
    Rgb tint{1.0, 1.0, 1.0}; // per-channel factor on top of the gain
    double cx0 = 0, cy0 = 0, cx1 = 0, cy1 = 0;
    double rx = 8, ry = 8;
    double softness = 0.3;
};

struct SynthConfig {
    int width = 64;
    int height = 64;
    int n_frames = 100;
    BackgroundKind background = BackgroundKind::texture;
    Rgb background_color{0.35, 0.4, 0.3};
    std::uint64_t texture_seed = 7;
    double texture_amplitude = 0.12;
    std::vector<SynthObject> objects;
    std::vector<IlluminationEvent> events;
    double shadow_darkening = 0.6;
    double noise_std = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if(width < 1 || height < 1 || n_frames < 1)
            throw Error("synth: width, height and n_frames must be positive");
        if(!(shadow_darkening > 0.0 && shadow_darkening < 1.0))
            throw Error("synth: shadow_darkening must lie in (0,1)");
        if(!(noise_std >= 0.0))
            throw Error("synth: noise_std must be >= 0");
        for(const auto& o : objects) {
            if(o.width < 1 || o.height < 1)
                throw Error("synth: object size must be positive");
            const int last = o.end_frame < 0 ? n_frames - 1 : o.end_frame;
            if(o.start_frame < 0 || last >= n_frames || last < o.start_frame)
                throw Error("synth: object frame range outside the sequence");
            for(auto [x, y] : {std::pair{o.x0, o.y0}, std::pair{o.x1, o.y1}})
                if(std::lround(x) < 0 || std::lround(y) < 0 || std::lround(x) + o.width > width || std::lround(y) + o.height > height)
                    throw Error("synth: object trajectory leaves the frame");
        }
        for(const auto& e : events) {
            if(e.start < 0 || e.end < e.start || e.end >= n_frames)
                throw Error("synth: event frame range outside the sequence");
            if(e.kind != EventKind::soft_shadow_ellipse && !(e.magnitude > 0.0 && e.magnitude_end > 0.0))
                throw Error("synth: gains must be positive");
            if(e.kind == EventKind::soft_shadow_ellipse && !(e.rx > 0.0 && e.ry > 0.0 && e.softness >= 0.0))
                throw Error("synth: shadow ellipse radii must be positive");
            for(double g : e.tint)
                if(!(g > 0.0))
                    throw Error("synth: tint factors must be positive");
        }
    }
};

struct EventLogEntry {
    int frame = 0;
    EventKind kind = EventKind::global_gain;
    double value = 1.0; // gain, or darkening factor for shadows
    double cx = 0, cy = 0;
};

struct SynthOutput {
    Sequence sequence;
    MaskSequence masks;
    std::vector<EventLogEntry> events;
};

namespace synth_detail {

inline double lerp(double a, double b, int i, int start, int end) {
    if(end <= start)
        return a;
    return a + (b - a) * double(i - start) / double(end - start);
}

inline Frame background(const SynthConfig& cfg) {
    Frame bg(cfg.width, cfg.height, 3);
    std::mt19937_64 rng(cfg.texture_seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> freq(0.5, 2.5);
    std::array<std::array<double, 4>, 3> waves{}; // per channel: fx, fy, phase, amplitude
    for(auto& w : waves)
        w = {freq(rng), freq(rng), phase(rng), cfg.texture_amplitude};
    for(int y = 0; y < cfg.height; ++y)
        for(int x = 0; x < cfg.width; ++x)
            for(int c = 0; c < 3; ++c) {
                double v = cfg.background_color[std::size_t(c)];
                const double u = double(x) / cfg.width, w = double(y) / cfg.height;
                if(cfg.background == BackgroundKind::gradient) {
                    v *= 0.6 + 0.8 * u;
                } else if(cfg.background == BackgroundKind::texture) {
                    const auto& wv = waves[std::size_t(c)];
                    v += wv[3] * std::sin(2.0 * std::numbers::pi * (wv[0] * u + wv[1] * w) + wv[2]);
                    v += 0.4 * cfg.texture_amplitude * std::sin(2.0 * std::numbers::pi * 6.0 * u + 3.0 * c) * std::cos(2.0 * std::numbers::pi * 5.0 * w);
                }
                bg.at(x, y, c) = std::clamp(v, 0.0, 1.0);
            }
    return bg;
}

} // namespace synth_detail

/// Renders the sequence. Per frame: background, objects, multiplicative
/// illumination events over all channels, noise, clamp to [0,1]. Masks
/// cover object pixels only.
inline SynthOutput generate(const SynthConfig& cfg) {
    cfg.validate();
    SynthOutput out;
    const Frame bg = synth_detail::background(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    for(int i = 0; i < cfg.n_frames; ++i) {
        Frame f = bg;
        Mask mask(cfg.width, cfg.height);
        for(const auto& o : cfg.objects) {
            const int last = o.end_frame < 0 ? cfg.n_frames - 1 : o.end_frame;
            if(i < o.start_frame || i > last)
                continue;
            const int ox = int(std::lround(synth_detail::lerp(o.x0, o.x1, i, o.start_frame, last)));
            const int oy = int(std::lround(synth_detail::lerp(o.y0, o.y1, i, o.start_frame, last)));
            for(int y = oy; y < oy + o.height; ++y)
                for(int x = ox; x < ox + o.width; ++x) {
                    for(int c = 0; c < 3; ++c)
                        f.at(x, y, c) = o.color[std::size_t(c)];
                    mask(x, y) = 1;
                }
        }

        Eigen::VectorXd gain = Eigen::VectorXd::Ones(Eigen::Index(f.size()));
        for(const auto& e : cfg.events) {
            if(i < e.start || i > e.end)
                continue;
            EventLogEntry log{i, e.kind, 1.0, 0.0, 0.0};
            if(e.kind == EventKind::soft_shadow_ellipse) {
                const double cx = synth_detail::lerp(e.cx0, e.cx1, i, e.start, e.end);
                const double cy = synth_detail::lerp(e.cy0, e.cy1, i, e.start, e.end);
                log.value = cfg.shadow_darkening;
                log.cx = cx;
                log.cy = cy;
                for(int y = 0; y < cfg.height; ++y)
                    for(int x = 0; x < cfg.width; ++x) {
                        const double rho = std::hypot((x - cx) / e.rx, (y - cy) / e.ry);
                        double w = 0.0;
                        if(e.softness > 0.0) {
                            w = std::clamp((1.0 + e.softness - rho) / (2.0 * e.softness), 0.0, 1.0);
                            w = w * w * (3.0 - 2.0 * w); // smoothstep penumbra
                        } else
                            w = rho <= 1.0 ? 1.0 : 0.0;
                        const double factor = 1.0 - (1.0 - cfg.shadow_darkening) * w;
                        for(int c = 0; c < 3; ++c)
                            gain[Eigen::Index((std::size_t(y) * cfg.width + x) * 3 + c)] *= factor * (w > 0.0 ? e.tint[std::size_t(c)] : 1.0);
                    }
            } else {
                const double g = synth_detail::lerp(e.magnitude, e.magnitude_end, i, e.start, e.end);
                log.value = g;
                const int x_end = e.kind == EventKind::half_frame_gain ? cfg.width / 2 : cfg.width;
                for(int y = 0; y < cfg.height; ++y)
                    for(int x = 0; x < x_end; ++x)
                        for(int c = 0; c < 3; ++c)
                            gain[Eigen::Index((std::size_t(y) * cfg.width + x) * 3 + c)] *= g * e.tint[std::size_t(c)];
            }
            out.events.push_back(log);
        }
        f.data = f.data.cwiseProduct(gain);
        if(cfg.noise_std > 0.0)
            for(Eigen::Index k = 0; k < f.data.size(); ++k)
                f.data[k] += cfg.noise_std * noise(rng);
        f.data = f.data.cwiseMax(0.0).cwiseMin(1.0);

        char id[16];
        std::snprintf(id, sizeof id, "%06d", i);
        out.sequence.frames.push_back(std::move(f));
        out.sequence.frame_ids.emplace_back(id);
        out.masks.masks.push_back(std::move(mask));
        out.masks.frame_ids.emplace_back(id);
    }
    return out;
}

/// 64x64, 100 frames, one moving 8x8 object, global gain ramp 0.6 -> 1.4
/// over frames 30-70, one moving soft shadow, noise std 0.01.
inline SynthConfig standard_fixture(std::uint64_t seed = 1) {
    SynthConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.n_frames = 100;
    cfg.background = BackgroundKind::texture;
    cfg.texture_amplitude = 0.06;
    cfg.noise_std = 0.01;
    cfg.seed = seed;
    cfg.shadow_darkening = 0.6;

    SynthObject obj;
    obj.width = obj.height = 8;
    obj.color = {0.85, 0.15, 0.1};
    obj.x0 = 2;
    obj.y0 = 4;
    obj.x1 = 54;
    obj.y1 = 52;
    cfg.objects.push_back(obj);

    IlluminationEvent ramp;
    ramp.kind = EventKind::global_gain;
    ramp.start = 30;
    ramp.end = 70;
    ramp.magnitude = 0.6;
    ramp.magnitude_end = 1.4;
    cfg.events.push_back(ramp);

    IlluminationEvent shadow;
    shadow.kind = EventKind::soft_shadow_ellipse;
    shadow.start = 0;
    shadow.end = cfg.n_frames - 1;
    shadow.cx0 = 52;
    shadow.cy0 = 10;
    shadow.cx1 = 12;
    shadow.cy1 = 54;
    shadow.rx = 10;
    shadow.ry = 6;
    shadow.softness = 0.6;
    cfg.events.push_back(shadow);
    return cfg;
}

} // namespace numod
