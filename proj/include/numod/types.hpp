#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace numod {

/// Raised for any contract violation or runtime failure inside the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A vectorized image. Pixels are stored row-major with interleaved
/// channels (RGB order for colour frames), values normalized to [0,1].
struct Frame {
    int width = 0;
    int height = 0;
    int channels = 0;
    Eigen::VectorXd data;

    Frame() = default;
    Frame(int w, int h, int c) : width(w), height(h), channels(c), data(Eigen::VectorXd::Zero(std::size_t(w) * h * c)) {}
    Frame(int w, int h, int c, Eigen::VectorXd values) : width(w), height(h), channels(c), data(std::move(values)) {
        if(data.size() != Eigen::Index(std::size_t(w) * h * c))
            throw Error("frame data length does not match dimensions");
    }

    std::size_t pixels() const { return std::size_t(width) * height; }
    std::size_t size() const { return pixels() * channels; }

    double& at(int x, int y, int c) { return data[(std::size_t(y) * width + x) * channels + c]; }
    double at(int x, int y, int c) const { return data[(std::size_t(y) * width + x) * channels + c]; }
};

/// Temporally ordered frames sharing one geometry.
struct Sequence {
    std::vector<Frame> frames;
    std::vector<std::string> frame_ids;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
    int width() const { return frames.empty() ? 0 : frames.front().width; }
    int height() const { return frames.empty() ? 0 : frames.front().height; }
    int channels() const { return frames.empty() ? 0 : frames.front().channels; }
};

/// Binary spatial map, one byte per pixel (0 or 1).
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> data;

    Mask() = default;
    Mask(int w, int h, unsigned char fill = 0) : width(w), height(h), data(std::size_t(w) * h, fill) {}

    std::size_t pixels() const { return data.size(); }
    unsigned char& operator()(int x, int y) { return data[std::size_t(y) * width + x]; }
    unsigned char operator()(int x, int y) const { return data[std::size_t(y) * width + x]; }
    std::size_t count() const {
        std::size_t n = 0;
        for(unsigned char v : data)
            n += v != 0;
        return n;
    }
};

/// Ground-truth masks plus an optional per-frame evaluation region.
struct MaskSequence {
    std::vector<Mask> masks;
    std::vector<Mask> roi; // empty when every pixel is evaluated
    std::vector<std::string> frame_ids;

    std::size_t size() const { return masks.size(); }
};

} // namespace numod
