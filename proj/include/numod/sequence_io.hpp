#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <fnmatch.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "numod/types.hpp"

namespace numod {

namespace io_detail {

inline std::vector<std::filesystem::path> list_matching(const std::filesystem::path& dir, const std::string& pattern) {
    namespace fs = std::filesystem;
    if(!fs::is_directory(dir))
        throw Error("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for(const auto& entry : fs::directory_iterator(dir)) {
        if(!entry.is_regular_file())
            continue;
        const std::string name = entry.path().filename().string();
        if(::fnmatch(pattern.c_str(), name.c_str(), 0) == 0)
            files.push_back(entry.path());
    }
    if(files.empty())
        throw Error("no files matching '" + pattern + "' in " + dir.string());
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

inline cv::Mat read_raw(const std::filesystem::path& file) {
    cv::Mat img = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
    if(img.empty())
        throw Error("cannot decode image: " + file.string());
    if(img.depth() != CV_8U && img.depth() != CV_16U)
        throw Error("unsupported bit depth (need 8 or 16 bit): " + file.string());
    return img;
}

inline double type_max(const cv::Mat& img) { return img.depth() == CV_16U ? 65535.0 : 255.0; }

inline double sample(const cv::Mat& img, int x, int y, int c) {
    if(img.depth() == CV_16U)
        return img.ptr<unsigned short>(y)[x * img.channels() + c];
    return img.ptr<unsigned char>(y)[x * img.channels() + c];
}

// Nearest-neighbour target size so that max(width,height) <= max_side.
inline std::pair<int, int> target_size(int w, int h, std::optional<int> max_side) {
    if(!max_side || std::max(w, h) <= *max_side)
        return {w, h};
    if(*max_side < 1)
        throw Error("max_side must be positive");
    const int longest = std::max(w, h);
    return {std::max(1, int(std::int64_t(w) * *max_side / longest)), std::max(1, int(std::int64_t(h) * *max_side / longest))};
}

inline int source_index(int dst, int dst_len, int src_len) {
    return std::min(src_len - 1, int((std::int64_t(2 * dst + 1) * src_len) / (2 * std::int64_t(dst_len))));
}

} // namespace io_detail

/// Converts a decoded image (8/16 bit, 1/3/4 channels, OpenCV BGR order)
/// into a normalized RGB or grayscale frame, resampling to (w,h).
inline Frame frame_from_mat(const cv::Mat& img, int w, int h) {
    const int src_c = img.channels();
    const int c = src_c == 1 ? 1 : 3;
    if(src_c != 1 && src_c != 3 && src_c != 4)
        throw Error("unsupported channel count " + std::to_string(src_c));
    const double scale = 1.0 / io_detail::type_max(img);
    Frame frame(w, h, c);
    for(int y = 0; y < h; ++y) {
        const int sy = io_detail::source_index(y, h, img.rows);
        for(int x = 0; x < w; ++x) {
            const int sx = io_detail::source_index(x, w, img.cols);
            if(c == 1) {
                frame.at(x, y, 0) = io_detail::sample(img, sx, sy, 0) * scale;
            } else {
                // BGR(A) -> RGB
                frame.at(x, y, 0) = io_detail::sample(img, sx, sy, 2) * scale;
                frame.at(x, y, 1) = io_detail::sample(img, sx, sy, 1) * scale;
                frame.at(x, y, 2) = io_detail::sample(img, sx, sy, 0) * scale;
            }
        }
    }
    return frame;
}

/// Loads every file in `directory` matching the glob `pattern`, ordered by
/// filename. Time order is filename order.
inline Sequence load_sequence(const std::filesystem::path& directory, const std::string& pattern = "*.png", std::optional<int> max_side = std::nullopt) {
    const auto files = io_detail::list_matching(directory, pattern);
    Sequence seq;
    int src_w = -1, src_h = -1, src_c = -1;
    for(const auto& file : files) {
        const cv::Mat img = io_detail::read_raw(file);
        const int c = img.channels() == 1 ? 1 : 3;
        if(src_w < 0) {
            src_w = img.cols;
            src_h = img.rows;
            src_c = c;
        } else if(img.cols != src_w || img.rows != src_h || c != src_c) {
            throw Error("inconsistent frame dimensions: " + file.string());
        }
        const auto [w, h] = io_detail::target_size(img.cols, img.rows, max_side);
        try {
            seq.frames.push_back(frame_from_mat(img, w, h));
        } catch(const Error& e) {
            throw Error(std::string(e.what()) + ": " + file.string());
        }
        seq.frame_ids.push_back(file.stem().string());
    }
    return seq;
}

/// Grayscale value (8-bit scale) that marks CDnet "unknown motion" pixels.
inline constexpr int kUnknownLabel = 170;
/// Grayscale value (8-bit scale) that marks CDnet "outside ROI" pixels.
inline constexpr int kOutsideRoiLabel = 85;

struct MaskLoadOptions {
    std::optional<int> max_side;
    // Drop unknown-motion and outside-ROI pixels from evaluation.
    bool exclude_unknown = false;
};

/// Values >= 128 are foreground except the CDnet unknown shade (170), which
/// is background unless excluded through the ROI.
inline MaskSequence load_masks(const std::filesystem::path& directory, const std::string& pattern = "*.png", const MaskLoadOptions& options = {}) {
    const auto files = io_detail::list_matching(directory, pattern);
    MaskSequence out;
    int src_w = -1, src_h = -1;
    for(const auto& file : files) {
        const cv::Mat img = io_detail::read_raw(file);
        if(src_w < 0) {
            src_w = img.cols;
            src_h = img.rows;
        } else if(img.cols != src_w || img.rows != src_h) {
            throw Error("inconsistent mask dimensions: " + file.string());
        }
        const auto [w, h] = io_detail::target_size(img.cols, img.rows, options.max_side);
        const double to8 = 255.0 / io_detail::type_max(img);
        Mask mask(w, h);
        Mask roi(w, h, 1);
        for(int y = 0; y < h; ++y) {
            const int sy = io_detail::source_index(y, h, img.rows);
            for(int x = 0; x < w; ++x) {
                const int sx = io_detail::source_index(x, w, img.cols);
                // first channel is enough: label maps are gray
                const int v = int(std::lround(io_detail::sample(img, sx, sy, 0) * to8));
                const bool unknown = v == kUnknownLabel;
                mask(x, y) = (v >= 128 && !unknown) ? 1 : 0;
                if(options.exclude_unknown && (unknown || v == kOutsideRoiLabel))
                    roi(x, y) = 0;
            }
        }
        out.masks.push_back(std::move(mask));
        if(options.exclude_unknown)
            out.roi.push_back(std::move(roi));
        out.frame_ids.push_back(file.stem().string());
    }
    return out;
}

/// Maps a real value to a byte. Halves round away from zero, so the signed
/// encoding of 0.0 is stored as 128.
inline unsigned char to_byte(double value, bool signed_encoding) {
    double v = signed_encoding ? 0.5 + value / 2.0 : value;
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(v * 255.0));
}

/// Writes an 8-bit PNG. `signed_encoding` stores 0.5 + value/2 (for C and F).
inline void save_image(const Eigen::Ref<const Eigen::VectorXd>& values, int width, int height, int channels, const std::filesystem::path& path, bool signed_encoding = false) {
    if(channels != 1 && channels != 3)
        throw Error("save_image: channels must be 1 or 3");
    if(values.size() != Eigen::Index(std::size_t(width) * height * channels))
        throw Error("save_image: vector length does not match dimensions for " + path.string());
    cv::Mat img(height, width, channels == 1 ? CV_8UC1 : CV_8UC3);
    for(int y = 0; y < height; ++y) {
        auto* row = img.ptr<unsigned char>(y);
        for(int x = 0; x < width; ++x) {
            const std::size_t base = (std::size_t(y) * width + x) * channels;
            if(channels == 1) {
                row[x] = to_byte(values[base], signed_encoding);
            } else {
                row[3 * x + 0] = to_byte(values[base + 2], signed_encoding);
                row[3 * x + 1] = to_byte(values[base + 1], signed_encoding);
                row[3 * x + 2] = to_byte(values[base + 0], signed_encoding);
            }
        }
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), img);
    } catch(const cv::Exception&) {
        ok = false;
    }
    if(!ok)
        throw Error("cannot write image: " + path.string());
}

inline void save_image(const Frame& frame, const std::filesystem::path& path, bool signed_encoding = false) {
    save_image(frame.data, frame.width, frame.height, frame.channels, path, signed_encoding);
}

/// Writes a binary mask as 0/255 grayscale PNG.
inline void save_mask(const Mask& mask, const std::filesystem::path& path) {
    cv::Mat img(mask.height, mask.width, CV_8UC1);
    for(int y = 0; y < mask.height; ++y)
        for(int x = 0; x < mask.width; ++x)
            img.at<unsigned char>(y, x) = mask(x, y) ? 255 : 0;
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), img);
    } catch(const cv::Exception&) {
        ok = false;
    }
    if(!ok)
        throw Error("cannot write mask: " + path.string());
}

} // namespace numod
