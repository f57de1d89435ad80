#pragma once

#include <cstdint>
#include <vector>

#include "numod/types.hpp"

namespace numod {

/// Pixel counts and derived scores for one frame. `defined` is false when
/// both ground truth and prediction are empty.
struct FrameScore {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    bool defined = false;

    std::uint64_t total() const { return tp + fp + fn + tn; }
};

/// Fills precision/recall/F from the counts. A frame with an empty ground
/// truth but a non-empty prediction scores F = 0.
inline void finalize_scores(FrameScore& s) {
    s.defined = (s.tp + s.fn) > 0 || (s.tp + s.fp) > 0;
    s.precision = (s.tp + s.fp) > 0 ? double(s.tp) / double(s.tp + s.fp) : 0.0;
    s.recall = (s.tp + s.fn) > 0 ? double(s.tp) / double(s.tp + s.fn) : 0.0;
    const double pr = s.precision + s.recall;
    s.f_measure = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
}

/// Confusion counts over roi pixels (all pixels when roi is null).
inline FrameScore confusion(const Mask& pred, const Mask& gt, const Mask* roi = nullptr) {
    if(pred.width != gt.width || pred.height != gt.height)
        throw Error("confusion: prediction and ground truth sizes differ");
    if(roi && (roi->width != gt.width || roi->height != gt.height))
        throw Error("confusion: roi size differs from ground truth");
    FrameScore s;
    for(std::size_t i = 0; i < gt.pixels(); ++i) {
        if(roi && !roi->data[i])
            continue;
        const bool p = pred.data[i] != 0;
        const bool g = gt.data[i] != 0;
        s.tp += p && g;
        s.fp += p && !g;
        s.fn += !p && g;
        s.tn += !p && !g;
    }
    finalize_scores(s);
    return s;
}

/// Mean of per-frame F-measures over frames where it is defined.
inline double f_measure_sequence(const std::vector<FrameScore>& scores) {
    double sum = 0.0;
    std::size_t n = 0;
    for(const auto& s : scores) {
        if(!s.defined)
            continue;
        sum += s.f_measure;
        ++n;
    }
    if(n == 0)
        throw Error("f_measure_sequence: no evaluable frames");
    return sum / double(n);
}

/// Scores every predicted mask against its ground truth.
inline std::vector<FrameScore> score_sequence(const std::vector<Mask>& pred, const MaskSequence& gt) {
    if(pred.size() != gt.size())
        throw Error("score_sequence: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) + " ground-truth frames");
    std::vector<FrameScore> out;
    out.reserve(pred.size());
    for(std::size_t i = 0; i < pred.size(); ++i)
        out.push_back(confusion(pred[i], gt.masks[i], gt.roi.empty() ? nullptr : &gt.roi[i]));
    return out;
}

} // namespace numod
