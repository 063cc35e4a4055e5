#include "sdseg/anchors.hpp"

namespace sdseg {

AnchorPair fuse_anchors(const CueSet& cues, bool with_color, bool with_objectness,
                        bool with_location) {
    if (!with_color && !with_objectness && !with_location)
        throw ConfigError("fuse_anchors: at least one cue must be selected");
    require_same_shape(cues.color.shape, cues.objectness.shape, "fuse_anchors");
    require_same_shape(cues.color.shape, cues.location.shape, "fuse_anchors");
    AnchorPair out;
    out.source = AnchorSource::fused_cues;
    out.positive = ProbMap(cues.color.shape, 1.f);
    out.negative = ProbMap(cues.color.shape, 1.f);
    auto mul_in = [&](const ProbMap& cue) {
        for (std::size_t i = 0; i < out.positive.values.size(); ++i) {
            out.positive.values[i] *= cue.values[i];
            out.negative.values[i] *= 1.f - cue.values[i];
        }
    };
    if (with_color) mul_in(cues.color);
    if (with_objectness) mul_in(cues.objectness);
    if (with_location) mul_in(cues.location);
    return out;
}

AnchorPair fuse_anchors(const CueSet& cues) { return fuse_anchors(cues, true, true, true); }

AnchorPair anchors_from_labels(const GroundTruthMask& gt) {
    AnchorPair out;
    out.source = AnchorSource::ground_truth;
    out.positive = ProbMap(gt.shape);
    out.negative = ProbMap(gt.shape);
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        auto v = gt.values[i];
        if (v != 0 && v != 1) throw DataError("anchors_from_labels: mask is not strictly binary");
        out.positive.values[i] = static_cast<float>(v);
        out.negative.values[i] = static_cast<float>(1 - v);
    }
    return out;
}

double anchor_loss(std::span<const double> prediction, const AnchorPair& anchors,
                   std::span<double> grad_accum) {
    const std::size_t n = anchors.positive.values.size();
    if (prediction.size() != n)
        throw ShapeError("anchor_loss: prediction size " + std::to_string(prediction.size()) +
                         " vs anchors " + std::to_string(n));
    require_same_shape(anchors.positive.shape, anchors.negative.shape, "anchor_loss");
    if (!grad_accum.empty() && grad_accum.size() != n)
        throw ShapeError("anchor_loss: gradient buffer size mismatch");

    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = anchors.positive.values[i];
        const double neg = anchors.negative.values[i];
        sum += -pos * prediction[i] - neg * (1.0 - prediction[i]);
        if (!grad_accum.empty()) grad_accum[i] += (neg - pos) * inv_n;
    }
    return sum * inv_n;
}

double anchor_loss(const ProbMap& prediction, const AnchorPair& anchors) {
    require_same_shape(prediction.shape, anchors.positive.shape, "anchor_loss");
    std::vector<double> p(prediction.values.begin(), prediction.values.end());
    return anchor_loss(std::span<const double>(p), anchors);
}

} // namespace sdseg
