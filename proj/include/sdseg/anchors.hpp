#pragma once

#include <span>

#include "sdseg/cues.hpp"
#include "sdseg/image.hpp"

namespace sdseg {

enum class AnchorSource { fused_cues, ground_truth };

// Confident foreground / background pseudo labels. Pointwise
// positive + negative <= 1 holds for any cue values in [0,1].
struct AnchorPair {
    ProbMap positive;
    ProbMap negative;
    AnchorSource source = AnchorSource::fused_cues;
};

// positive = c_color * c_obj * c_loc, negative = product of inverted cues.
AnchorPair fuse_anchors(const CueSet& cues);

// Fusion over a cue subset (the cue-combination ablation); at least one cue
// must be selected.
AnchorPair fuse_anchors(const CueSet& cues, bool with_color, bool with_objectness,
                        bool with_location);

// Supervised substitution: positive = gt, negative = 1 - gt. The mask must
// be strictly binary.
AnchorPair anchors_from_labels(const GroundTruthMask& gt);

// Mean over pixels of -pos*p - neg*(1-p); in [-1,0] and linear in p.
double anchor_loss(const ProbMap& prediction, const AnchorPair& anchors);

// Core used by the training objective: prediction given as a double buffer,
// optional gradient accumulation (+= d loss / d p_i).
double anchor_loss(std::span<const double> prediction, const AnchorPair& anchors,
                   std::span<double> grad_accum = {});

} // namespace sdseg
