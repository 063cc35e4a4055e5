#pragma once

#include <span>
#include <utility>
#include <vector>

#include "sdseg/anchors.hpp"
#include "sdseg/image.hpp"

namespace sdseg {

// Dense per-pixel semantic features at prediction resolution, pixel-major
// (HW x D). Produced by a frozen extractor; no gradients flow into it.
struct FeatureMap {
    ImageShape shape;
    int channels = 0;
    std::vector<float> values;

    FeatureMap() = default;
    FeatureMap(ImageShape s, int d)
        : shape(s), channels(d), values(static_cast<std::size_t>(s.pixels()) * d, 0.f) {}

    const float* pixel(std::int64_t i) const { return values.data() + i * channels; }
    float* pixel(std::int64_t i) { return values.data() + i * channels; }
};

enum class Region { foreground, background };

// Prediction-weighted sum of pixel features over one region.
struct RegionFeature {
    std::vector<double> vector;
    Region region = Region::foreground;

    bool is_zero() const {
        for (double v : vector)
            if (v != 0.0) return false;
        return true;
    }
};

struct DiffusionMargins {
    double m_fg = 0.2;
    double m_bg = 0.8;
};

enum class PairingMode { adjacent, random_pairs };

// Two frames with their anchors, the unit the full objective is computed on.
// Non-owning views; the owning containers must outlive the pair.
struct FramePair {
    const FrameSample* frame_a = nullptr;
    const AnchorPair* anchors_a = nullptr;
    const FrameSample* frame_b = nullptr;
    const AnchorPair* anchors_b = nullptr;
    PairingMode pairing = PairingMode::adjacent;
};

// Which terms of the objective are active; used by the ablation grid.
struct LossTerms {
    bool anchor = true;
    bool dif_fg = true;
    bool dif_bg = true;

    static LossTerms anchor_only() { return {true, false, false}; }
    static LossTerms full() { return {true, true, true}; }
};

struct PairLossBreakdown {
    double anchor_a = 0.0;
    double anchor_b = 0.0;
    double dif_fg = 0.0;
    double dif_bg = 0.0;
    double total = 0.0;
    // set when a region aggregate degenerated to the zero vector and a
    // cosine was pinned to 0
    bool degenerate_region = false;
};

// f_fg = sum_i p_i F_i, f_bg = sum_i (1-p_i) F_i. Unnormalized sums in
// double precision.
std::pair<RegionFeature, RegionFeature> aggregate_features(const ProbMap& prediction,
                                                           const FeatureMap& features);
std::pair<RegionFeature, RegionFeature> aggregate_features(std::span<const double> prediction,
                                                           const FeatureMap& features);

// Cosine similarity in [-1,1]; defined as 0 when either vector is zero (the
// caller may flag the pair as degenerate).
double cosine_similarity(const RegionFeature& u, const RegionFeature& v);

// Quadruplet hinge on the foreground: intra-frame fg/bg similarities must
// stay below the inter-frame fg-fg similarity by the margin.
double diffusion_loss_fg(const ProbMap& pred_a, const ProbMap& pred_b, const FeatureMap& feat_a,
                         const FeatureMap& feat_b, const DiffusionMargins& margins);

// Background counterpart with margin m_bg.
double diffusion_loss_bg(const ProbMap& pred_a, const ProbMap& pred_b, const FeatureMap& feat_a,
                         const FeatureMap& feat_b, const DiffusionMargins& margins);

// Full objective: anchor losses of both frames plus both diffusion terms.
PairLossBreakdown full_loss(const FramePair& pair, const ProbMap& pred_a, const ProbMap& pred_b,
                            const FeatureMap& feat_a, const FeatureMap& feat_b,
                            const DiffusionMargins& margins, LossTerms terms = LossTerms::full());

// Training core: evaluates the enabled terms and, when gradient buffers are
// supplied (same size as the predictions), overwrites them with the analytic
// d total / d p. Predictions and gradients are double buffers so finite
// difference verification is not limited by storage precision.
PairLossBreakdown full_loss_grad(std::span<const double> pred_a, std::span<const double> pred_b,
                                 const AnchorPair& anchors_a, const AnchorPair& anchors_b,
                                 const FeatureMap& feat_a, const FeatureMap& feat_b,
                                 const DiffusionMargins& margins, LossTerms terms,
                                 std::span<double> grad_a = {}, std::span<double> grad_b = {});

} // namespace sdseg
