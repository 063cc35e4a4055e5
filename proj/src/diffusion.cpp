#include "sdseg/diffusion.hpp"

#include <cmath>

namespace sdseg {

namespace {

struct CosineGrad {
    double value = 0.0;
    std::vector<double> du, dv;
    bool degenerate = false;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// cosine value plus partials w.r.t. both arguments; the zero-vector case is
// pinned to value 0 with zero partials
CosineGrad cosine_grad(const RegionFeature& u, const RegionFeature& v, bool want_grad) {
    CosineGrad out;
    const std::size_t d = u.vector.size();
    const double nu = std::sqrt(dot(u.vector, u.vector));
    const double nv = std::sqrt(dot(v.vector, v.vector));
    if (nu == 0.0 || nv == 0.0) {
        out.degenerate = true;
        if (want_grad) {
            out.du.assign(d, 0.0);
            out.dv.assign(d, 0.0);
        }
        return out;
    }
    const double uv = dot(u.vector, v.vector);
    out.value = uv / (nu * nv);
    if (want_grad) {
        out.du.resize(d);
        out.dv.resize(d);
        const double inv = 1.0 / (nu * nv);
        for (std::size_t i = 0; i < d; ++i) {
            out.du[i] = v.vector[i] * inv - out.value * u.vector[i] / (nu * nu);
            out.dv[i] = u.vector[i] * inv - out.value * v.vector[i] / (nv * nv);
        }
    }
    return out;
}

void check_features(std::span<const double> pred, const FeatureMap& f, const char* what) {
    if (f.channels < 1) throw ShapeError(std::string(what) + ": feature map has no channels");
    if (pred.size() != static_cast<std::size_t>(f.shape.pixels()))
        throw ShapeError(std::string(what) + ": prediction size " + std::to_string(pred.size()) +
                         " vs feature grid " + to_string(f.shape));
}

std::vector<double> to_double(const ProbMap& m) {
    return std::vector<double>(m.values.begin(), m.values.end());
}

} // namespace

std::pair<RegionFeature, RegionFeature> aggregate_features(std::span<const double> prediction,
                                                           const FeatureMap& features) {
    check_features(prediction, features, "aggregate_features");
    const int d = features.channels;
    RegionFeature fg{std::vector<double>(d, 0.0), Region::foreground};
    RegionFeature bg{std::vector<double>(d, 0.0), Region::background};
    const std::int64_t n = features.shape.pixels();
    for (std::int64_t i = 0; i < n; ++i) {
        const float* f = features.pixel(i);
        const double p = prediction[static_cast<std::size_t>(i)];
        const double q = 1.0 - p;
        for (int k = 0; k < d; ++k) {
            fg.vector[k] += p * f[k];
            bg.vector[k] += q * f[k];
        }
    }
    return {std::move(fg), std::move(bg)};
}

std::pair<RegionFeature, RegionFeature> aggregate_features(const ProbMap& prediction,
                                                           const FeatureMap& features) {
    require_same_shape(prediction.shape, features.shape, "aggregate_features");
    auto p = to_double(prediction);
    return aggregate_features(std::span<const double>(p), features);
}

double cosine_similarity(const RegionFeature& u, const RegionFeature& v) {
    if (u.vector.size() != v.vector.size())
        throw ShapeError("cosine_similarity: dimension mismatch");
    return cosine_grad(u, v, false).value;
}

PairLossBreakdown full_loss_grad(std::span<const double> pred_a, std::span<const double> pred_b,
                                 const AnchorPair& anchors_a, const AnchorPair& anchors_b,
                                 const FeatureMap& feat_a, const FeatureMap& feat_b,
                                 const DiffusionMargins& margins, LossTerms terms,
                                 std::span<double> grad_a, std::span<double> grad_b) {
    const bool want_grad = !grad_a.empty() || !grad_b.empty();
    if (want_grad && (grad_a.size() != pred_a.size() || grad_b.size() != pred_b.size()))
        throw ShapeError("full_loss_grad: gradient buffer size mismatch");
    if (feat_a.channels != feat_b.channels)
        throw ShapeError("full_loss_grad: feature channel mismatch");
    if (want_grad) {
        std::fill(grad_a.begin(), grad_a.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
    }

    PairLossBreakdown out;
    if (terms.anchor) {
        out.anchor_a = anchor_loss(pred_a, anchors_a, grad_a);
        out.anchor_b = anchor_loss(pred_b, anchors_b, grad_b);
    }

    if (terms.dif_fg || terms.dif_bg) {
        check_features(pred_a, feat_a, "full_loss_grad");
        check_features(pred_b, feat_b, "full_loss_grad");
        auto [fg_a, bg_a] = aggregate_features(pred_a, feat_a);
        auto [fg_b, bg_b] = aggregate_features(pred_b, feat_b);

        auto intra_a = cosine_grad(fg_a, bg_a, want_grad);
        auto intra_b = cosine_grad(fg_b, bg_b, want_grad);
        auto inter_fg = cosine_grad(fg_a, fg_b, want_grad);
        auto inter_bg = cosine_grad(bg_a, bg_b, want_grad);
        out.degenerate_region =
            intra_a.degenerate || intra_b.degenerate || inter_fg.degenerate || inter_bg.degenerate;

        const double intra_sum = intra_a.value + intra_b.value;
        const double h_fg = intra_sum - 2.0 * inter_fg.value + margins.m_fg;
        const double h_bg = intra_sum - 2.0 * inter_bg.value + margins.m_bg;
        const bool fg_active = terms.dif_fg && h_fg > 0.0;
        const bool bg_active = terms.dif_bg && h_bg > 0.0;
        if (terms.dif_fg) out.dif_fg = std::max(h_fg, 0.0);
        if (terms.dif_bg) out.dif_bg = std::max(h_bg, 0.0);

        if (want_grad && (fg_active || bg_active)) {
            const int d = feat_a.channels;
            // direction vectors: d total / d f_fg and d f_bg, per frame;
            // d f_fg / d p_i = +F_i and d f_bg / d p_i = -F_i
            std::vector<double> dir_a(d, 0.0), dir_b(d, 0.0);
            for (int k = 0; k < d; ++k) {
                if (fg_active) {
                    dir_a[k] += intra_a.du[k] - intra_a.dv[k] - 2.0 * inter_fg.du[k];
                    dir_b[k] += intra_b.du[k] - intra_b.dv[k] - 2.0 * inter_fg.dv[k];
                }
                if (bg_active) {
                    dir_a[k] += intra_a.du[k] - intra_a.dv[k] + 2.0 * inter_bg.du[k];
                    dir_b[k] += intra_b.du[k] - intra_b.dv[k] + 2.0 * inter_bg.dv[k];
                }
            }
            const std::int64_t na = feat_a.shape.pixels();
            for (std::int64_t i = 0; i < na; ++i) {
                const float* f = feat_a.pixel(i);
                double s = 0.0;
                for (int k = 0; k < d; ++k) s += dir_a[k] * f[k];
                grad_a[static_cast<std::size_t>(i)] += s;
            }
            const std::int64_t nb = feat_b.shape.pixels();
            for (std::int64_t i = 0; i < nb; ++i) {
                const float* f = feat_b.pixel(i);
                double s = 0.0;
                for (int k = 0; k < d; ++k) s += dir_b[k] * f[k];
                grad_b[static_cast<std::size_t>(i)] += s;
            }
        }
    }

    out.total = out.anchor_a + out.anchor_b + out.dif_fg + out.dif_bg;
    return out;
}

double diffusion_loss_fg(const ProbMap& pred_a, const ProbMap& pred_b, const FeatureMap& feat_a,
                         const FeatureMap& feat_b, const DiffusionMargins& margins) {
    auto pa = to_double(pred_a);
    auto pb = to_double(pred_b);
    AnchorPair unused;
    unused.positive = ProbMap(pred_a.shape);
    unused.negative = ProbMap(pred_a.shape);
    return full_loss_grad(pa, pb, unused, unused, feat_a, feat_b, margins, {false, true, false})
        .dif_fg;
}

double diffusion_loss_bg(const ProbMap& pred_a, const ProbMap& pred_b, const FeatureMap& feat_a,
                         const FeatureMap& feat_b, const DiffusionMargins& margins) {
    auto pa = to_double(pred_a);
    auto pb = to_double(pred_b);
    AnchorPair unused;
    unused.positive = ProbMap(pred_a.shape);
    unused.negative = ProbMap(pred_a.shape);
    return full_loss_grad(pa, pb, unused, unused, feat_a, feat_b, margins, {false, false, true})
        .dif_bg;
}

PairLossBreakdown full_loss(const FramePair& pair, const ProbMap& pred_a, const ProbMap& pred_b,
                            const FeatureMap& feat_a, const FeatureMap& feat_b,
                            const DiffusionMargins& margins, LossTerms terms) {
    auto pa = to_double(pred_a);
    auto pb = to_double(pred_b);
    return full_loss_grad(pa, pb, *pair.anchors_a, *pair.anchors_b, feat_a, feat_b, margins, terms);
}

} // namespace sdseg
