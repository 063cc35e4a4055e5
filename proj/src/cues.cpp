#include "sdseg/cues.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <opencv2/imgproc.hpp>

#include "sdseg/io.hpp"

namespace sdseg {

namespace {

inline float srgb_to_linear(float c) {
    return c <= 0.04045f ? c / 12.92f : std::pow((c + 0.055f) / 1.055f, 2.4f);
}

inline float lab_f(float t) {
    // CIE 1976 with the linear segment below (6/29)^3
    constexpr float kCut = 0.008856452f;
    constexpr float kSlope = 7.787037f; // 1/(3*(6/29)^2)
    return t > kCut ? std::cbrt(t) : kSlope * t + 4.f / 29.f;
}

cv::Mat1f luma_plane(const FrameSample& frame) {
    cv::Mat1f luma(frame.shape.height, frame.shape.width);
    for (int y = 0; y < frame.shape.height; ++y)
        for (int x = 0; x < frame.shape.width; ++x)
            luma(y, x) = 0.299f * frame.r(y, x) + 0.587f * frame.g(y, x) + 0.114f * frame.b(y, x);
    return luma;
}

} // namespace

float lab_a_norm(float r, float g, float b) {
    float rl = srgb_to_linear(r), gl = srgb_to_linear(g), bl = srgb_to_linear(b);
    // sRGB D65
    float x = 0.412453f * rl + 0.357580f * gl + 0.180423f * bl;
    float y = 0.212671f * rl + 0.715160f * gl + 0.072169f * bl;
    constexpr float kXn = 0.950456f;
    float a = 500.f * (lab_f(x / kXn) - lab_f(y));
    return std::clamp((a + 128.f) / 255.f, 0.f, 1.f);
}

float hsv_saturation(float r, float g, float b) {
    float mx = std::max({r, g, b});
    float mn = std::min({r, g, b});
    return mx <= 0.f ? 0.f : (mx - mn) / mx;
}

ProbMap color_cue(const FrameSample& frame) {
    ProbMap cue(frame.shape);
    for (int y = 0; y < frame.shape.height; ++y)
        for (int x = 0; x < frame.shape.width; ++x) {
            float r = frame.r(y, x), g = frame.g(y, x), b = frame.b(y, x);
            float v = (1.f - lab_a_norm(r, g, b)) * (1.f - hsv_saturation(r, g, b));
            cue.at(y, x) = std::clamp(v, 0.f, 1.f);
        }
    return cue;
}

GradientObjectness::GradientObjectness(GradientObjectnessParams params) : params_(std::move(params)) {
    if (params_.window_fracs.empty())
        throw ConfigError("objectness: at least one window scale is required");
    for (float f : params_.window_fracs)
        if (!(f > 0.f && f <= 1.f))
            throw ConfigError("objectness: window fractions must lie in (0,1]");
    if (!(params_.stride_frac > 0.f && params_.stride_frac <= 1.f))
        throw ConfigError("objectness: stride fraction must lie in (0,1]");
}

std::string GradientObjectness::describe() const {
    std::string s = "gradient-edge-density(scales=";
    for (std::size_t i = 0; i < params_.window_fracs.size(); ++i)
        s += (i ? "," : "") + std::to_string(params_.window_fracs[i]);
    return s + ",stride=" + std::to_string(params_.stride_frac) + ")";
}

ProbMap GradientObjectness::objectness(const FrameSample& frame) const {
    const int h = frame.shape.height, w = frame.shape.width;
    cv::Mat1f luma = luma_plane(frame);
    cv::Mat1f gx, gy;
    cv::Sobel(luma, gx, CV_32F, 1, 0, 3);
    cv::Sobel(luma, gy, CV_32F, 0, 1, 3);
    cv::Mat1f edge(h, w);
    float emax = 0.f;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float e = std::hypot(gx(y, x), gy(y, x));
            edge(y, x) = e;
            emax = std::max(emax, e);
        }

    ProbMap out(frame.shape, 0.f);
    if (emax <= 0.f) return out; // no gradients anywhere, undefined objectness

    // integral image of the per-frame normalized edge map
    cv::Mat1d integ;
    cv::integral(cv::Mat1f(edge / emax), integ, CV_64F);
    auto window_sum = [&](int y0, int x0, int y1, int x1) { // inclusive box
        return integ(y1 + 1, x1 + 1) - integ(y0, x1 + 1) - integ(y1 + 1, x0) + integ(y0, x0);
    };

    // splat window scores with a difference array, one prefix pass at the end
    std::vector<double> diff(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
    auto splat = [&](int y0, int x0, int y1, int x1, double v) {
        diff[static_cast<std::size_t>(y0) * (w + 1) + x0] += v;
        diff[static_cast<std::size_t>(y0) * (w + 1) + x1 + 1] -= v;
        diff[static_cast<std::size_t>(y1 + 1) * (w + 1) + x0] -= v;
        diff[static_cast<std::size_t>(y1 + 1) * (w + 1) + x1 + 1] += v;
    };

    const int smin = std::min(h, w);
    for (float frac : params_.window_fracs) {
        int side = std::clamp(static_cast<int>(std::lround(frac * smin)), 2, smin);
        int step = std::max(1, static_cast<int>(std::lround(side * params_.stride_frac)));
        for (int y0 = 0;; y0 += step) {
            y0 = std::min(y0, h - side);
            for (int x0 = 0;; x0 += step) {
                x0 = std::min(x0, w - side);
                double density = window_sum(y0, x0, y0 + side - 1, x0 + side - 1) /
                                 (static_cast<double>(side) * side);
                splat(y0, x0, y0 + side - 1, x0 + side - 1, density);
                if (x0 == w - side) break;
            }
            if (y0 == h - side) break;
        }
    }

    std::vector<double> acc(static_cast<std::size_t>(h) * w, 0.0);
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            row += diff[static_cast<std::size_t>(y) * (w + 1) + x];
            double v = row + (y > 0 ? acc[static_cast<std::size_t>(y - 1) * w + x] : 0.0);
            acc[static_cast<std::size_t>(y) * w + x] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi - lo <= 1e-12) return out; // uniform response degenerates to zero
    for (std::int64_t i = 0; i < frame.shape.pixels(); ++i)
        out.values[static_cast<std::size_t>(i)] =
            static_cast<float>((acc[static_cast<std::size_t>(i)] - lo) / (hi - lo));
    return out;
}

PrecomputedObjectness::PrecomputedObjectness(std::string directory) : directory_(std::move(directory)) {}

std::string PrecomputedObjectness::describe() const {
    return "precomputed(" + (directory_.empty() ? std::string("alongside frames") : directory_) + ")";
}

ProbMap PrecomputedObjectness::objectness(const FrameSample& frame) const {
    namespace fs = std::filesystem;
    fs::path path = directory_.empty() ? fs::path(frame.source_dir)
                                       : fs::path(directory_) / frame.video_id;
    path /= frame.stem + ".obj.png";
    if (!fs::exists(path))
        throw DataError("objectness map missing for frame " + frame.video_id + "/" + frame.stem +
                        " (t=" + std::to_string(frame.t) + "): " + path.string());
    ProbMap map = io::read_probmap_png16(path);
    if (!(map.shape == frame.shape))
        throw ShapeError("objectness map for frame " + frame.video_id + "/" + frame.stem + " is " +
                         to_string(map.shape) + ", expected " + to_string(frame.shape));
    return map;
}

ProbMap objectness_cue(const FrameSample& frame, const ObjectnessProvider& provider) {
    ProbMap map = provider.objectness(frame);
    require_same_shape(map.shape, frame.shape, "objectness_cue");
    return map;
}

ProbMap location_cue_video(const VideoSequence& video, const std::vector<ProbMap>& color_maps) {
    if (video.frames.empty() || color_maps.empty())
        throw DataError("location_cue_video: empty video " + video.video_id);
    if (color_maps.size() != video.frames.size())
        throw DataError("location_cue_video: expected one color map per frame for " + video.video_id);
    const ImageShape shape = color_maps.front().shape;
    std::vector<double> sum(static_cast<std::size_t>(shape.pixels()), 0.0);
    for (const auto& m : color_maps) {
        require_same_shape(m.shape, shape, "location_cue_video");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += m.values[i];
    }
    ProbMap out(shape);
    const double inv_t = 1.0 / static_cast<double>(color_maps.size());
    for (std::size_t i = 0; i < sum.size(); ++i)
        out.values[i] = static_cast<float>(std::clamp(sum[i] * inv_t, 0.0, 1.0));
    return out;
}

ProbMap location_cue_gaussian(ImageShape shape, float sigma_frac) {
    if (!shape.valid()) throw DataError("location_cue_gaussian: invalid shape");
    if (!(sigma_frac > 0.f)) throw ConfigError("location_cue_gaussian: sigma_frac must be positive");
    const double diag = std::hypot(static_cast<double>(shape.height), static_cast<double>(shape.width));
    const double sigma = sigma_frac * diag;
    const double cy = (shape.height - 1) / 2.0, cx = (shape.width - 1) / 2.0;
    ProbMap out(shape);
    for (int y = 0; y < shape.height; ++y)
        for (int x = 0; x < shape.width; ++x) {
            double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            out.at(y, x) = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
        }
    return out;
}

} // namespace sdseg
