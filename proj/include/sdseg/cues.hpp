#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sdseg/image.hpp"

namespace sdseg {

// The three handcrafted cue maps of one frame, all sharing one shape.
struct CueSet {
    ProbMap color;
    ProbMap objectness;
    ProbMap location;
};

// LAB A channel under the 8-bit convention (a* + 128)/255, clamped to [0,1].
// Inputs are non-linear sRGB values in [0,1].
float lab_a_norm(float r, float g, float b);

// HSV saturation, (max-min)/max with 0 for black.
float hsv_saturation(float r, float g, float b);

// Color cue: (1 - A_norm) * (1 - S). Grayish, low-saturation pixels score
// high; reddish saturated tissue scores low.
ProbMap color_cue(const FrameSample& frame);

// Class-agnostic objectness. Implementations must return per-pixel scores in
// [0,1] at the frame's resolution.
class ObjectnessProvider {
public:
    virtual ~ObjectnessProvider() = default;
    virtual ProbMap objectness(const FrameSample& frame) const = 0;
    virtual std::string describe() const = 0;
};

// Built-in detector: multi-scale sliding windows scored by normalized
// gradient-edge density, splatted back to pixels and min-max normalized per
// frame. A frame with no gradient anywhere yields an all-zero map.
struct GradientObjectnessParams {
    std::vector<float> window_fracs{0.2f, 0.35f, 0.5f}; // of min(H,W)
    float stride_frac = 0.25f;                          // of the window side
};

class GradientObjectness final : public ObjectnessProvider {
public:
    explicit GradientObjectness(GradientObjectnessParams params = {});
    ProbMap objectness(const FrameSample& frame) const override;
    std::string describe() const override;

private:
    GradientObjectnessParams params_;
};

// Loads precomputed per-frame maps from 16-bit grayscale files named
// <frame_stem>.obj.png, either alongside the frames or under a configured
// directory (mirroring the per-video layout). Maps must match the frame
// resolution exactly; no resampling is applied.
class PrecomputedObjectness final : public ObjectnessProvider {
public:
    explicit PrecomputedObjectness(std::string directory = "");
    ProbMap objectness(const FrameSample& frame) const override;
    std::string describe() const override;

private:
    std::string directory_;
};

ProbMap objectness_cue(const FrameSample& frame, const ObjectnessProvider& provider);

// Video-adaptive location prior: pixelwise mean of the per-frame color maps,
// shared by every frame of the video.
ProbMap location_cue_video(const VideoSequence& video, const std::vector<ProbMap>& color_maps);

// Fixed isotropic Gaussian center prior with peak 1; sigma is a fraction of
// the image diagonal.
ProbMap location_cue_gaussian(ImageShape shape, float sigma_frac = 0.25f);

} // namespace sdseg
