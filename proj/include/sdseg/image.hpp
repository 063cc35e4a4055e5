#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdseg/common.hpp"

namespace sdseg {

struct ImageShape {
    int height = 0;
    int width = 0;

    bool valid() const { return height >= 1 && width >= 1; }
    std::int64_t pixels() const { return static_cast<std::int64_t>(height) * width; }
    bool operator==(const ImageShape&) const = default;
};

inline std::string to_string(const ImageShape& s) {
    return std::to_string(s.height) + "x" + std::to_string(s.width);
}

// Per-pixel probability field in [0,1], row-major. The common currency of
// cues, anchors and network predictions.
struct ProbMap {
    ImageShape shape;
    std::vector<float> values;

    ProbMap() = default;
    explicit ProbMap(ImageShape s, float fill = 0.f)
        : shape(s), values(static_cast<std::size_t>(s.pixels()), fill) {}

    float& at(int r, int c) { return values[static_cast<std::size_t>(r) * shape.width + c]; }
    float at(int r, int c) const { return values[static_cast<std::size_t>(r) * shape.width + c]; }

    bool in_unit_range(float eps = 0.f) const {
        for (float v : values)
            if (!(v >= -eps && v <= 1.f + eps)) return false;
        return true;
    }
};

// Strictly binary mask, values in {0,1}.
struct BinaryMask {
    ImageShape shape;
    std::vector<std::uint8_t> values;

    BinaryMask() = default;
    explicit BinaryMask(ImageShape s, std::uint8_t fill = 0)
        : shape(s), values(static_cast<std::size_t>(s.pixels()), fill) {}

    std::uint8_t& at(int r, int c) { return values[static_cast<std::size_t>(r) * shape.width + c]; }
    std::uint8_t at(int r, int c) const { return values[static_cast<std::size_t>(r) * shape.width + c]; }

    std::int64_t count() const {
        std::int64_t n = 0;
        for (auto v : values) n += (v != 0);
        return n;
    }
};

using GroundTruthMask = BinaryMask;

// One video frame. rgb is interleaved H*W*3 with channel values in [0,1].
struct FrameSample {
    std::string video_id;
    int t = 0;
    std::string stem;        // file stem, e.g. "000017"; used for sidecar files
    std::string source_dir;  // directory the frame was loaded from, if any
    ImageShape shape;
    std::vector<float> rgb;

    float r(int y, int x) const { return rgb[3 * (static_cast<std::size_t>(y) * shape.width + x) + 0]; }
    float g(int y, int x) const { return rgb[3 * (static_cast<std::size_t>(y) * shape.width + x) + 1]; }
    float b(int y, int x) const { return rgb[3 * (static_cast<std::size_t>(y) * shape.width + x) + 2]; }
};

// Time-ordered frames of one video.
struct VideoSequence {
    std::string video_id;
    std::vector<FrameSample> frames;

    int length() const { return static_cast<int>(frames.size()); }
};

inline void require_same_shape(const ImageShape& a, const ImageShape& b, const char* what) {
    if (!(a == b))
        throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

} // namespace sdseg
