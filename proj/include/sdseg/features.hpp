#pragma once

#include <memory>
#include <string>

#include "sdseg/diffusion.hpp"
#include "sdseg/image.hpp"

namespace sdseg {

// Features at the extractor's native (stride-16) grid, channel-major
// planes. Kept small for caching; upsample() produces the pixel-major
// FeatureMap consumed by the diffusion losses.
struct NativeFeatureGrid {
    ImageShape shape;
    int channels = 0;
    std::vector<float> planes;

    const float* plane(int c) const { return planes.data() + static_cast<std::size_t>(c) * shape.pixels(); }
};

// Frozen per-frame semantic feature source with a stride-16 tap. Parameters
// are never updated during training; extraction is deterministic.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;

    virtual NativeFeatureGrid extract_native(const FrameSample& frame) const = 0;
    virtual int channels() const = 0;
    virtual int output_stride() const { return 16; }
    virtual std::string tap_name() const = 0;

    // Fingerprint of every internal parameter; training must leave it
    // unchanged.
    virtual std::uint64_t parameter_hash() const = 0;

    // Native grid bilinearly upsampled to the prediction resolution.
    FeatureMap extract(const FrameSample& frame, ImageShape out_shape) const;

    static FeatureMap upsample(const NativeFeatureGrid& grid, ImageShape out_shape);
};

// Built-in extractor: a fixed bank of color-opponent class-evidence
// filters pooled (mean and max) over 16x16 cells. Self-contained (no
// weights file) and frozen by construction.
class ColorTextureExtractor final : public FeatureExtractor {
public:
    NativeFeatureGrid extract_native(const FrameSample& frame) const override;
    int channels() const override { return 10; }
    std::string tap_name() const override { return "evidence_pool16"; }
    std::uint64_t parameter_hash() const override;
};

// Reference configuration: VGG16 convolutional trunk tapped at relu5_3
// (512 channels, output stride 16), ImageNet-pretrained weights loaded from
// a binary file produced by tools/export_vgg16_weights.py. Inputs are
// normalized with the ImageNet per-channel mean/std.
class Vgg16Extractor final : public FeatureExtractor {
public:
    explicit Vgg16Extractor(const std::string& weights_path);

    NativeFeatureGrid extract_native(const FrameSample& frame) const override;
    int channels() const override { return 512; }
    std::string tap_name() const override { return "relu5_3"; }
    std::uint64_t parameter_hash() const override { return weights_hash_; }

    // conv shapes of the trunk, conv1_1 .. conv5_3
    static const std::vector<std::pair<int, int>>& layer_shapes();

private:
    std::vector<std::vector<float>> weights_, biases_;
    std::uint64_t weights_hash_ = 0;
};

// name: "colortex" (built-in) or "vgg16" (requires weights_path).
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name,
                                                 const std::string& vgg_weights_path = "");

} // namespace sdseg
