#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sdseg/image.hpp"

namespace sdseg {

// Encoder-decoder family descriptor. Defaults follow the reference
// configuration: 4 down/4 up stages, base width 32 doubling per stage,
// bilinear decoder upsampling, single-channel sigmoid head.
struct UNetDescriptor {
    int in_channels = 3;
    int depth = 4;
    int base_width = 32;

    int downsampling_factor() const { return 1 << depth; }
    bool operator==(const UNetDescriptor&) const = default;
};

namespace detail {

struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;

    void resize(int c_, int h_, int w_) {
        c = c_;
        h = h_;
        w = w_;
        v.assign(static_cast<std::size_t>(c) * h * w, 0.f);
    }
    std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
};

struct ConvSpec {
    int cin = 0, cout = 0, k = 3;
    std::size_t w_off = 0, b_off = 0;
    std::size_t weight_count() const { return static_cast<std::size_t>(cout) * cin * k * k; }
};

} // namespace detail

class UNet;

// Per-frame forward/backward state. Workspaces are independent, so several
// frames can be processed in parallel against one read-only network; each
// workspace accumulates parameter gradients into its own buffer.
class UNetWorkspace {
public:
    std::span<const float> prediction() const { return pred_.v; }
    std::span<const float> param_grad() const { return grad_; }
    void zero_param_grad() { std::fill(grad_.begin(), grad_.end(), 0.f); }

private:
    friend class UNet;
    std::vector<detail::Tensor> acts_;     // tape of op outputs
    std::vector<std::vector<int>> argmax_; // per pool layer
    detail::Tensor pred_;                  // sigmoid output [1,h,w]
    std::vector<float> grad_;              // flat, aligned with UNet parameters
    std::vector<float> col_, dcol_, dy_;   // GEMM scratch
    detail::Tensor dx_a_, dx_b_;           // backward ping-pong
};

// Trainable segmentation network. Output shape equals input spatial shape;
// outputs pass through a sigmoid into (0,1).
class UNet {
public:
    // The working resolution must be divisible by 2^depth; violations are
    // rejected here rather than silently padded.
    UNet(UNetDescriptor desc, ImageShape working, std::uint64_t seed);

    const UNetDescriptor& descriptor() const { return desc_; }
    ImageShape working_shape() const { return working_; }

    std::size_t parameter_count() const { return params_.size(); }
    std::span<float> parameters() { return params_; }
    std::span<const float> parameters() const { return params_; }
    std::uint64_t parameter_hash() const { return fnv1a(params_.data(), params_.size() * sizeof(float)); }

    // Evaluation-mode forward pass.
    ProbMap predict(const FrameSample& frame) const;

    // Training-path forward; activations land in the workspace.
    void forward(const FrameSample& frame, UNetWorkspace& ws) const;

    // Backpropagates d loss / d prediction, accumulating parameter
    // gradients into the workspace. Must follow a forward on the same
    // workspace.
    void backward(std::span<const float> dloss_dpred, UNetWorkspace& ws) const;

private:
    friend void save_checkpoint(const std::filesystem::path&, const UNet&, const std::string&);
    friend struct LoadedCheckpoint;

    void build_layout();
    int encoder_width(int stage) const { return desc_.base_width << stage; }

    UNetDescriptor desc_;
    ImageShape working_;
    std::vector<detail::ConvSpec> convs_;
    std::vector<float> params_;
};

// First-order adaptive-moment optimizer over the flat parameter vector.
class AdamOptimizer {
public:
    explicit AdamOptimizer(std::size_t n, double lr = 1e-4, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8);
    void step(std::span<float> params, std::span<const float> grad);
    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<double> m_, v_;
};

// Self-describing checkpoint container: JSON header (architecture
// descriptor, working shape, training config snapshot) followed by the raw
// weight blob.
void save_checkpoint(const std::filesystem::path& path, const UNet& net,
                     const std::string& config_json);

struct LoadedCheckpoint {
    UNet net;
    std::string config_json;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Shared bilinear helpers (align-corners=false convention). Used by the
// decoder and by feature upsampling.
void bilinear_resize_plane(const float* src, int sh, int sw, float* dst, int dh, int dw,
                           int dst_stride = 1);

} // namespace sdseg
