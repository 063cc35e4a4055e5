#pragma once

#include <filesystem>
#include <string>

#include "sdseg/cues.hpp"
#include "sdseg/training.hpp"

namespace sdseg {

// Everything needed to reproduce a run. Fully serializable; `sdseg train`
// writes the resolved snapshot next to its outputs.
struct PipelineConfig {
    std::string dataset_root;
    ImageShape working{256, 320};

    // cues
    std::string objectness = "builtin"; // or "precomputed"
    std::string objectness_dir;         // for precomputed maps
    GradientObjectnessParams objectness_params;
    std::string location = "video_mean"; // or "gaussian"
    float gaussian_sigma_frac = 0.25f;

    // features
    std::string extractor = "colortex"; // or "vgg16"
    std::string vgg_weights;

    TrainConfig train;

    // evaluation
    int otsu_bins = 256;
    bool score_anchors = false; // also score a_pos and 1 - a_neg
    int n_folds = 4;
    bool write_overlays = false;

    std::string output_dir = "out";
    std::string cue_cache_dir; // empty disables the cache
    std::uint64_t seed = 17;   // mirrored into train.seed on load

    void validate() const;
};

std::string to_json_string(const PipelineConfig& config);
PipelineConfig config_from_json_string(const std::string& text);

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& config);

} // namespace sdseg
