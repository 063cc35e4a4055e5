#pragma once

#include <filesystem>

#include "sdseg/dataset.hpp"
#include "sdseg/image.hpp"

namespace sdseg {

// Desk-scale benchmark generator: gray, low-saturation tool-like shapes
// moving over reddish, highly saturated tissue-like backgrounds, with mild
// lighting drift. Ground-truth masks match the rendered pixels exactly.
struct SyntheticSceneSpec {
    ImageShape shape{128, 160};
    int num_videos = 4;
    int frames_per_video = 60;
    int min_instruments = 2;
    int max_instruments = 3;
    float min_length_frac = 0.55f; // shaft length, fraction of min(H,W)
    float max_length_frac = 0.9f;
    float min_width_frac = 0.16f; // shaft width, fraction of min(H,W)
    float max_width_frac = 0.24f;
    float max_instrument_saturation = 0.06f;
    float min_background_saturation = 0.55f;
    float motion_px = 0.3f;      // translation random-walk scale per frame
    float rotation_rad = 0.003f; // rotation random-walk scale per frame
    float lighting_drift = 0.10f;
    float min_fg_frac = 0.08f;
    float max_fg_frac = 0.45f;
    std::uint64_t seed = 1;
};

struct SyntheticDataset {
    std::vector<VideoSequence> videos;
    std::vector<std::vector<BinaryMask>> masks; // [video][frame]
};

SyntheticDataset generate_synthetic(const SyntheticSceneSpec& spec);

// Persist as a standard DatasetLayout (frames/ + masks/ per video).
void write_synthetic_dataset(const SyntheticDataset& data, const std::filesystem::path& root);

} // namespace sdseg
