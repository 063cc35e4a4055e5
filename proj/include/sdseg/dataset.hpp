#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sdseg/anchors.hpp"
#include "sdseg/cues.hpp"
#include "sdseg/image.hpp"
#include "sdseg/training.hpp"

namespace sdseg {

// On-disk layout:
//   root/<video_id>/frames/<zero-padded index>.png
//   root/<video_id>/masks/<same stem>.png        (optional)
struct DatasetLayout {
    std::filesystem::path root;
    std::string frames_dir = "frames";
    std::string masks_dir = "masks";
};

struct LoadedDataset {
    std::vector<VideoSequence> videos;
    // masks[v][t]; a mask with invalid shape marks "absent". Empty outer
    // vector when masks were not requested at all.
    std::vector<std::vector<BinaryMask>> masks;
    bool masks_loaded = false;

    bool has_mask(int v, int t) const {
        return masks_loaded &&
               masks[static_cast<std::size_t>(v)][static_cast<std::size_t>(t)].shape.valid();
    }
};

// Decodes every video, resizes frames to the working resolution and orders
// them by their zero-padded index. Masks are loaded only when requested (the
// 0%-supervision path never opens them), checked against their frame's
// native resolution, resized and rebinarized at 0.5.
LoadedDataset load_dataset(const DatasetLayout& layout, ImageShape working, bool with_masks);

struct CueCacheStats {
    int computed = 0;
    int hits = 0;
    int overwritten = 0;
};

// Per-frame cue sets, persisted as 16-bit grayscale maps under cache_dir
// with a content-hash manifest. Recomputation is skipped on hash match;
// stale or missing entries are recomputed (and overwritten with a warning
// on hash mismatch). location_map is the per-video map the cues share.
std::vector<std::vector<CueSet>> compute_cues_cached(
    const std::vector<VideoSequence>& videos, const ObjectnessProvider& objectness,
    const std::string& location_mode, float gaussian_sigma_frac,
    const std::filesystem::path& cache_dir, CueCacheStats* stats = nullptr);

// In-memory variant (no persistence).
std::vector<std::vector<CueSet>> compute_cues(const std::vector<VideoSequence>& videos,
                                              const ObjectnessProvider& objectness,
                                              const std::string& location_mode,
                                              float gaussian_sigma_frac);

// Anchors for every frame under the given supervision mode: ground truth on
// the periodically selected subset (which must have masks), fused cues
// elsewhere.
std::vector<std::vector<AnchorPair>> prepare_anchors(const LoadedDataset& data,
                                                     const std::vector<std::vector<CueSet>>& cues,
                                                     Supervision supervision);

} // namespace sdseg
