#pragma once

#include <filesystem>
#include <memory>

#include "sdseg/config.hpp"
#include "sdseg/dataset.hpp"
#include "sdseg/eval.hpp"
#include "sdseg/synthetic.hpp"

namespace sdseg {

// A run owns its output directory exclusively while it is alive.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& output_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path lock_path_;
};

// Dataset plus everything the trainer consumes, prepared once.
struct PreparedData {
    LoadedDataset dataset;
    std::vector<std::vector<CueSet>> cues;
    std::vector<std::vector<AnchorPair>> anchors;
    std::vector<std::vector<NativeFeatureGrid>> features;
    ImageShape working;
};

std::unique_ptr<ObjectnessProvider> make_objectness_provider(const PipelineConfig& config);

// Loads frames (masks only when the supervision mode needs them), computes
// or restores cues, fuses anchors, extracts frozen features.
PreparedData prepare_data(const PipelineConfig& config, bool with_masks);

// Restrict prepared data to a video subset (fold construction); features,
// cues and anchors follow.
PreparedData subset_videos(const PreparedData& data, const std::vector<std::string>& video_ids);

// Trains per the config. SS writes <output_dir>/checkpoint.ckpt; TT writes
// <output_dir>/fold<k>/checkpoint.ckpt for every cross-validation fold.
// Returns the checkpoint path (SS) or the output directory (TT).
std::filesystem::path run_train(const PipelineConfig& config);

// Writes 16-bit prediction maps (and optional overlays) for every frame.
void run_infer(const PipelineConfig& config, const std::filesystem::path& checkpoint_path,
               const std::filesystem::path& out_dir);

// Otsu-binarized predictions scored against ground truth; SS evaluates the
// single checkpoint on the whole set, TT evaluates each fold's checkpoint on
// its held-out videos and merges. Optionally also scores a_pos and
// 1 - a_neg. Reports are written under <output_dir>/reports.
MetricsReport run_eval(const PipelineConfig& config, const std::filesystem::path& checkpoint_or_dir);

// Ablation grids: "losses" trains {anc, anc+fg, anc+bg, anc+fg+bg} and
// reports IoU/Dice per row; "cues" sweeps the seven cue subsets and scores
// a_pos, 1-a_neg and the trained prediction. Returns the formatted table.
std::string run_ablate(const PipelineConfig& config, const std::string& grid);

} // namespace sdseg
