#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sdseg/diffusion.hpp"
#include "sdseg/features.hpp"
#include "sdseg/nn.hpp"

namespace sdseg {

// Fraction of frames supervised with ground truth instead of fused cues.
enum class Supervision { none = 0, half = 50, full = 100 };

inline const char* to_string(Supervision s) {
    switch (s) {
        case Supervision::none: return "0%";
        case Supervision::half: return "50%";
        default: return "100%";
    }
}

// TT: learning and inference on disjoint video sets (cross-validation).
// SS: learning and inference on the same set.
enum class Setting { TT, SS };

inline const char* to_string(Setting s) { return s == Setting::TT ? "tt" : "ss"; }

struct FoldSplit {
    int fold_id = 0;
    std::vector<std::string> train_videos;
    std::vector<std::string> test_videos;
};

// Deterministic partition of the video ids into n_folds disjoint test sets.
std::vector<FoldSplit> make_folds(std::vector<std::string> video_ids, int n_folds = 4,
                                  std::uint64_t seed = 0);

// Externally supplied split table (to reproduce published splits); validated
// to be a partition of the given ids and returned unchanged.
std::vector<FoldSplit> make_folds(const std::vector<std::string>& video_ids,
                                  const std::vector<FoldSplit>& table);

// Frame indices that receive ground-truth anchors: none, every even index
// (the periodic 50% pattern), or all.
std::vector<int> select_supervised_frames(const VideoSequence& video, Supervision supervision);

// A sampled training pair, by (video, frame) indices into the dataset.
struct FramePairRef {
    int video_a = 0;
    int frame_a = 0;
    int video_b = 0;
    int frame_b = 0;
    PairingMode pairing = PairingMode::adjacent;
};

// Adjacent mode: (t, t+stride) within each video. Random mode: uniformly
// sampled unordered pairs of distinct frames across the whole dataset, one
// pair per adjacent-mode slot. Deterministic under seed.
std::vector<FramePairRef> make_pairs(const std::vector<VideoSequence>& videos, PairingMode mode,
                                     int stride, std::uint64_t seed);

struct TrainConfig {
    DiffusionMargins margins;
    int pair_stride = 1;
    PairingMode pairing = PairingMode::adjacent;
    int batch_pairs = 4;
    int epochs = 30;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
    Supervision supervision = Supervision::none;
    Setting setting = Setting::SS;
    LossTerms terms = LossTerms::full();
    UNetDescriptor net;
    int pairs_per_epoch = 0; // 0 = every pair each epoch
    int num_workers = 2;     // fixed, part of the reproducibility contract

    void validate() const;
};

// One pair assembled for a training step (full-resolution features).
struct PairBatchItem {
    const FrameSample* frame_a = nullptr;
    const AnchorPair* anchors_a = nullptr;
    const FeatureMap* feat_a = nullptr;
    const FrameSample* frame_b = nullptr;
    const AnchorPair* anchors_b = nullptr;
    const FeatureMap* feat_b = nullptr;
};

// Scratch reused across steps; one entry pair per worker.
struct TrainWorkspaces {
    struct Worker {
        UNetWorkspace ws_a, ws_b;
        std::vector<double> pred_a, pred_b, grad_a, grad_b;
        std::vector<float> fgrad;
        std::vector<PairLossBreakdown> breakdowns;
    };
    std::vector<Worker> workers;
};

// One optimization step over a batch of pairs: forward both frames of every
// pair, evaluate the objective, backpropagate, apply one optimizer update
// with the batch-mean gradient. Returns the mean pre-update loss breakdown.
// Throws NumericalError (with frame ids and component values) on non-finite
// losses.
PairLossBreakdown train_step(UNet& net, AdamOptimizer& opt, std::span<const PairBatchItem> batch,
                             const DiffusionMargins& margins, LossTerms terms,
                             TrainWorkspaces& scratch, int num_workers = 2);

struct TrainLogRecord {
    int epoch = 0;
    int step = 0;
    double l_anc_a = 0, l_anc_b = 0, l_dif_fg = 0, l_dif_bg = 0, l_full = 0;
};

std::string to_jsonl(const TrainLogRecord& rec);

struct TrainResult {
    UNet net;
    std::vector<TrainLogRecord> log;
};

// Everything the optimization loop needs, prepared by the pipeline: one
// anchor pair per frame (already reflecting the supervision mode) and one
// native feature grid per frame.
struct TrainData {
    const std::vector<VideoSequence>* videos = nullptr;
    const std::vector<std::vector<AnchorPair>>* anchors = nullptr;
    const std::vector<std::vector<NativeFeatureGrid>>* features = nullptr;
    ImageShape working;
};

// Full optimization loop: seeded pair sampling and epoch shuffling, batch
// steps, per-step JSONL records (streamed to log_stream when given).
TrainResult run_training(const TrainConfig& config, const TrainData& data,
                         std::ostream* log_stream = nullptr,
                         const std::function<void(int, const PairLossBreakdown&)>& on_epoch = {});

} // namespace sdseg
