#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdseg/image.hpp"

namespace sdseg {

struct OtsuResult {
    double threshold = 1.0;
    int bin_index = -1;     // split after this histogram bin; -1 when degenerate
    bool degenerate = false;
};

// Threshold maximizing the between-class variance of a `bins`-bin histogram
// over [0,1]. Ties break toward the lower threshold. A map whose values all
// fall into one bin is degenerate: the returned threshold sits above the
// constant so the foreground comes out empty.
OtsuResult otsu_threshold(const ProbMap& map, int bins = 256);

// value 1 iff map value > threshold
BinaryMask binarize(const ProbMap& map, double threshold);

// Overlap metrics. Both-empty pairs score 1.0 by convention so aggregates
// stay finite.
double iou(const BinaryMask& pred, const BinaryMask& gt);
double dice(const BinaryMask& pred, const BinaryMask& gt);

struct FrameScore {
    std::string video_id;
    int t = 0;
    double iou = 0.0;
    double dice = 0.0;
};

struct MetricsReport {
    std::vector<FrameScore> per_frame;
    double mean_iou = 0.0, std_iou = 0.0;
    double mean_dice = 0.0, std_dice = 0.0;
    std::string setting;     // "tt" or "ss"
    std::string supervision; // "0%", "50%", "100%"
    std::string fold;        // fold id or "-"
    std::string source = "prediction"; // or "anchor_pos", "anchor_neg_inv"
    int skipped = 0;         // frames without ground truth

    // refresh aggregates (mean and population std) from the per-frame rows
    void recompute();
    std::string human_table() const;
};

// One map to score against ground truth; gt == nullptr marks the frame as
// skipped in the report.
struct ScoredMap {
    std::string video_id;
    int t = 0;
    const ProbMap* map = nullptr;
    const BinaryMask* gt = nullptr;
};

// Otsu-binarize each map and score it. Works for network predictions and
// for anchor maps alike.
MetricsReport evaluate_scored_maps(const std::vector<ScoredMap>& items, int otsu_bins = 256);

// Machine-readable report: one JSON record per frame plus a trailing
// summary record.
void write_report_jsonl(const std::filesystem::path& path, const MetricsReport& report);

} // namespace sdseg
