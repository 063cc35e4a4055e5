#include "sdseg/eval.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sdseg {

OtsuResult otsu_threshold(const ProbMap& map, int bins) {
    if (map.values.empty()) throw DataError("otsu_threshold: empty map");
    if (bins < 2) throw ConfigError("otsu_threshold: need at least 2 bins");

    std::vector<std::int64_t> hist(static_cast<std::size_t>(bins), 0);
    for (float v : map.values) {
        int b = static_cast<int>(v * bins);
        b = std::clamp(b, 0, bins - 1);
        ++hist[static_cast<std::size_t>(b)];
    }
    const auto n = static_cast<std::int64_t>(map.values.size());
    std::int64_t m_total = 0;
    for (int b = 0; b < bins; ++b) m_total += hist[static_cast<std::size_t>(b)] * b;

    // Between-class variance at split k is proportional to
    // (M0*N1 - M1*N0)^2 / (N0*N1); candidates are ranked with exact integer
    // arithmetic so ties resolve deterministically toward the lower bin.
    OtsuResult best;
    __int128 best_num = -1;
    std::int64_t best_den = 1;
    std::int64_t n0 = 0, m0 = 0;
    for (int k = 0; k + 1 < bins; ++k) {
        n0 += hist[static_cast<std::size_t>(k)];
        m0 += hist[static_cast<std::size_t>(k)] * k;
        const std::int64_t n1 = n - n0;
        if (n0 == 0 || n1 == 0) continue;
        const std::int64_t m1 = m_total - m0;
        const std::int64_t d = m0 * n1 - m1 * n0;
        const __int128 num = static_cast<__int128>(d) * d;
        const std::int64_t den = n0 * n1;
        // num/den > best_num/best_den, strictly, keeping the first maximum
        if (best_num < 0 || num * best_den > best_num * den) {
            best_num = num;
            best_den = den;
            best.bin_index = k;
        }
    }
    if (best.bin_index < 0 || best_num == 0) {
        // constant (single-bin) map, or zero variance everywhere
        return OtsuResult{1.0, -1, true};
    }
    best.threshold = static_cast<double>(best.bin_index + 1) / bins;
    best.degenerate = false;
    return best;
}

BinaryMask binarize(const ProbMap& map, double threshold) {
    BinaryMask out(map.shape);
    for (std::size_t i = 0; i < map.values.size(); ++i)
        out.values[i] = map.values[i] > threshold ? 1 : 0;
    return out;
}

namespace {

struct OverlapCounts {
    std::int64_t inter = 0, uni = 0, np = 0, ng = 0;
};

OverlapCounts overlap(const BinaryMask& pred, const BinaryMask& gt, const char* what) {
    require_same_shape(pred.shape, gt.shape, what);
    OverlapCounts c;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const bool p = pred.values[i] != 0, g = gt.values[i] != 0;
        c.inter += (p && g);
        c.uni += (p || g);
        c.np += p;
        c.ng += g;
    }
    return c;
}

} // namespace

double iou(const BinaryMask& pred, const BinaryMask& gt) {
    const auto c = overlap(pred, gt, "iou");
    if (c.uni == 0) return 1.0; // both empty
    return static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
    const auto c = overlap(pred, gt, "dice");
    if (c.np + c.ng == 0) return 1.0;
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.np + c.ng);
}

void MetricsReport::recompute() {
    const auto n = static_cast<double>(per_frame.size());
    mean_iou = std_iou = mean_dice = std_dice = 0.0;
    if (per_frame.empty()) return;
    for (const auto& f : per_frame) {
        mean_iou += f.iou;
        mean_dice += f.dice;
    }
    mean_iou /= n;
    mean_dice /= n;
    for (const auto& f : per_frame) {
        std_iou += (f.iou - mean_iou) * (f.iou - mean_iou);
        std_dice += (f.dice - mean_dice) * (f.dice - mean_dice);
    }
    std_iou = std::sqrt(std_iou / n);
    std_dice = std::sqrt(std_dice / n);
}

std::string MetricsReport::human_table() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "Supervision  Setting  Fold  Source           IoU (%)          Dice (%)\n";
    os << supervision << std::string(supervision.size() < 13 ? 13 - supervision.size() : 1, ' ')
       << setting << std::string(setting.size() < 9 ? 9 - setting.size() : 1, ' ')
       << (fold.empty() ? "-" : fold) << "     " << source
       << std::string(source.size() < 17 ? 17 - source.size() : 1, ' ')
       << 100.0 * mean_iou << "+-" << 100.0 * std_iou << "      "
       << 100.0 * mean_dice << "+-" << 100.0 * std_dice << "\n";
    if (skipped > 0) os << "(" << skipped << " frames skipped: no ground truth)\n";
    return os.str();
}

MetricsReport evaluate_scored_maps(const std::vector<ScoredMap>& items, int otsu_bins) {
    MetricsReport report;
    for (const auto& item : items) {
        if (item.gt == nullptr) {
            ++report.skipped;
            continue;
        }
        const auto otsu = otsu_threshold(*item.map, otsu_bins);
        const BinaryMask mask = binarize(*item.map, otsu.threshold);
        FrameScore s;
        s.video_id = item.video_id;
        s.t = item.t;
        s.iou = iou(mask, *item.gt);
        s.dice = dice(mask, *item.gt);
        report.per_frame.push_back(std::move(s));
    }
    report.recompute();
    return report;
}

void write_report_jsonl(const std::filesystem::path& path, const MetricsReport& report) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report: " + path.string());
    for (const auto& f : report.per_frame) {
        nlohmann::json rec = {{"type", "frame"},   {"video", f.video_id},
                              {"t", f.t},          {"iou", f.iou},
                              {"dice", f.dice},    {"setting", report.setting},
                              {"supervision", report.supervision}, {"fold", report.fold},
                              {"source", report.source}};
        out << rec.dump() << "\n";
    }
    nlohmann::json summary = {{"type", "summary"},
                              {"mean_iou", report.mean_iou},
                              {"std_iou", report.std_iou},
                              {"mean_dice", report.mean_dice},
                              {"std_dice", report.std_dice},
                              {"frames", report.per_frame.size()},
                              {"skipped", report.skipped},
                              {"setting", report.setting},
                              {"supervision", report.supervision},
                              {"fold", report.fold},
                              {"source", report.source}};
    out << summary.dump() << "\n";
}

} // namespace sdseg
