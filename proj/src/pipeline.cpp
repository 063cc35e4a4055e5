#include "sdseg/pipeline.hpp"

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sdseg/io.hpp"

namespace sdseg {

namespace fs = std::filesystem;

RunLock::RunLock(const fs::path& output_dir) {
    fs::create_directories(output_dir);
    lock_path_ = output_dir / ".lock";
    std::FILE* f = std::fopen(lock_path_.string().c_str(), "wx");
    if (!f)
        throw DataError("output directory is locked by another run: " + lock_path_.string() +
                        " (remove the stale .lock if no run is active)");
    std::fprintf(f, "pid %ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(lock_path_, ec);
}

std::unique_ptr<ObjectnessProvider> make_objectness_provider(const PipelineConfig& config) {
    if (config.objectness == "builtin")
        return std::make_unique<GradientObjectness>(config.objectness_params);
    return std::make_unique<PrecomputedObjectness>(config.objectness_dir);
}

PreparedData prepare_data(const PipelineConfig& config, bool with_masks) {
    config.validate();
    PreparedData out;
    out.working = config.working;
    out.dataset = load_dataset(DatasetLayout{config.dataset_root}, config.working, with_masks);

    auto provider = make_objectness_provider(config);
    if (config.cue_cache_dir.empty()) {
        out.cues = compute_cues(out.dataset.videos, *provider, config.location,
                                config.gaussian_sigma_frac);
    } else {
        out.cues = compute_cues_cached(out.dataset.videos, *provider, config.location,
                                       config.gaussian_sigma_frac, config.cue_cache_dir);
    }
    out.anchors = prepare_anchors(out.dataset, out.cues, config.train.supervision);

    auto extractor = make_extractor(config.extractor, config.vgg_weights);
    for (const auto& video : out.dataset.videos) {
        std::vector<NativeFeatureGrid> grids;
        grids.reserve(video.frames.size());
        for (const auto& frame : video.frames) grids.push_back(extractor->extract_native(frame));
        out.features.push_back(std::move(grids));
    }
    return out;
}

PreparedData subset_videos(const PreparedData& data, const std::vector<std::string>& video_ids) {
    PreparedData out;
    out.working = data.working;
    out.dataset.masks_loaded = data.dataset.masks_loaded;
    for (std::size_t v = 0; v < data.dataset.videos.size(); ++v) {
        const auto& id = data.dataset.videos[v].video_id;
        if (std::find(video_ids.begin(), video_ids.end(), id) == video_ids.end()) continue;
        out.dataset.videos.push_back(data.dataset.videos[v]);
        if (data.dataset.masks_loaded) out.dataset.masks.push_back(data.dataset.masks[v]);
        out.cues.push_back(data.cues[v]);
        out.anchors.push_back(data.anchors[v]);
        out.features.push_back(data.features[v]);
    }
    if (out.dataset.videos.size() != video_ids.size())
        throw DataError("subset_videos: some requested videos are missing from the dataset");
    return out;
}

namespace {

fs::path train_one(const PipelineConfig& config, const PreparedData& data, const fs::path& out_dir,
                   const std::string& fold_tag) {
    fs::create_directories(out_dir);
    std::ofstream log(out_dir / "training_log.jsonl");
    TrainData td{&data.dataset.videos, &data.anchors, &data.features, data.working};
    auto result = run_training(config.train, td, &log, [&](int epoch, const PairLossBreakdown& m) {
        std::cout << (fold_tag.empty() ? "" : "[" + fold_tag + "] ") << "epoch " << epoch
                  << ": L_full=" << m.total << " (anc " << m.anchor_a + m.anchor_b << ", fg "
                  << m.dif_fg << ", bg " << m.dif_bg << ")\n";
    });
    const fs::path ckpt = out_dir / "checkpoint.ckpt";
    save_checkpoint(ckpt, result.net, to_json_string(config));
    return ckpt;
}

std::vector<ScoredMap> scored_maps_for(const std::vector<ProbMap>& maps,
                                       const LoadedDataset& data) {
    std::vector<ScoredMap> items;
    std::size_t k = 0;
    for (std::size_t v = 0; v < data.videos.size(); ++v)
        for (std::size_t t = 0; t < data.videos[v].frames.size(); ++t, ++k) {
            ScoredMap item;
            item.video_id = data.videos[v].video_id;
            item.t = static_cast<int>(t);
            item.map = &maps[k];
            item.gt = data.has_mask(static_cast<int>(v), static_cast<int>(t))
                          ? &data.masks[v][t]
                          : nullptr;
            items.push_back(item);
        }
    return items;
}

std::vector<ProbMap> predict_all(const UNet& net, const LoadedDataset& data) {
    std::vector<ProbMap> preds;
    for (const auto& video : data.videos)
        for (const auto& frame : video.frames) preds.push_back(net.predict(frame));
    return preds;
}

} // namespace

std::filesystem::path run_train(const PipelineConfig& config) {
    config.validate();
    RunLock lock(config.output_dir);
    save_config(fs::path(config.output_dir) / "config.json", config);

    const bool needs_masks = config.train.supervision != Supervision::none;
    PreparedData data = prepare_data(config, needs_masks);

    if (config.train.setting == Setting::SS)
        return train_one(config, data, config.output_dir, "");

    // TT: 4-fold cross-validation over the videos
    std::vector<std::string> ids;
    for (const auto& v : data.dataset.videos) ids.push_back(v.video_id);
    const auto folds = make_folds(ids, config.n_folds, config.seed);
    for (const auto& fold : folds) {
        PreparedData train_data = subset_videos(data, fold.train_videos);
        train_one(config, train_data, fs::path(config.output_dir) / ("fold" + std::to_string(fold.fold_id)),
                  "fold" + std::to_string(fold.fold_id));
    }
    return config.output_dir;
}

void run_infer(const PipelineConfig& config, const fs::path& checkpoint_path,
               const fs::path& out_dir) {
    if (!fs::exists(checkpoint_path))
        throw DataError("checkpoint not found: " + checkpoint_path.string() +
                        " (run `sdseg train` first)");
    auto loaded = load_checkpoint(checkpoint_path);
    LoadedDataset data = load_dataset(DatasetLayout{config.dataset_root},
                                      loaded.net.working_shape(), false);
    for (const auto& video : data.videos)
        for (const auto& frame : video.frames) {
            ProbMap pred = loaded.net.predict(frame);
            io::write_probmap_png16(out_dir / video.video_id / (frame.stem + ".pred.png"), pred);
            if (config.write_overlays) {
                const auto otsu = otsu_threshold(pred, config.otsu_bins);
                io::write_overlay_png(out_dir / video.video_id / (frame.stem + ".overlay.png"),
                                      frame, binarize(pred, otsu.threshold));
            }
        }
}

namespace {

MetricsReport eval_prepared(const PipelineConfig& config, const UNet& net,
                            const LoadedDataset& data, const std::string& fold_tag) {
    auto preds = predict_all(net, data);
    MetricsReport report = evaluate_scored_maps(scored_maps_for(preds, data), config.otsu_bins);
    report.setting = to_string(config.train.setting);
    report.supervision = to_string(config.train.supervision);
    report.fold = fold_tag.empty() ? "-" : fold_tag;
    return report;
}

} // namespace

MetricsReport run_eval(const PipelineConfig& config, const fs::path& checkpoint_or_dir) {
    config.validate();
    const fs::path reports_dir = fs::path(config.output_dir) / "reports";

    MetricsReport merged;
    merged.setting = to_string(config.train.setting);
    merged.supervision = to_string(config.train.supervision);

    if (config.train.setting == Setting::SS) {
        fs::path ckpt = checkpoint_or_dir;
        if (fs::is_directory(ckpt)) ckpt /= "checkpoint.ckpt";
        if (!fs::exists(ckpt))
            throw DataError("checkpoint not found: " + ckpt.string() + " (run `sdseg train` first)");
        auto loaded = load_checkpoint(ckpt);
        LoadedDataset data =
            load_dataset(DatasetLayout{config.dataset_root}, loaded.net.working_shape(), true);
        merged = eval_prepared(config, loaded.net, data, "");
        merged.fold = "-";
    } else {
        if (!fs::is_directory(checkpoint_or_dir))
            throw DataError("TT evaluation expects the training output directory with fold "
                            "checkpoints: " + checkpoint_or_dir.string());
        LoadedDataset data = load_dataset(DatasetLayout{config.dataset_root}, config.working, true);
        std::vector<std::string> ids;
        for (const auto& v : data.videos) ids.push_back(v.video_id);
        const auto folds = make_folds(ids, config.n_folds, config.seed);
        for (const auto& fold : folds) {
            const fs::path ckpt =
                checkpoint_or_dir / ("fold" + std::to_string(fold.fold_id)) / "checkpoint.ckpt";
            if (!fs::exists(ckpt))
                throw DataError("fold checkpoint not found: " + ckpt.string() +
                                " (run `sdseg train` first)");
            auto loaded = load_checkpoint(ckpt);
            LoadedDataset test;
            test.masks_loaded = true;
            for (std::size_t v = 0; v < data.videos.size(); ++v)
                if (std::find(fold.test_videos.begin(), fold.test_videos.end(),
                              data.videos[v].video_id) != fold.test_videos.end()) {
                    test.videos.push_back(data.videos[v]);
                    test.masks.push_back(data.masks[v]);
                }
            MetricsReport r = eval_prepared(config, loaded.net, test,
                                            "fold" + std::to_string(fold.fold_id));
            write_report_jsonl(reports_dir / ("metrics_fold" + std::to_string(fold.fold_id) + ".jsonl"), r);
            merged.per_frame.insert(merged.per_frame.end(), r.per_frame.begin(), r.per_frame.end());
            merged.skipped += r.skipped;
        }
        merged.fold = "all";
        merged.recompute();
    }

    write_report_jsonl(reports_dir / "metrics.jsonl", merged);
    std::ofstream table(reports_dir / "metrics.txt");
    table << merged.human_table();

    if (config.score_anchors) {
        // Otsu on the anchors themselves (no checkpoint involved)
        PreparedData prepared = prepare_data(config, true);
        std::vector<ProbMap> pos, neg_inv;
        for (const auto& video_anchors : prepared.anchors)
            for (const auto& anc : video_anchors) {
                pos.push_back(anc.positive);
                ProbMap inv(anc.negative.shape);
                for (std::size_t i = 0; i < inv.values.size(); ++i)
                    inv.values[i] = 1.f - anc.negative.values[i];
                neg_inv.push_back(std::move(inv));
            }
        MetricsReport rp = evaluate_scored_maps(scored_maps_for(pos, prepared.dataset),
                                                config.otsu_bins);
        rp.source = "anchor_pos";
        rp.setting = merged.setting;
        rp.supervision = merged.supervision;
        write_report_jsonl(reports_dir / "metrics_anchor_pos.jsonl", rp);
        MetricsReport rn = evaluate_scored_maps(scored_maps_for(neg_inv, prepared.dataset),
                                                config.otsu_bins);
        rn.source = "anchor_neg_inv";
        rn.setting = merged.setting;
        rn.supervision = merged.supervision;
        write_report_jsonl(reports_dir / "metrics_anchor_neg_inv.jsonl", rn);
    }
    return merged;
}

namespace {

MetricsReport train_eval_terms(const PipelineConfig& base, const PreparedData& data,
                               LossTerms terms, const std::string& tag) {
    PipelineConfig config = base;
    config.train.terms = terms;
    TrainData td{&data.dataset.videos, &data.anchors, &data.features, data.working};
    auto result = run_training(config.train, td, nullptr);
    MetricsReport report = eval_prepared(config, result.net, data.dataset, tag);
    return report;
}

} // namespace

std::string run_ablate(const PipelineConfig& config, const std::string& grid) {
    config.validate();
    RunLock lock(config.output_dir);
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);

    if (grid == "losses" || grid == "both") {
        PreparedData data = prepare_data(config, true);
        struct Row {
            const char* name;
            LossTerms terms;
        };
        const Row rows[] = {{"anc", {true, false, false}},
                            {"anc+fg", {true, true, false}},
                            {"anc+bg", {true, false, true}},
                            {"anc+fg+bg", {true, true, true}}};
        os << "loss combination    IoU (%)   Dice (%)\n";
        for (const auto& row : rows) {
            MetricsReport r = train_eval_terms(config, data, row.terms, row.name);
            os << row.name << std::string(20 - std::string(row.name).size(), ' ')
               << 100 * r.mean_iou << "     " << 100 * r.mean_dice << "\n";
        }
    }

    if (grid == "cues" || grid == "both") {
        PipelineConfig cfg = config;
        PreparedData data = prepare_data(cfg, true);
        os << "color obj loc    IoU:a_pos  1-a_neg  pred    Dice:a_pos  1-a_neg  pred\n";
        for (int bits = 1; bits < 8; ++bits) {
            const bool with_color = bits & 1, with_obj = bits & 2, with_loc = bits & 4;
            PreparedData variant = data;
            for (std::size_t v = 0; v < variant.cues.size(); ++v)
                for (std::size_t t = 0; t < variant.cues[v].size(); ++t)
                    variant.anchors[v][t] =
                        fuse_anchors(variant.cues[v][t], with_color, with_obj, with_loc);
            std::vector<ProbMap> pos, neg_inv;
            for (const auto& video_anchors : variant.anchors)
                for (const auto& anc : video_anchors) {
                    pos.push_back(anc.positive);
                    ProbMap inv(anc.negative.shape);
                    for (std::size_t i = 0; i < inv.values.size(); ++i)
                        inv.values[i] = 1.f - anc.negative.values[i];
                    neg_inv.push_back(std::move(inv));
                }
            MetricsReport rp = evaluate_scored_maps(scored_maps_for(pos, variant.dataset),
                                                    config.otsu_bins);
            MetricsReport rn = evaluate_scored_maps(scored_maps_for(neg_inv, variant.dataset),
                                                    config.otsu_bins);
            MetricsReport rt = train_eval_terms(config, variant, config.train.terms, "");
            os << (with_color ? "  x  " : "     ") << (with_obj ? " x  " : "    ")
               << (with_loc ? " x      " : "        ") << 100 * rp.mean_iou << "      "
               << 100 * rn.mean_iou << "    " << 100 * rt.mean_iou << "        "
               << 100 * rp.mean_dice << "       " << 100 * rn.mean_dice << "     "
               << 100 * rt.mean_dice << "\n";
        }
    }

    if (os.str().empty())
        throw ConfigError("run_ablate: grid must be 'losses', 'cues' or 'both'");
    std::ofstream out(fs::path(config.output_dir) / ("ablation_" + grid + ".txt"));
    out << os.str();
    return os.str();
}

} // namespace sdseg
