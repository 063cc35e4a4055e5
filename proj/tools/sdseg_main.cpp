#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "sdseg/io.hpp"
#include "sdseg/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> setting;
    std::optional<int> supervision;
};

sdseg::PipelineConfig resolve_config(const std::string& config_path, const Overrides& ov) {
    sdseg::PipelineConfig config;
    if (!config_path.empty()) config = sdseg::load_config(config_path);
    if (ov.seed) {
        config.seed = *ov.seed;
        config.train.seed = *ov.seed;
    }
    if (ov.setting) {
        if (*ov.setting == "ss") config.train.setting = sdseg::Setting::SS;
        else if (*ov.setting == "tt") config.train.setting = sdseg::Setting::TT;
        else throw sdseg::ConfigError("--setting must be ss or tt");
    }
    if (ov.supervision) {
        if (*ov.supervision != 0 && *ov.supervision != 50 && *ov.supervision != 100)
            throw sdseg::ConfigError("--supervision must be 0, 50 or 100");
        config.train.supervision = static_cast<sdseg::Supervision>(*ov.supervision);
    }
    config.validate();
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unsupervised binary instrument segmentation: cue anchors, semantic "
                 "diffusion training, Otsu post-processing, IoU/Dice evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    app.add_option("--config", config_path, "pipeline config JSON");
    app.add_option("--seed", ov.seed, "override the config seed");
    app.add_option("--setting", ov.setting, "override the experiment setting (ss|tt)");
    app.add_option("--supervision", ov.supervision, "override supervision (0|50|100)");

    auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark dataset");
    std::string synth_out = "synth_data";
    sdseg::SyntheticSceneSpec spec;
    std::string synth_config_out;
    synth->add_option("--out", synth_out, "dataset output directory");
    synth->add_option("--videos", spec.num_videos, "number of videos");
    synth->add_option("--frames", spec.frames_per_video, "frames per video");
    synth->add_option("--height", spec.shape.height, "frame height");
    synth->add_option("--width", spec.shape.width, "frame width");
    synth->add_option("--synth-seed", spec.seed, "generator seed");
    synth->add_option("--config-out", synth_config_out,
                      "also write a ready-to-train config pointing at the dataset");

    auto* cues = app.add_subcommand("cues", "compute (and cache) cue maps");
    std::string cues_out;
    cues->add_option("--out", cues_out, "cache directory (defaults to config cue_cache_dir)");

    auto* anchors = app.add_subcommand("anchors", "fuse cues and export anchor maps");
    std::string anchors_out = "anchors_out";
    anchors->add_option("--out", anchors_out, "output directory");

    auto* train = app.add_subcommand("train", "train the segmentation network");

    auto* infer = app.add_subcommand("infer", "write prediction maps for every frame");
    std::string infer_ckpt, infer_out = "predictions";
    infer->add_option("--checkpoint", infer_ckpt, "checkpoint file");
    infer->add_option("--out", infer_out, "output directory");

    auto* eval = app.add_subcommand("eval", "evaluate predictions against ground truth");
    std::string eval_ckpt;
    eval->add_option("--checkpoint", eval_ckpt,
                     "checkpoint file (SS) or training output directory (TT)");

    auto* ablate = app.add_subcommand("ablate", "run the ablation grids");
    std::string grid = "losses";
    ablate->add_option("--grid", grid, "losses | cues | both");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            auto data = sdseg::generate_synthetic(spec);
            sdseg::write_synthetic_dataset(data, synth_out);
            std::int64_t frames = 0;
            for (const auto& v : data.videos) frames += v.length();
            std::cout << "wrote " << data.videos.size() << " videos / " << frames
                      << " frames to " << synth_out << "\n";
            if (!synth_config_out.empty()) {
                sdseg::PipelineConfig config;
                if (!config_path.empty()) config = sdseg::load_config(config_path);
                config.dataset_root = synth_out;
                config.working = spec.shape;
                sdseg::save_config(synth_config_out, config);
                std::cout << "wrote config to " << synth_config_out << "\n";
            }
            return 0;
        }

        auto config = resolve_config(config_path, ov);

        if (cues->parsed()) {
            if (!cues_out.empty()) config.cue_cache_dir = cues_out;
            if (config.cue_cache_dir.empty())
                throw sdseg::ConfigError("cues: set --out or cue_cache_dir in the config");
            auto dataset = sdseg::load_dataset(sdseg::DatasetLayout{config.dataset_root},
                                               config.working, false);
            auto provider = sdseg::make_objectness_provider(config);
            sdseg::CueCacheStats stats;
            sdseg::compute_cues_cached(dataset.videos, *provider, config.location,
                                       config.gaussian_sigma_frac, config.cue_cache_dir, &stats);
            std::cout << "cue cache: " << stats.computed << " computed, " << stats.hits
                      << " hits, " << stats.overwritten << " overwritten\n";
        } else if (anchors->parsed()) {
            auto data = sdseg::prepare_data(config,
                                            config.train.supervision != sdseg::Supervision::none);
            for (std::size_t v = 0; v < data.dataset.videos.size(); ++v) {
                const auto& video = data.dataset.videos[v];
                for (std::size_t t = 0; t < video.frames.size(); ++t) {
                    const auto& stem = video.frames[t].stem;
                    const auto& anc = data.anchors[v][t];
                    sdseg::io::write_probmap_png16(
                        fs::path(anchors_out) / video.video_id / (stem + ".apos.png"), anc.positive);
                    sdseg::io::write_probmap_png16(
                        fs::path(anchors_out) / video.video_id / (stem + ".aneg.png"), anc.negative);
                }
            }
            std::cout << "anchors written to " << anchors_out << "\n";
        } else if (train->parsed()) {
            auto out = sdseg::run_train(config);
            std::cout << "training finished: " << out.string() << "\n";
        } else if (infer->parsed()) {
            if (infer_ckpt.empty())
                infer_ckpt = (fs::path(config.output_dir) / "checkpoint.ckpt").string();
            sdseg::run_infer(config, infer_ckpt, infer_out);
            std::cout << "predictions written to " << infer_out << "\n";
        } else if (eval->parsed()) {
            if (eval_ckpt.empty()) {
                eval_ckpt = config.train.setting == sdseg::Setting::SS
                                ? (fs::path(config.output_dir) / "checkpoint.ckpt").string()
                                : config.output_dir;
            }
            auto report = sdseg::run_eval(config, eval_ckpt);
            std::cout << report.human_table();
        } else if (ablate->parsed()) {
            std::cout << sdseg::run_ablate(config, grid);
        }
        return 0;
    } catch (const sdseg::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const sdseg::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const sdseg::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
