#include "sdseg/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>

#include <nlohmann/json.hpp>

#include "sdseg/io.hpp"

namespace sdseg {

namespace fs = std::filesystem;

namespace {

bool numeric_stem(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

} // namespace

LoadedDataset load_dataset(const DatasetLayout& layout, ImageShape working, bool with_masks) {
    if (!fs::is_directory(layout.root))
        throw DataError("dataset root is not a directory: " + layout.root.string());
    if (!working.valid()) throw ConfigError("load_dataset: invalid working resolution");

    std::vector<std::string> video_ids;
    for (const auto& entry : fs::directory_iterator(layout.root))
        if (entry.is_directory()) video_ids.push_back(entry.path().filename().string());
    std::sort(video_ids.begin(), video_ids.end());
    if (video_ids.empty()) throw DataError("dataset has no video directories: " + layout.root.string());

    LoadedDataset data;
    data.masks_loaded = with_masks;
    for (const auto& vid : video_ids) {
        const fs::path frames_dir = layout.root / vid / layout.frames_dir;
        if (!fs::is_directory(frames_dir))
            throw DataError("video " + vid + " has no '" + layout.frames_dir + "' directory");

        std::map<long, fs::path> by_index;
        for (const auto& entry : fs::directory_iterator(frames_dir)) {
            if (!entry.is_regular_file()) continue;
            const std::string stem = entry.path().stem().string();
            if (!numeric_stem(stem))
                throw DataError("frame file without a numeric index: " + entry.path().string());
            by_index[std::stol(stem)] = entry.path();
        }
        if (by_index.empty()) throw DataError("video " + vid + " has no frames");

        // indices must be consecutive; report every gap at once
        std::string gaps;
        long expected = by_index.begin()->first;
        for (const auto& [idx, _] : by_index) {
            for (; expected < idx; ++expected) gaps += " " + std::to_string(expected);
            ++expected;
        }
        if (!gaps.empty())
            throw DataError("video " + vid + " has frame index gaps:" + gaps);

        VideoSequence video;
        video.video_id = vid;
        std::vector<BinaryMask> masks;
        int t = 0;
        for (const auto& [idx, path] : by_index) {
            FrameSample native = io::read_frame_png8(path);
            if (with_masks) {
                const fs::path mask_path = layout.root / vid / layout.masks_dir /
                                           (path.stem().string() + path.extension().string());
                if (fs::exists(mask_path)) {
                    BinaryMask m = io::read_mask_png8(mask_path);
                    if (!(m.shape == native.shape))
                        throw ShapeError("mask " + mask_path.string() + " is " + to_string(m.shape) +
                                         " but frame is " + to_string(native.shape));
                    masks.push_back(io::resize_mask(m, working));
                } else {
                    masks.emplace_back(); // absent
                }
            }
            FrameSample frame = io::resize_frame(native, working);
            frame.video_id = vid;
            frame.t = t++;
            video.frames.push_back(std::move(frame));
        }
        data.videos.push_back(std::move(video));
        if (with_masks) data.masks.push_back(std::move(masks));
    }
    return data;
}

namespace {

ProbMap location_map_for(const VideoSequence& video, const std::vector<ProbMap>& color_maps,
                         const std::string& mode, float sigma_frac) {
    if (mode == "video_mean") return location_cue_video(video, color_maps);
    if (mode == "gaussian")
        return location_cue_gaussian(color_maps.front().shape, sigma_frac);
    throw ConfigError("unknown location cue mode: " + mode + " (expected video_mean or gaussian)");
}

} // namespace

std::vector<std::vector<CueSet>> compute_cues(const std::vector<VideoSequence>& videos,
                                              const ObjectnessProvider& objectness,
                                              const std::string& location_mode,
                                              float gaussian_sigma_frac) {
    std::vector<std::vector<CueSet>> out;
    for (const auto& video : videos) {
        std::vector<ProbMap> colors;
        colors.reserve(video.frames.size());
        for (const auto& frame : video.frames) colors.push_back(color_cue(frame));
        ProbMap loc = location_map_for(video, colors, location_mode, gaussian_sigma_frac);
        std::vector<CueSet> cues;
        cues.reserve(video.frames.size());
        for (std::size_t i = 0; i < video.frames.size(); ++i) {
            CueSet c;
            c.color = std::move(colors[i]);
            c.objectness = objectness_cue(video.frames[i], objectness);
            c.location = loc;
            cues.push_back(std::move(c));
        }
        out.push_back(std::move(cues));
    }
    return out;
}

namespace {

std::uint64_t frame_hash(const FrameSample& frame, const std::string& provider_desc,
                         const std::string& location_mode, float sigma_frac) {
    std::uint64_t h = fnv1a(frame.rgb.data(), frame.rgb.size() * sizeof(float));
    h = fnv1a(provider_desc, h);
    h = fnv1a(location_mode, h);
    h = fnv1a(&sigma_frac, sizeof(sigma_frac), h);
    return h;
}

} // namespace

std::vector<std::vector<CueSet>> compute_cues_cached(
    const std::vector<VideoSequence>& videos, const ObjectnessProvider& objectness,
    const std::string& location_mode, float gaussian_sigma_frac,
    const std::filesystem::path& cache_dir, CueCacheStats* stats) {
    fs::create_directories(cache_dir);
    const fs::path manifest_path = cache_dir / "manifest.json";
    nlohmann::json manifest;
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        manifest = nlohmann::json::parse(in, nullptr, false);
        if (manifest.is_discarded()) manifest = nlohmann::json::object();
    }
    if (!manifest.contains("entries")) manifest["entries"] = nlohmann::json::object();
    auto& entries = manifest["entries"];

    CueCacheStats local;
    CueCacheStats& st = stats ? *stats : local;
    std::vector<std::vector<CueSet>> out;

    for (const auto& video : videos) {
        const fs::path vdir = cache_dir / video.video_id;
        const fs::path loc_path = vdir / "location.png";

        // hash of the whole video context (location depends on every frame)
        std::uint64_t video_hash = fnv1a(video.video_id);
        for (const auto& frame : video.frames)
            video_hash ^= frame_hash(frame, objectness.describe(), location_mode, gaussian_sigma_frac);

        std::vector<CueSet> cues(video.frames.size());
        std::vector<bool> need(video.frames.size(), false);
        bool need_location = false;

        const std::string loc_key = video.video_id + "/__location__";
        if (!entries.contains(loc_key) || entries[loc_key].get<std::uint64_t>() != video_hash ||
            !fs::exists(loc_path)) {
            if (entries.contains(loc_key) && fs::exists(loc_path) &&
                entries[loc_key].get<std::uint64_t>() != video_hash) {
                std::cerr << "cue cache: stale location map for " << video.video_id
                          << ", recomputing\n";
                ++st.overwritten;
            }
            need_location = true;
        }

        for (std::size_t i = 0; i < video.frames.size(); ++i) {
            const auto& frame = video.frames[i];
            const std::string key = video.video_id + "/" + frame.stem;
            const std::uint64_t h =
                frame_hash(frame, objectness.describe(), location_mode, gaussian_sigma_frac);
            const fs::path color_path = vdir / (frame.stem + ".color.png");
            const fs::path obj_path = vdir / (frame.stem + ".obj.png");
            bool hit = entries.contains(key) && entries[key].get<std::uint64_t>() == h &&
                       fs::exists(color_path) && fs::exists(obj_path);
            if (entries.contains(key) && entries[key].get<std::uint64_t>() != h &&
                fs::exists(color_path)) {
                std::cerr << "cue cache: hash mismatch for " << key << ", recomputing\n";
                ++st.overwritten;
            }
            if (hit) {
                cues[i].color = io::read_probmap_png16(color_path);
                cues[i].objectness = io::read_probmap_png16(obj_path);
                ++st.hits;
            } else {
                need[i] = true;
                need_location = true; // location is the mean of fresh color maps
            }
            entries[key] = h;
        }

        // recompute what is missing
        if (need_location) {
            std::vector<ProbMap> colors(video.frames.size());
            for (std::size_t i = 0; i < video.frames.size(); ++i) {
                if (need[i]) {
                    colors[i] = color_cue(video.frames[i]);
                    cues[i].color = colors[i];
                    cues[i].objectness = objectness_cue(video.frames[i], objectness);
                    io::write_probmap_png16(vdir / (video.frames[i].stem + ".color.png"),
                                            cues[i].color);
                    io::write_probmap_png16(vdir / (video.frames[i].stem + ".obj.png"),
                                            cues[i].objectness);
                    ++st.computed;
                } else {
                    colors[i] = cues[i].color;
                }
            }
            ProbMap loc =
                location_map_for(video, colors, location_mode, gaussian_sigma_frac);
            io::write_probmap_png16(loc_path, loc);
            entries[loc_key] = video_hash;
            for (auto& c : cues) c.location = loc;
        } else {
            ProbMap loc = io::read_probmap_png16(loc_path);
            for (auto& c : cues) c.location = loc;
        }
        out.push_back(std::move(cues));
    }

    std::ofstream mf(manifest_path);
    mf << manifest.dump(2) << "\n";
    return out;
}

std::vector<std::vector<AnchorPair>> prepare_anchors(const LoadedDataset& data,
                                                     const std::vector<std::vector<CueSet>>& cues,
                                                     Supervision supervision) {
    if (cues.size() != data.videos.size())
        throw DataError("prepare_anchors: cue table does not match the dataset");
    std::vector<std::vector<AnchorPair>> out;
    for (std::size_t v = 0; v < data.videos.size(); ++v) {
        const auto& video = data.videos[v];
        std::vector<AnchorPair> anchors;
        anchors.reserve(video.frames.size());
        for (std::size_t t = 0; t < video.frames.size(); ++t)
            anchors.push_back(fuse_anchors(cues[v][t]));

        for (int t : select_supervised_frames(video, supervision)) {
            if (!data.has_mask(static_cast<int>(v), t))
                throw DataError("supervision " + std::string(to_string(supervision)) +
                                " requires a mask for " + video.video_id + "/t" + std::to_string(t));
            anchors[static_cast<std::size_t>(t)] =
                anchors_from_labels(data.masks[v][static_cast<std::size_t>(t)]);
        }
        out.push_back(std::move(anchors));
    }
    return out;
}

} // namespace sdseg
