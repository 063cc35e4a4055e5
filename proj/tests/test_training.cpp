#include <doctest.h>

#include <random>
#include <set>

#include "sdseg/dataset.hpp"
#include "sdseg/synthetic.hpp"
#include "sdseg/training.hpp"

using namespace sdseg;

namespace {

std::vector<VideoSequence> stub_videos(const std::vector<int>& lengths) {
    std::vector<VideoSequence> videos;
    for (std::size_t v = 0; v < lengths.size(); ++v) {
        VideoSequence video;
        video.video_id = "v" + std::to_string(v);
        for (int t = 0; t < lengths[v]; ++t) {
            FrameSample f;
            f.video_id = video.video_id;
            f.t = t;
            video.frames.push_back(std::move(f));
        }
        videos.push_back(std::move(video));
    }
    return videos;
}

struct TinyRun {
    SyntheticDataset data;
    std::vector<std::vector<CueSet>> cues;
    std::vector<std::vector<AnchorPair>> anchors;
    std::vector<std::vector<NativeFeatureGrid>> features;
    ImageShape working;
};

TinyRun make_tiny_run(std::uint64_t seed) {
    SyntheticSceneSpec spec;
    spec.shape = ImageShape{64, 80};
    spec.num_videos = 1;
    spec.frames_per_video = 8;
    spec.seed = seed;
    TinyRun run;
    run.working = spec.shape;
    run.data = generate_synthetic(spec);
    GradientObjectness provider;
    run.cues = compute_cues(run.data.videos, provider, "video_mean", 0.25f);
    for (std::size_t v = 0; v < run.data.videos.size(); ++v) {
        std::vector<AnchorPair> anchors;
        for (const auto& c : run.cues[v]) anchors.push_back(fuse_anchors(c));
        run.anchors.push_back(std::move(anchors));
    }
    ColorTextureExtractor ext;
    for (const auto& video : run.data.videos) {
        std::vector<NativeFeatureGrid> grids;
        for (const auto& frame : video.frames) grids.push_back(ext.extract_native(frame));
        run.features.push_back(std::move(grids));
    }
    return run;
}

TrainConfig tiny_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.net = UNetDescriptor{3, 2, 4};
    cfg.epochs = 3;
    cfg.batch_pairs = 4;
    cfg.learning_rate = 1e-3;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("make_pairs: adjacent counting and video boundaries") {
    auto videos = stub_videos({5});
    SUBCASE("stride 1 on T=5 yields the 4 consecutive pairs") {
        auto pairs = make_pairs(videos, PairingMode::adjacent, 1, 0);
        REQUIRE(pairs.size() == 4);
        for (int i = 0; i < 4; ++i) {
            CHECK(pairs[static_cast<std::size_t>(i)].frame_a == i);
            CHECK(pairs[static_cast<std::size_t>(i)].frame_b == i + 1);
        }
    }
    SUBCASE("stride 2 on T=5 yields 3 pairs") {
        CHECK(make_pairs(videos, PairingMode::adjacent, 2, 0).size() == 3);
    }
    SUBCASE("pairs never span videos") {
        auto two = stub_videos({4, 6});
        for (const auto& p : make_pairs(two, PairingMode::adjacent, 2, 0)) {
            CHECK(p.video_a == p.video_b);
            CHECK(p.frame_b - p.frame_a == 2);
        }
    }
    SUBCASE("stride >= shortest video is rejected") {
        CHECK_THROWS_AS(make_pairs(stub_videos({5, 3}), PairingMode::adjacent, 3, 0), ConfigError);
        CHECK_THROWS_AS(make_pairs({}, PairingMode::adjacent, 1, 0), DataError);
    }
}

TEST_CASE("make_pairs: random mode is seed-deterministic") {
    auto videos = stub_videos({6, 5});
    auto a = make_pairs(videos, PairingMode::random_pairs, 1, 42);
    auto b = make_pairs(videos, PairingMode::random_pairs, 1, 42);
    REQUIRE(a.size() == b.size());
    CHECK(a.size() == 9); // same count as the adjacent slots
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].video_a == b[i].video_a);
        CHECK(a[i].frame_a == b[i].frame_a);
        CHECK(a[i].video_b == b[i].video_b);
        CHECK(a[i].frame_b == b[i].frame_b);
        CHECK((a[i].video_a != a[i].video_b || a[i].frame_a != a[i].frame_b));
    }
    auto c = make_pairs(videos, PairingMode::random_pairs, 1, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        any_diff |= a[i].frame_a != c[i].frame_a || a[i].frame_b != c[i].frame_b;
    CHECK(any_diff);
}

TEST_CASE("select_supervised_frames: periodic halves") {
    auto videos = stub_videos({6});
    CHECK(select_supervised_frames(videos[0], Supervision::none).empty());
    CHECK(select_supervised_frames(videos[0], Supervision::half) == std::vector<int>{0, 2, 4});
    CHECK(select_supervised_frames(videos[0], Supervision::full) ==
          std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("make_folds: partitions and explicit tables") {
    std::vector<std::string> ids;
    for (int i = 0; i < 8; ++i) ids.push_back("video_" + std::to_string(i));

    auto folds = make_folds(ids, 4, 7);
    REQUIRE(folds.size() == 4);
    std::set<std::string> seen;
    for (const auto& f : folds) {
        CHECK(f.test_videos.size() == 2);
        CHECK(f.train_videos.size() == 6);
        for (const auto& v : f.test_videos) {
            CHECK(!seen.contains(v)); // each video in exactly one test set
            seen.insert(v);
        }
    }
    CHECK(seen.size() == 8);

    SUBCASE("deterministic under seed") {
        auto again = make_folds(ids, 4, 7);
        for (std::size_t i = 0; i < folds.size(); ++i)
            CHECK(folds[i].test_videos == again[i].test_videos);
    }
    SUBCASE("explicit table round-trips unchanged") {
        auto table = make_folds(ids, folds);
        for (std::size_t i = 0; i < folds.size(); ++i) {
            CHECK(table[i].test_videos == folds[i].test_videos);
            CHECK(table[i].train_videos == folds[i].train_videos);
        }
    }
    SUBCASE("indivisible counts without a table are rejected") {
        ids.push_back("video_8");
        CHECK_THROWS_AS(make_folds(ids, 4, 0), ConfigError);
    }
    SUBCASE("bad tables are rejected") {
        auto broken = folds;
        broken[0].test_videos[0] = broken[1].test_videos[0]; // duplicate coverage
        CHECK_THROWS_AS(make_folds(ids, broken), ConfigError);
    }
}

TEST_CASE("train_step: loss equals the read-only objective on the same inputs") {
    auto run = make_tiny_run(3);
    auto cfg = tiny_config(5);
    UNet net(cfg.net, run.working, cfg.seed);
    ColorTextureExtractor ext;
    const auto& frame_a = run.data.videos[0].frames[0];
    const auto& frame_b = run.data.videos[0].frames[1];
    auto feat_a = ext.extract(frame_a, run.working);
    auto feat_b = ext.extract(frame_b, run.working);

    // read-only objective at the current parameters
    FramePair pair{&frame_a, &run.anchors[0][0], &frame_b, &run.anchors[0][1],
                   PairingMode::adjacent};
    auto expected = full_loss(pair, net.predict(frame_a), net.predict(frame_b), feat_a, feat_b,
                              cfg.margins);

    AdamOptimizer opt(net.parameter_count(), cfg.learning_rate);
    TrainWorkspaces scratch;
    PairBatchItem item{&frame_a, &run.anchors[0][0], &feat_a,
                       &frame_b, &run.anchors[0][1], &feat_b};
    const auto hash_before = net.parameter_hash();
    auto mean = train_step(net, opt, std::span<const PairBatchItem>(&item, 1), cfg.margins,
                           LossTerms::full(), scratch, 2);
    CHECK(std::abs(mean.total - expected.total) < 1e-9);
    CHECK(std::abs(mean.dif_fg - expected.dif_fg) < 1e-9);
    // nonzero anchors must move at least one parameter
    CHECK(net.parameter_hash() != hash_before);
    // and the frozen extractor keeps its fingerprint
    CHECK(ext.parameter_hash() == ColorTextureExtractor().parameter_hash());
}

TEST_CASE("run_training: deterministic under fixed seed and config") {
    auto run = make_tiny_run(4);
    auto cfg = tiny_config(9);
    cfg.epochs = 2;
    TrainData data{&run.data.videos, &run.anchors, &run.features, run.working};
    auto r1 = run_training(cfg, data);
    auto r2 = run_training(cfg, data);
    REQUIRE(r1.log.size() == r2.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i)
        CHECK(r1.log[i].l_full == r2.log[i].l_full);
    CHECK(r1.net.parameter_hash() == r2.net.parameter_hash());
}

TEST_CASE("run_training: mean epoch loss non-increasing over the first 3 epochs") {
    auto run = make_tiny_run(6);
    auto cfg = tiny_config(11);
    TrainData data{&run.data.videos, &run.anchors, &run.features, run.working};
    std::vector<double> epoch_means;
    run_training(cfg, data, nullptr,
                 [&](int, const PairLossBreakdown& m) { epoch_means.push_back(m.total); });
    REQUIRE(epoch_means.size() == 3);
    CHECK(epoch_means[0] >= epoch_means[1] - 1e-9);
    CHECK(epoch_means[1] >= epoch_means[2] - 1e-9);
}

TEST_CASE("run_training: unsupervised anchors require no masks at all") {
    auto run = make_tiny_run(8);
    // prepare_anchors with supervision 0 on a dataset without loaded masks
    LoadedDataset ds;
    ds.videos = run.data.videos;
    ds.masks_loaded = false;
    auto anchors = prepare_anchors(ds, run.cues, Supervision::none);
    CHECK(anchors[0].size() == run.data.videos[0].frames.size());
    // 50% supervision without masks must fail loudly instead
    CHECK_THROWS_AS(prepare_anchors(ds, run.cues, Supervision::half), DataError);
}
