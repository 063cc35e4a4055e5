#include <doctest.h>

#include <filesystem>
#include <functional>
#include <random>

#include <opencv2/imgproc.hpp>

#include "sdseg/cues.hpp"
#include "sdseg/io.hpp"
#include "sdseg/synthetic.hpp"

using namespace sdseg;

namespace {

FrameSample make_frame(int h, int w, const std::function<void(int, int, float*)>& fill) {
    FrameSample f;
    f.video_id = "test";
    f.shape = ImageShape{h, w};
    f.rgb.resize(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            fill(y, x, f.rgb.data() + 3 * (static_cast<std::size_t>(y) * w + x));
    return f;
}

FrameSample random_frame(int h, int w, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> uni(0.f, 1.f);
    return make_frame(h, w, [&](int, int, float* px) {
        px[0] = uni(rng);
        px[1] = uni(rng);
        px[2] = uni(rng);
    });
}

void hsv_to_rgb(float h, float s, float v, float* rgb) {
    cv::Mat3f m(1, 1, cv::Vec3f(h * 360.f, s, v));
    cv::Mat3f out;
    cv::cvtColor(m, out, cv::COLOR_HSV2RGB);
    rgb[0] = out(0, 0)[0];
    rgb[1] = out(0, 0)[1];
    rgb[2] = out(0, 0)[2];
}

} // namespace

TEST_CASE("color cue: saturated pixel scores zero") {
    auto f = make_frame(2, 2, [](int, int, float* px) {
        px[0] = 1.f;
        px[1] = 0.f;
        px[2] = 0.f;
    });
    auto cue = color_cue(f);
    for (float v : cue.values) CHECK(v == doctest::Approx(0.f).epsilon(1e-6));
}

TEST_CASE("color cue: mid gray lands at the 8-bit neutral value") {
    auto f = make_frame(1, 1, [](int, int, float* px) { px[0] = px[1] = px[2] = 0.5f; });
    auto cue = color_cue(f);
    // neutral gray: a* = 0, A_8bit = 128, S = 0 -> (1 - 128/255)
    CHECK(cue.values[0] == doctest::Approx(1.0 - 128.0 / 255.0).epsilon(1e-4));
}

TEST_CASE("color cue: LAB A channel matches the OpenCV conversion") {
    // reference color-space oracle: OpenCV float RGB->Lab
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> uni(0.f, 1.f);
    for (int i = 0; i < 500; ++i) {
        const float r = uni(rng), g = uni(rng), b = uni(rng);
        cv::Mat3f m(1, 1, cv::Vec3f(r, g, b));
        cv::Mat3f lab;
        cv::cvtColor(m, lab, cv::COLOR_RGB2Lab);
        const double expected = std::clamp((lab(0, 0)[1] + 128.0) / 255.0, 0.0, 1.0);
        CHECK(std::abs(lab_a_norm(r, g, b) - expected) < 2e-3);
    }
}

TEST_CASE("color cue: range invariant on random frames") {
    for (std::uint32_t s = 0; s < 5; ++s) {
        auto cue = color_cue(random_frame(17, 23, s));
        CHECK(cue.in_unit_range());
    }
}

TEST_CASE("color cue: non-increasing in saturation at fixed hue and value") {
    float rgb[3];
    for (float h = 0.f; h <= 1.001f; h += 0.05f)
        for (float v : {0.2f, 0.5f, 0.8f, 1.f}) {
            float prev = 2.f;
            for (float s = 0.f; s <= 1.001f; s += 0.02f) {
                hsv_to_rgb(std::min(h, 1.f), std::min(s, 1.f), v, rgb);
                const float cue = (1.f - lab_a_norm(rgb[0], rgb[1], rgb[2])) *
                                  (1.f - hsv_saturation(rgb[0], rgb[1], rgb[2]));
                CHECK(cue <= prev + 1e-5f);
                prev = cue;
            }
        }
}

TEST_CASE("objectness: higher inside a high-contrast shape than outside") {
    SyntheticSceneSpec spec;
    spec.num_videos = 1;
    spec.frames_per_video = 3;
    spec.shape = ImageShape{96, 128};
    spec.seed = 11;
    auto data = generate_synthetic(spec);
    GradientObjectness detector;
    for (std::size_t t = 0; t < data.videos[0].frames.size(); ++t) {
        auto map = detector.objectness(data.videos[0].frames[t]);
        const auto& gt = data.masks[0][t];
        double in = 0, out = 0;
        std::int64_t nin = 0, nout = 0;
        for (std::size_t i = 0; i < map.values.size(); ++i) {
            if (gt.values[i]) {
                in += map.values[i];
                ++nin;
            } else {
                out += map.values[i];
                ++nout;
            }
        }
        REQUIRE(nin > 0);
        REQUIRE(nout > 0);
        CHECK(in / nin > out / nout);
        CHECK(map.in_unit_range());
    }
}

TEST_CASE("objectness: constant frame degenerates to all zeros") {
    auto f = make_frame(48, 64, [](int, int, float* px) { px[0] = px[1] = px[2] = 0.42f; });
    auto map = GradientObjectness().objectness(f);
    for (float v : map.values) CHECK(v == 0.f);
}

TEST_CASE("objectness: deterministic on identical frames") {
    auto f = random_frame(40, 56, 3);
    auto a = GradientObjectness().objectness(f);
    auto b = GradientObjectness().objectness(f);
    CHECK(a.values == b.values);
}

TEST_CASE("objectness: precomputed maps round-trip bit-exactly") {
    const auto dir = std::filesystem::temp_directory_path() / "sdseg_obj_test";
    std::filesystem::remove_all(dir);

    ProbMap map(ImageShape{8, 9});
    for (std::size_t i = 0; i < map.values.size(); ++i)
        map.values[i] = static_cast<float>((i * 911) % 65536) / 65535.f; // exact 16-bit grid
    auto frame = random_frame(8, 9, 5);
    frame.video_id = "vid";
    frame.stem = "000004";
    io::write_probmap_png16(dir / "vid" / (frame.stem + ".obj.png"), map);

    PrecomputedObjectness provider(dir.string());
    auto loaded = provider.objectness(frame);
    CHECK(loaded.values == map.values);
}

TEST_CASE("objectness: missing or mismatched precomputed maps name the frame") {
    const auto dir = std::filesystem::temp_directory_path() / "sdseg_obj_test2";
    std::filesystem::remove_all(dir);
    auto frame = random_frame(8, 9, 6);
    frame.video_id = "vid";
    frame.stem = "000001";
    PrecomputedObjectness provider(dir.string());
    CHECK_THROWS_WITH_AS(provider.objectness(frame), doctest::Contains("vid/000001"), DataError);

    io::write_probmap_png16(dir / "vid" / "000001.obj.png", ProbMap(ImageShape{4, 4}));
    CHECK_THROWS_AS(provider.objectness(frame), ShapeError);
}

TEST_CASE("location cue: mean of the per-frame color maps") {
    VideoSequence video;
    video.video_id = "v";
    video.frames.resize(2);
    ProbMap zeros(ImageShape{3, 3}, 0.f), ones(ImageShape{3, 3}, 1.f);

    SUBCASE("identical maps are returned unchanged") {
        auto out = location_cue_video(video, {ones, ones});
        for (float v : out.values) CHECK(v == 1.f);
    }
    SUBCASE("all-0 and all-1 average to one half") {
        auto out = location_cue_video(video, {zeros, ones});
        for (float v : out.values) CHECK(v == doctest::Approx(0.5f));
    }
    SUBCASE("single-frame video returns its own color cue") {
        VideoSequence single;
        single.frames.resize(1);
        ProbMap m(ImageShape{3, 3});
        for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = 0.1f * i;
        auto out = location_cue_video(single, {m});
        for (std::size_t i = 0; i < m.values.size(); ++i)
            CHECK(out.values[i] == doctest::Approx(m.values[i]).epsilon(1e-6));
    }
    SUBCASE("pixelwise mean within accumulation tolerance") {
        std::mt19937 rng(9);
        std::uniform_real_distribution<float> uni(0.f, 1.f);
        std::vector<ProbMap> maps;
        VideoSequence vid;
        for (int t = 0; t < 7; ++t) {
            ProbMap m(ImageShape{5, 4});
            for (auto& v : m.values) v = uni(rng);
            maps.push_back(m);
            vid.frames.emplace_back();
        }
        auto out = location_cue_video(vid, maps);
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            double s = 0;
            for (const auto& m : maps) s += m.values[i];
            CHECK(std::abs(out.values[i] - s / maps.size()) < 1e-6);
        }
    }
    SUBCASE("errors") {
        VideoSequence empty;
        CHECK_THROWS_AS(location_cue_video(empty, {}), DataError);
        CHECK_THROWS_AS(location_cue_video(video, {zeros, ProbMap(ImageShape{2, 2})}), ShapeError);
    }
}

TEST_CASE("location cue: fixed Gaussian center prior") {
    SUBCASE("peak 1 at the center") {
        auto m = location_cue_gaussian(ImageShape{7, 7}, 0.25f);
        CHECK(m.at(3, 3) == doctest::Approx(1.f));
    }
    SUBCASE("flip symmetric") {
        auto m = location_cue_gaussian(ImageShape{9, 12}, 0.3f);
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 12; ++x) {
                CHECK(m.at(y, x) == doctest::Approx(m.at(8 - y, x)));
                CHECK(m.at(y, x) == doctest::Approx(m.at(y, 11 - x)));
            }
    }
    SUBCASE("corner value for sigma of one pixel on a 5x5 grid") {
        const float diag = std::sqrt(50.f);
        auto m = location_cue_gaussian(ImageShape{5, 5}, 1.f / diag);
        CHECK(m.at(0, 0) == doctest::Approx(std::exp(-4.0)).epsilon(1e-4));
    }
    SUBCASE("non-positive sigma is rejected") {
        CHECK_THROWS_AS(location_cue_gaussian(ImageShape{5, 5}, 0.f), ConfigError);
        CHECK_THROWS_AS(location_cue_gaussian(ImageShape{5, 5}, -1.f), ConfigError);
    }
}
