#include <doctest.h>

#include <random>

#include "sdseg/anchors.hpp"
#include "sdseg/eval.hpp"

using namespace sdseg;

namespace {

CueSet constant_cues(ImageShape s, float c, float o, float l) {
    return CueSet{ProbMap(s, c), ProbMap(s, o), ProbMap(s, l)};
}

CueSet random_cues(ImageShape s, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> uni(0.f, 1.f);
    CueSet cues{ProbMap(s), ProbMap(s), ProbMap(s)};
    for (std::size_t i = 0; i < cues.color.values.size(); ++i) {
        cues.color.values[i] = uni(rng);
        cues.objectness.values[i] = uni(rng);
        cues.location.values[i] = uni(rng);
    }
    return cues;
}

} // namespace

TEST_CASE("fuse_anchors: products of cues and inverted cues") {
    const ImageShape s{4, 4};
    SUBCASE("all-one cues") {
        auto a = fuse_anchors(constant_cues(s, 1, 1, 1));
        for (std::size_t i = 0; i < a.positive.values.size(); ++i) {
            CHECK(a.positive.values[i] == 1.f);
            CHECK(a.negative.values[i] == 0.f);
        }
        CHECK(a.source == AnchorSource::fused_cues);
    }
    SUBCASE("all-half cues") {
        auto a = fuse_anchors(constant_cues(s, 0.5f, 0.5f, 0.5f));
        for (std::size_t i = 0; i < a.positive.values.size(); ++i) {
            CHECK(a.positive.values[i] == doctest::Approx(0.125f));
            CHECK(a.negative.values[i] == doctest::Approx(0.125f));
        }
    }
    SUBCASE("all-zero cues") {
        auto a = fuse_anchors(constant_cues(s, 0, 0, 0));
        for (std::size_t i = 0; i < a.positive.values.size(); ++i) {
            CHECK(a.positive.values[i] == 0.f);
            CHECK(a.negative.values[i] == 1.f);
        }
    }
    SUBCASE("shape mismatch is rejected") {
        CueSet cues{ProbMap(s), ProbMap(ImageShape{2, 2}), ProbMap(s)};
        CHECK_THROWS_AS(fuse_anchors(cues), ShapeError);
    }
}

TEST_CASE("fuse_anchors: pointwise positive + negative <= 1 on random cues") {
    for (std::uint32_t seed = 0; seed < 40; ++seed) {
        auto a = fuse_anchors(random_cues(ImageShape{8, 8}, seed));
        for (std::size_t i = 0; i < a.positive.values.size(); ++i)
            CHECK(a.positive.values[i] + a.negative.values[i] <= 1.f);
    }
}

TEST_CASE("anchors_from_labels") {
    SUBCASE("all-foreground") {
        BinaryMask gt(ImageShape{3, 3}, 1);
        auto a = anchors_from_labels(gt);
        for (std::size_t i = 0; i < gt.values.size(); ++i) {
            CHECK(a.positive.values[i] == 1.f);
            CHECK(a.negative.values[i] == 0.f);
        }
        CHECK(a.source == AnchorSource::ground_truth);
    }
    SUBCASE("checkerboard complements sum to one") {
        BinaryMask gt(ImageShape{4, 4});
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) gt.at(y, x) = static_cast<std::uint8_t>((x + y) % 2);
        auto a = anchors_from_labels(gt);
        for (std::size_t i = 0; i < gt.values.size(); ++i)
            CHECK(a.positive.values[i] + a.negative.values[i] == 1.f);
    }
    SUBCASE("30% foreground mask gives matching anchor means") {
        BinaryMask gt(ImageShape{10, 10});
        for (int i = 0; i < 30; ++i) gt.values[static_cast<std::size_t>(i)] = 1;
        auto a = anchors_from_labels(gt);
        double mp = 0, mn = 0;
        for (std::size_t i = 0; i < gt.values.size(); ++i) {
            mp += a.positive.values[i];
            mn += a.negative.values[i];
        }
        CHECK(mp / 100 == doctest::Approx(0.3));
        CHECK(mn / 100 == doctest::Approx(0.7));
    }
    SUBCASE("non-binary mask is rejected") {
        BinaryMask gt(ImageShape{2, 2});
        gt.values[0] = 2;
        CHECK_THROWS_AS(anchors_from_labels(gt), DataError);
    }
}

TEST_CASE("anchor_loss: pinned values") {
    SUBCASE("single pixel, positive anchor") {
        AnchorPair a{ProbMap(ImageShape{1, 1}, 1.f), ProbMap(ImageShape{1, 1}, 0.f),
                     AnchorSource::fused_cues};
        ProbMap p(ImageShape{1, 1}, 0.8f);
        CHECK(anchor_loss(p, a) == doctest::Approx(-0.8));
    }
    SUBCASE("zero anchors supervise nothing") {
        AnchorPair a{ProbMap(ImageShape{2, 3}, 0.f), ProbMap(ImageShape{2, 3}, 0.f),
                     AnchorSource::fused_cues};
        for (float pv : {0.f, 0.3f, 1.f})
            CHECK(anchor_loss(ProbMap(ImageShape{2, 3}, pv), a) == doctest::Approx(0.0));
    }
    SUBCASE("two pixels mix positive and negative") {
        AnchorPair a;
        a.positive = ProbMap(ImageShape{1, 2});
        a.negative = ProbMap(ImageShape{1, 2});
        a.positive.values = {1.f, 0.f};
        a.negative.values = {0.f, 1.f};
        ProbMap p(ImageShape{1, 2});
        p.values = {0.6f, 0.3f};
        CHECK(anchor_loss(p, a) == doctest::Approx(-0.65));
    }
    SUBCASE("shape mismatch") {
        AnchorPair a{ProbMap(ImageShape{2, 2}), ProbMap(ImageShape{2, 2}),
                     AnchorSource::fused_cues};
        CHECK_THROWS_AS(anchor_loss(ProbMap(ImageShape{3, 3}), a), ShapeError);
    }
}

TEST_CASE("anchor_loss: gradient is (neg - pos)/HW, matching finite differences") {
    const ImageShape s{3, 4};
    auto cues = random_cues(s, 12);
    auto a = fuse_anchors(cues);
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> uni(0.05, 0.95);
    std::vector<double> p(static_cast<std::size_t>(s.pixels()));
    for (auto& v : p) v = uni(rng);

    std::vector<double> grad(p.size(), 0.0);
    anchor_loss(std::span<const double>(p), a, grad);
    const double n = static_cast<double>(p.size());
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(grad[i] == doctest::Approx((a.negative.values[i] - a.positive.values[i]) / n));
        auto plus = p, minus = p;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (anchor_loss(std::span<const double>(plus), a) -
                           anchor_loss(std::span<const double>(minus), a)) /
                          (2 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("anchor_loss: minimized by the sign of pos - neg") {
    auto cues = random_cues(ImageShape{6, 6}, 21);
    auto a = fuse_anchors(cues);
    ProbMap best(ImageShape{6, 6});
    for (std::size_t i = 0; i < best.values.size(); ++i)
        best.values[i] = a.positive.values[i] > a.negative.values[i] ? 1.f : 0.f;
    const double lbest = anchor_loss(best, a);
    std::mt19937 rng(22);
    std::uniform_real_distribution<float> uni(0.f, 1.f);
    for (int trial = 0; trial < 50; ++trial) {
        ProbMap p(ImageShape{6, 6});
        for (auto& v : p.values) v = uni(rng);
        CHECK(lbest <= anchor_loss(p, a) + 1e-9);
    }
}

TEST_CASE("anchor_loss: Otsu-binarized positive anchor beats the flat 0.5 prediction") {
    for (std::uint32_t seed = 30; seed < 50; ++seed) {
        auto a = fuse_anchors(random_cues(ImageShape{8, 8}, seed));
        const auto otsu = otsu_threshold(a.positive);
        const auto mask = binarize(a.positive, otsu.threshold);
        ProbMap bin(ImageShape{8, 8});
        for (std::size_t i = 0; i < bin.values.size(); ++i)
            bin.values[i] = static_cast<float>(mask.values[i]);
        CHECK(anchor_loss(bin, a) <= anchor_loss(ProbMap(ImageShape{8, 8}, 0.5f), a) + 1e-9);
    }
}
