#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "sdseg/eval.hpp"

using namespace sdseg;

namespace {

// brute-force between-class-variance maximizer: every candidate split is
// recomputed from scratch and ranked with exact integer arithmetic
int otsu_oracle_bin(const ProbMap& map, int bins) {
    std::vector<std::int64_t> hist(static_cast<std::size_t>(bins), 0);
    for (float v : map.values)
        ++hist[static_cast<std::size_t>(std::clamp(static_cast<int>(v * bins), 0, bins - 1))];
    int best_k = -1;
    __int128 best_num = -1;
    std::int64_t best_den = 1;
    for (int k = 0; k + 1 < bins; ++k) {
        std::int64_t n0 = 0, m0 = 0, n1 = 0, m1 = 0;
        for (int b = 0; b <= k; ++b) {
            n0 += hist[static_cast<std::size_t>(b)];
            m0 += hist[static_cast<std::size_t>(b)] * b;
        }
        for (int b = k + 1; b < bins; ++b) {
            n1 += hist[static_cast<std::size_t>(b)];
            m1 += hist[static_cast<std::size_t>(b)] * b;
        }
        if (n0 == 0 || n1 == 0) continue;
        const std::int64_t d = m0 * n1 - m1 * n0;
        const __int128 num = static_cast<__int128>(d) * d;
        const std::int64_t den = n0 * n1;
        if (best_num < 0 || num * best_den > best_num * den) {
            best_num = num;
            best_den = den;
            best_k = k;
        }
    }
    if (best_k < 0 || best_num == 0) return -1;
    return best_k;
}

BinaryMask random_mask(ImageShape s, double fg_prob, std::mt19937& rng) {
    std::bernoulli_distribution coin(fg_prob);
    BinaryMask m(s);
    for (auto& v : m.values) v = coin(rng) ? 1 : 0;
    return m;
}

} // namespace

TEST_CASE("otsu: separates a two-level map between the levels") {
    ProbMap map(ImageShape{2, 2});
    map.values = {0.1f, 0.1f, 0.9f, 0.9f};
    const auto res = otsu_threshold(map);
    CHECK(!res.degenerate);
    CHECK(res.threshold > 0.1);
    CHECK(res.threshold <= 0.9);
    const auto mask = binarize(map, res.threshold);
    CHECK(mask.count() == 2);
}

TEST_CASE("otsu: constant maps degenerate to an empty foreground") {
    for (float c : {0.f, 0.5f, 1.f}) {
        ProbMap map(ImageShape{3, 5}, c);
        const auto res = otsu_threshold(map);
        CHECK(res.degenerate);
        CHECK(binarize(map, res.threshold).count() == 0);
    }
    CHECK_THROWS_AS(otsu_threshold(ProbMap{}), DataError);
}

TEST_CASE("otsu: agrees exactly with the exhaustive maximizer") {
    std::mt19937 rng(41);
    std::uniform_real_distribution<float> uni(0.f, 1.f);
    for (int trial = 0; trial < 300; ++trial) {
        const int h = 1 + static_cast<int>(rng() % 24);
        const int w = 1 + static_cast<int>(rng() % 24);
        ProbMap map(ImageShape{h, w});
        const int mode = trial % 3;
        for (auto& v : map.values) {
            if (mode == 0) v = uni(rng);
            else if (mode == 1) v = std::round(uni(rng) * 8.f) / 8.f; // heavy ties
            else v = uni(rng) < 0.5f ? 0.2f : 0.75f;
        }
        const auto res = otsu_threshold(map);
        const int oracle = otsu_oracle_bin(map, 256);
        CHECK(res.bin_index == oracle);
        if (oracle >= 0) CHECK(res.threshold == static_cast<double>(oracle + 1) / 256.0);
    }
}

TEST_CASE("binarize: strict greater-than semantics") {
    ProbMap map(ImageShape{1, 2});
    map.values = {0.2f, 0.7f};
    CHECK(binarize(map, 0.5).values == std::vector<std::uint8_t>{0, 1});
    ProbMap pos(ImageShape{2, 2}, 0.3f);
    CHECK(binarize(pos, 0.0).count() == 4);
    CHECK(binarize(pos, 1.0).count() == 0);
}

TEST_CASE("iou and dice: pinned examples") {
    const ImageShape s{4, 4};
    BinaryMask a(s), b(s);
    SUBCASE("identical nonempty masks") {
        a.values[0] = a.values[5] = 1;
        CHECK(iou(a, a) == 1.0);
        CHECK(dice(a, a) == 1.0);
    }
    SUBCASE("disjoint nonempty masks") {
        a.values[0] = 1;
        b.values[1] = 1;
        CHECK(iou(a, b) == 0.0);
        CHECK(dice(a, b) == 0.0);
    }
    SUBCASE("4 vs 4 pixels with overlap 2") {
        for (int i = 0; i < 4; ++i) a.values[static_cast<std::size_t>(i)] = 1;
        for (int i = 2; i < 6; ++i) b.values[static_cast<std::size_t>(i)] = 1;
        CHECK(iou(a, b) == doctest::Approx(2.0 / 6.0));
        CHECK(dice(a, b) == doctest::Approx(0.5));
    }
    SUBCASE("both empty scores 1 by convention") {
        CHECK(iou(a, b) == 1.0);
        CHECK(dice(a, b) == 1.0);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(iou(a, BinaryMask(ImageShape{2, 2})), ShapeError);
        CHECK_THROWS_AS(dice(a, BinaryMask(ImageShape{2, 2})), ShapeError);
    }
}

TEST_CASE("metric identities: dice = 2*iou/(1+iou) and iou <= dice") {
    std::mt19937 rng(51);
    std::uniform_real_distribution<double> prob(0.0, 1.0);
    for (int trial = 0; trial < 400; ++trial) {
        const ImageShape s{1 + static_cast<int>(rng() % 16), 1 + static_cast<int>(rng() % 16)};
        auto a = random_mask(s, prob(rng), rng);
        auto b = random_mask(s, prob(rng), rng);
        const double i = iou(a, b), d = dice(a, b);
        CHECK(d == doctest::Approx(2.0 * i / (1.0 + i)).epsilon(1e-12));
        CHECK(i <= d);
    }
}

TEST_CASE("metrics: symmetric under a shared pixel permutation") {
    std::mt19937 rng(61);
    const ImageShape s{6, 7};
    auto a = random_mask(s, 0.3, rng);
    auto b = random_mask(s, 0.4, rng);
    std::vector<std::size_t> perm(a.values.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    BinaryMask ap(s), bp(s);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        ap.values[i] = a.values[perm[i]];
        bp.values[i] = b.values[perm[i]];
    }
    CHECK(iou(a, b) == iou(ap, bp));
    CHECK(dice(a, b) == dice(ap, bp));
}

TEST_CASE("report: aggregates recomputable from the per-frame rows") {
    MetricsReport r;
    r.per_frame = {{"v", 0, 0.5, 0.6}, {"v", 1, 0.7, 0.8}, {"w", 0, 0.9, 0.95}};
    r.recompute();
    const double miou = (0.5 + 0.7 + 0.9) / 3;
    CHECK(r.mean_iou == doctest::Approx(miou).epsilon(1e-12));
    double var = 0;
    for (double v : {0.5, 0.7, 0.9}) var += (v - miou) * (v - miou);
    CHECK(r.std_iou == doctest::Approx(std::sqrt(var / 3)).epsilon(1e-9));
}

TEST_CASE("evaluate_scored_maps: perfect maps, skipped frames") {
    const ImageShape s{6, 6};
    BinaryMask gt(s);
    for (int i = 0; i < 12; ++i) gt.values[static_cast<std::size_t>(i)] = 1;
    ProbMap perfect(s);
    for (std::size_t i = 0; i < perfect.values.size(); ++i)
        perfect.values[i] = gt.values[i] ? 0.95f : 0.05f;

    std::vector<ScoredMap> items;
    items.push_back({"v", 0, &perfect, &gt});
    items.push_back({"v", 1, &perfect, nullptr}); // no ground truth
    auto report = evaluate_scored_maps(items);
    REQUIRE(report.per_frame.size() == 1);
    CHECK(report.per_frame[0].iou == 1.0);
    CHECK(report.per_frame[0].dice == 1.0);
    CHECK(report.mean_iou == 1.0);
    CHECK(report.skipped == 1);
}
