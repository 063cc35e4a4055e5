#include "sdseg/synthetic.hpp"

#include <cmath>
#include <random>

#include <opencv2/imgproc.hpp>

#include "sdseg/io.hpp"

namespace sdseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
    float r, g, b;
};

Rgb hsv_to_rgb(float h, float s, float v) {
    h = h - std::floor(h); // wrap to [0,1)
    const float c = v * s;
    const float hp = h * 6.f;
    const float x = c * (1.f - std::abs(std::fmod(hp, 2.f) - 1.f));
    float r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const float m = v - c;
    return {r + m, g + m, b + m};
}

inline float q8(float v) { return std::round(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f; }

struct Instrument {
    // shaft is a rotated rectangle from base to tip, plus a round tip cap
    float cx, cy;     // shaft center
    float angle;      // radians
    float length, width;
    float gray;       // base lightness
    float sat;        // small residual saturation
    int tint;         // channel receiving the strongest tint reduction
    float shade;      // lightness slope along the shaft
    float vx, vy, va; // motion state
};

struct Background {
    float hue, sat, val;
    float field_fx, field_fy, field_px, field_py;
    float amp_v, amp_s;
    float drift_phase;
    cv::Mat1f noise;
};

} // namespace

SyntheticDataset generate_synthetic(const SyntheticSceneSpec& spec) {
    const int h = spec.shape.height, w = spec.shape.width;
    if (!spec.shape.valid()) throw ConfigError("generate_synthetic: invalid shape");
    if (spec.num_videos < 1 || spec.frames_per_video < 1)
        throw ConfigError("generate_synthetic: need at least one video and one frame");
    const float smin = static_cast<float>(std::min(h, w));
    if (spec.max_length_frac * smin >= std::max(h, w) || spec.max_width_frac * smin >= smin)
        throw ConfigError("generate_synthetic: instrument does not fit in the frame");
    if (spec.min_fg_frac < 0 || spec.max_fg_frac > 1 || spec.min_fg_frac >= spec.max_fg_frac)
        throw ConfigError("generate_synthetic: bad foreground fraction range");

    SyntheticDataset data;
    for (int v = 0; v < spec.num_videos; ++v) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 25)
                throw DataError("generate_synthetic: could not satisfy the foreground fraction "
                                "range for video " + std::to_string(v));
            std::mt19937_64 rng(spec.seed ^ (0x9E3779B97F4A7C15ull * (v * 31 + attempt + 1)));
            auto uni = [&](float lo, float hi) {
                return std::uniform_real_distribution<float>(lo, hi)(rng);
            };

            Background bg;
            bg.hue = uni(-0.03f, 0.05f);
            bg.sat = uni(std::max(spec.min_background_saturation, 0.5f) + 0.05f, 0.88f);
            bg.val = uni(0.45f, 0.68f);
            bg.field_fx = uni(0.5f, 1.5f);
            bg.field_fy = uni(0.5f, 1.5f);
            bg.field_px = uni(0.f, 1.f);
            bg.field_py = uni(0.f, 1.f);
            bg.amp_v = uni(0.05f, 0.12f);
            bg.amp_s = uni(0.03f, 0.07f);
            bg.drift_phase = uni(0.f, static_cast<float>(2 * kPi));
            bg.noise.create(h, w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) bg.noise(y, x) = uni(-0.015f, 0.015f);

            const int n_inst =
                std::uniform_int_distribution<int>(spec.min_instruments, spec.max_instruments)(rng);
            std::vector<Instrument> insts;
            for (int i = 0; i < n_inst; ++i) {
                Instrument ins;
                ins.length = uni(spec.min_length_frac, spec.max_length_frac) * smin;
                ins.width = uni(spec.min_width_frac, spec.max_width_frac) * smin;
                // enter from a border, pointing inward
                const int side = std::uniform_int_distribution<int>(0, 3)(rng);
                const float along = uni(0.25f, 0.75f);
                float ex, ey, base_angle;
                switch (side) {
                    case 0: ex = along * w; ey = 0; base_angle = static_cast<float>(kPi / 2); break;
                    case 1: ex = along * w; ey = static_cast<float>(h); base_angle = static_cast<float>(-kPi / 2); break;
                    case 2: ex = 0; ey = along * h; base_angle = 0.f; break;
                    default: ex = static_cast<float>(w); ey = along * h; base_angle = static_cast<float>(kPi); break;
                }
                ins.angle = base_angle + uni(-0.5f, 0.5f);
                ins.cx = ex + std::cos(ins.angle) * ins.length * 0.45f;
                ins.cy = ey + std::sin(ins.angle) * ins.length * 0.45f;
                ins.gray = uni(0.58f, 0.85f);
                ins.sat = uni(0.02f, spec.max_instrument_saturation);
                ins.tint = std::uniform_int_distribution<int>(0, 2)(rng);
                ins.shade = uni(-0.06f, 0.06f);
                ins.vx = uni(-spec.motion_px, spec.motion_px);
                ins.vy = uni(-spec.motion_px, spec.motion_px);
                ins.va = uni(-spec.rotation_rad, spec.rotation_rad);
                insts.push_back(ins);
            }

            VideoSequence video;
            char vid[32];
            std::snprintf(vid, sizeof(vid), "synth_%02d", v);
            video.video_id = vid;
            std::vector<BinaryMask> masks;
            bool ok = true;

            for (int t = 0; t < spec.frames_per_video && ok; ++t) {
                // advance motion (momentum random walk, center kept inside)
                if (t > 0)
                    for (auto& ins : insts) {
                        ins.vx = 0.9f * ins.vx + uni(-spec.motion_px, spec.motion_px) * 0.3f;
                        ins.vy = 0.9f * ins.vy + uni(-spec.motion_px, spec.motion_px) * 0.3f;
                        ins.va = 0.9f * ins.va + uni(-spec.rotation_rad, spec.rotation_rad) * 0.3f;
                        ins.cx = std::clamp(ins.cx + ins.vx, 0.1f * w, 0.9f * w);
                        ins.cy = std::clamp(ins.cy + ins.vy, 0.1f * h, 0.9f * h);
                        ins.angle += ins.va;
                    }

                cv::Mat1b mask = cv::Mat1b::zeros(h, w);
                // per-pixel shade weight along the shaft axis, per instrument
                std::vector<cv::Mat1b> inst_masks;
                for (const auto& ins : insts) {
                    cv::Mat1b m = cv::Mat1b::zeros(h, w);
                    const float ca = std::cos(ins.angle), sa = std::sin(ins.angle);
                    const float hl = ins.length / 2, hw2 = ins.width / 2;
                    cv::Point pts[4] = {
                        cv::Point(static_cast<int>(std::lround(ins.cx - ca * hl - sa * hw2)),
                                  static_cast<int>(std::lround(ins.cy - sa * hl + ca * hw2))),
                        cv::Point(static_cast<int>(std::lround(ins.cx - ca * hl + sa * hw2)),
                                  static_cast<int>(std::lround(ins.cy - sa * hl - ca * hw2))),
                        cv::Point(static_cast<int>(std::lround(ins.cx + ca * hl + sa * hw2)),
                                  static_cast<int>(std::lround(ins.cy + sa * hl - ca * hw2))),
                        cv::Point(static_cast<int>(std::lround(ins.cx + ca * hl - sa * hw2)),
                                  static_cast<int>(std::lround(ins.cy + sa * hl + ca * hw2)))};
                    cv::fillConvexPoly(m, pts, 4, cv::Scalar(255), cv::LINE_8);
                    cv::circle(m,
                               cv::Point(static_cast<int>(std::lround(ins.cx + ca * hl)),
                                         static_cast<int>(std::lround(ins.cy + sa * hl))),
                               static_cast<int>(std::lround(hw2 * 0.9f)), cv::Scalar(255),
                               cv::FILLED, cv::LINE_8);
                    inst_masks.push_back(m);
                    cv::bitwise_or(mask, m, mask);
                }

                const double fg_frac = cv::countNonZero(mask) / static_cast<double>(h * w);
                if (fg_frac < spec.min_fg_frac || fg_frac > spec.max_fg_frac) {
                    ok = false;
                    break;
                }

                const float light =
                    1.f + spec.lighting_drift *
                              std::sin(static_cast<float>(2 * kPi) * t / spec.frames_per_video +
                                       bg.drift_phase);

                FrameSample frame;
                frame.video_id = video.video_id;
                frame.t = t;
                char stem[16];
                std::snprintf(stem, sizeof(stem), "%06d", t);
                frame.stem = stem;
                frame.shape = spec.shape;
                frame.rgb.resize(static_cast<std::size_t>(h) * w * 3);

                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        Rgb px;
                        if (mask(y, x)) {
                            // topmost instrument wins where they overlap
                            const Instrument* ins = nullptr;
                            for (std::size_t i = 0; i < insts.size(); ++i)
                                if (inst_masks[i](y, x)) ins = &insts[i];
                            const float ca = std::cos(ins->angle), sa = std::sin(ins->angle);
                            const float axial =
                                ((x - ins->cx) * ca + (y - ins->cy) * sa) / (ins->length / 2);
                            float val = std::clamp(ins->gray + ins->shade * axial, 0.25f, 0.95f);
                            val = std::clamp(val * light, 0.f, 1.f);
                            float rgb3[3] = {val, val, val};
                            // sat is realized by pulling two channels down
                            rgb3[(ins->tint + 1) % 3] *= 1.f - 0.5f * ins->sat;
                            rgb3[(ins->tint + 2) % 3] *= 1.f - ins->sat;
                            px = {rgb3[0], rgb3[1], rgb3[2]};
                        } else {
                            const float field =
                                std::sin(static_cast<float>(2 * kPi) *
                                         (bg.field_fx * x / w + bg.field_px)) *
                                std::sin(static_cast<float>(2 * kPi) *
                                         (bg.field_fy * y / h + bg.field_py));
                            const float s = std::clamp(bg.sat + bg.amp_s * field,
                                                       spec.min_background_saturation, 0.95f);
                            float val = std::clamp(bg.val + bg.amp_v * field + bg.noise(y, x),
                                                   0.15f, 0.9f);
                            val = std::clamp(val * light, 0.f, 1.f);
                            px = hsv_to_rgb(bg.hue, s, val);
                        }
                        const std::size_t i = 3 * (static_cast<std::size_t>(y) * w + x);
                        frame.rgb[i + 0] = q8(px.r);
                        frame.rgb[i + 1] = q8(px.g);
                        frame.rgb[i + 2] = q8(px.b);
                    }

                BinaryMask bm(spec.shape);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) bm.at(y, x) = mask(y, x) ? 1 : 0;
                video.frames.push_back(std::move(frame));
                masks.push_back(std::move(bm));
            }

            if (ok) {
                data.videos.push_back(std::move(video));
                data.masks.push_back(std::move(masks));
                break;
            }
        }
    }
    return data;
}

void write_synthetic_dataset(const SyntheticDataset& data, const std::filesystem::path& root) {
    for (std::size_t v = 0; v < data.videos.size(); ++v) {
        const auto& video = data.videos[v];
        for (std::size_t t = 0; t < video.frames.size(); ++t) {
            const auto& frame = video.frames[t];
            io::write_frame_png8(root / video.video_id / "frames" / (frame.stem + ".png"), frame);
            io::write_mask_png8(root / video.video_id / "masks" / (frame.stem + ".png"),
                                data.masks[v][t]);
        }
    }
}

} // namespace sdseg
