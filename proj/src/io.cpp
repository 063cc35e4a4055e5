#include "sdseg/io.hpp"

#include <atomic>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace sdseg::io {

namespace {

std::atomic<std::uint64_t> g_mask_reads{0};

cv::Mat read_any(const std::filesystem::path& path, int flags, const char* what) {
    cv::Mat img = cv::imread(path.string(), flags);
    if (img.empty())
        throw DataError(std::string("cannot read ") + what + " file: " + path.string());
    return img;
}

void ensure_parent(const std::filesystem::path& path) {
    auto dir = path.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
}

} // namespace

void write_probmap_png16(const std::filesystem::path& path, const ProbMap& map) {
    cv::Mat1w out(map.shape.height, map.shape.width);
    for (int y = 0; y < map.shape.height; ++y)
        for (int x = 0; x < map.shape.width; ++x) {
            float v = std::clamp(map.at(y, x), 0.f, 1.f);
            out(y, x) = static_cast<std::uint16_t>(std::lround(v * 65535.f));
        }
    ensure_parent(path);
    if (!cv::imwrite(path.string(), out))
        throw DataError("cannot write probability map: " + path.string());
}

ProbMap read_probmap_png16(const std::filesystem::path& path) {
    cv::Mat img = read_any(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE, "probability map");
    ProbMap map(ImageShape{img.rows, img.cols});
    if (img.depth() == CV_16U) {
        for (int y = 0; y < img.rows; ++y)
            for (int x = 0; x < img.cols; ++x)
                map.at(y, x) = img.at<std::uint16_t>(y, x) / 65535.f;
    } else if (img.depth() == CV_8U) {
        for (int y = 0; y < img.rows; ++y)
            for (int x = 0; x < img.cols; ++x)
                map.at(y, x) = img.at<std::uint8_t>(y, x) / 255.f;
    } else {
        throw DataError("unsupported probability map depth: " + path.string());
    }
    return map;
}

void write_frame_png8(const std::filesystem::path& path, const FrameSample& frame) {
    cv::Mat3b out(frame.shape.height, frame.shape.width);
    for (int y = 0; y < frame.shape.height; ++y)
        for (int x = 0; x < frame.shape.width; ++x) {
            auto q = [&](float v) {
                return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
            };
            // OpenCV stores BGR
            out(y, x) = cv::Vec3b(q(frame.b(y, x)), q(frame.g(y, x)), q(frame.r(y, x)));
        }
    ensure_parent(path);
    if (!cv::imwrite(path.string(), out))
        throw DataError("cannot write frame: " + path.string());
}

FrameSample read_frame_png8(const std::filesystem::path& path) {
    cv::Mat img = read_any(path, cv::IMREAD_COLOR, "frame");
    FrameSample frame;
    frame.shape = ImageShape{img.rows, img.cols};
    frame.stem = path.stem().string();
    frame.source_dir = path.parent_path().string();
    frame.rgb.resize(static_cast<std::size_t>(img.rows) * img.cols * 3);
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x) {
            auto bgr = img.at<cv::Vec3b>(y, x);
            std::size_t i = 3 * (static_cast<std::size_t>(y) * img.cols + x);
            frame.rgb[i + 0] = bgr[2] / 255.f;
            frame.rgb[i + 1] = bgr[1] / 255.f;
            frame.rgb[i + 2] = bgr[0] / 255.f;
        }
    return frame;
}

void write_mask_png8(const std::filesystem::path& path, const BinaryMask& mask) {
    cv::Mat1b out(mask.shape.height, mask.shape.width);
    for (int y = 0; y < mask.shape.height; ++y)
        for (int x = 0; x < mask.shape.width; ++x)
            out(y, x) = mask.at(y, x) ? 255 : 0;
    ensure_parent(path);
    if (!cv::imwrite(path.string(), out))
        throw DataError("cannot write mask: " + path.string());
}

BinaryMask read_mask_png8(const std::filesystem::path& path) {
    cv::Mat img = read_any(path, cv::IMREAD_GRAYSCALE, "mask");
    g_mask_reads.fetch_add(1, std::memory_order_relaxed);
    BinaryMask mask(ImageShape{img.rows, img.cols});
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x)
            mask.at(y, x) = img.at<std::uint8_t>(y, x) > 127 ? 1 : 0;
    return mask;
}

std::uint64_t mask_reads() { return g_mask_reads.load(std::memory_order_relaxed); }

FrameSample resize_frame(const FrameSample& frame, ImageShape out) {
    if (frame.shape == out) return frame;
    cv::Mat3f src(frame.shape.height, frame.shape.width);
    for (int y = 0; y < frame.shape.height; ++y)
        for (int x = 0; x < frame.shape.width; ++x)
            src(y, x) = cv::Vec3f(frame.r(y, x), frame.g(y, x), frame.b(y, x));
    cv::Mat3f dst;
    cv::resize(src, dst, cv::Size(out.width, out.height), 0, 0, cv::INTER_LINEAR);
    FrameSample res = frame;
    res.shape = out;
    res.rgb.resize(static_cast<std::size_t>(out.pixels()) * 3);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            auto v = dst(y, x);
            std::size_t i = 3 * (static_cast<std::size_t>(y) * out.width + x);
            res.rgb[i + 0] = std::clamp(v[0], 0.f, 1.f);
            res.rgb[i + 1] = std::clamp(v[1], 0.f, 1.f);
            res.rgb[i + 2] = std::clamp(v[2], 0.f, 1.f);
        }
    return res;
}

void write_overlay_png(const std::filesystem::path& path, const FrameSample& frame,
                       const BinaryMask& mask) {
    require_same_shape(frame.shape, mask.shape, "write_overlay_png");
    FrameSample tinted = frame;
    for (int y = 0; y < frame.shape.height; ++y)
        for (int x = 0; x < frame.shape.width; ++x) {
            if (!mask.at(y, x)) continue;
            const std::size_t i = 3 * (static_cast<std::size_t>(y) * frame.shape.width + x);
            tinted.rgb[i + 0] = 0.4f * tinted.rgb[i + 0];
            tinted.rgb[i + 1] = 0.6f * tinted.rgb[i + 1] + 0.4f;
            tinted.rgb[i + 2] = 0.4f * tinted.rgb[i + 2];
        }
    write_frame_png8(path, tinted);
}

BinaryMask resize_mask(const BinaryMask& mask, ImageShape out) {
    if (mask.shape == out) return mask;
    cv::Mat1f src(mask.shape.height, mask.shape.width);
    for (int y = 0; y < mask.shape.height; ++y)
        for (int x = 0; x < mask.shape.width; ++x)
            src(y, x) = mask.at(y, x) ? 1.f : 0.f;
    cv::Mat1f dst;
    cv::resize(src, dst, cv::Size(out.width, out.height), 0, 0, cv::INTER_LINEAR);
    BinaryMask res(out);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            res.at(y, x) = dst(y, x) > 0.5f ? 1 : 0;
    return res;
}

} // namespace sdseg::io
