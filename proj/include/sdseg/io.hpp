#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sdseg/image.hpp"

namespace sdseg::io {

// Probability maps are persisted as 16-bit grayscale PNG, values linearly
// mapped from [0,1]. Round-trip error is bounded by the quantization step,
// at most 1/(2*65535) per value.
void write_probmap_png16(const std::filesystem::path& path, const ProbMap& map);
ProbMap read_probmap_png16(const std::filesystem::path& path);

// 8-bit RGB frame files (lossless PNG). Values are mapped to [0,1].
void write_frame_png8(const std::filesystem::path& path, const FrameSample& frame);
FrameSample read_frame_png8(const std::filesystem::path& path);

// Binary masks as 8-bit grayscale; any value > 127 counts as foreground.
void write_mask_png8(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask_png8(const std::filesystem::path& path);

// Number of mask files decoded since process start. The unsupervised
// pipeline is required to leave this untouched; tests assert on it.
std::uint64_t mask_reads();

// Bilinear resize of a frame's RGB raster. Masks should instead be resized
// with resize_mask, which rebinarizes at 0.5.
FrameSample resize_frame(const FrameSample& frame, ImageShape out);
BinaryMask resize_mask(const BinaryMask& mask, ImageShape out);

// Qualitative inspection aid: the frame with mask pixels tinted green.
void write_overlay_png(const std::filesystem::path& path, const FrameSample& frame,
                       const BinaryMask& mask);

} // namespace sdseg::io
