#pragma once

#include "bnn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bnn {

/// Malformed dataset file; carries the byte offset (IDX) or line (CSV).
struct FormatError : std::runtime_error {
    int64_t position;  // byte offset or line number, format dependent
    FormatError(const std::string& msg, int64_t pos)
        : std::runtime_error(msg), position(pos) {}
};

struct RawImages {
    int64_t count = 0, height = 0, width = 0;
    std::vector<uint8_t> pixels;  // count * height * width
};

// IDX (big-endian headers): magic 0x00000803 for images, 0x00000801 for labels.
RawImages read_idx_images(const std::string& path);
std::vector<uint8_t> read_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const RawImages& images);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

/// CSV fallback: one example per line, label then pixel values 0-255.
void read_csv_dataset(const std::string& path, int64_t height, int64_t width, RawImages& images,
                      std::vector<uint8_t>& labels);

struct Dataset {
    DenseTensor images;  // (N, 1, H, W), normalized
    std::vector<int> labels;
    double norm_mean = 0.0;  // statistics of the raw [0, 1] pixels
    double norm_std = 1.0;
};

/// Scales pixels to [0, 1] and normalizes to zero mean / unit variance. With
/// stats == nullptr the statistics are computed from this split (training);
/// otherwise the given training statistics are applied.
Dataset assemble_dataset(const RawImages& images, const std::vector<uint8_t>& labels,
                         const Dataset* stats = nullptr);

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         const Dataset* stats = nullptr);
Dataset load_csv_dataset(const std::string& path, int64_t height, int64_t width,
                         const Dataset* stats = nullptr);

/// Deterministic 10-class 28x28 glyph set (oriented bars, disc, ring, cross,
/// bar pair, corner) with pose/intensity jitter and noise; written as the
/// four standard IDX files under `dir`.
void write_synthetic_dataset(const std::string& dir, int64_t n_train, int64_t n_test,
                             uint64_t seed);

inline std::string synth_train_images(const std::string& dir) { return dir + "/train-images.idx"; }
inline std::string synth_train_labels(const std::string& dir) { return dir + "/train-labels.idx"; }
inline std::string synth_test_images(const std::string& dir) { return dir + "/test-images.idx"; }
inline std::string synth_test_labels(const std::string& dir) { return dir + "/test-labels.idx"; }

/// Horizontal flip of one normalized (C, H, W) image slice, in place.
void flip_horizontal(double* image, int64_t channels, int64_t height, int64_t width);

/// Integer shift by (dy, dx); vacated pixels take `fill`.
void shift_image(double* image, int64_t channels, int64_t height, int64_t width, int64_t dy,
                 int64_t dx, double fill);

}  // namespace bnn
