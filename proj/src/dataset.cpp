#include "bnn/dataset.hpp"

#include "bnn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace bnn {

// -- IDX I/O -------------------------------------------------------------------

static constexpr uint32_t kIdxImagesMagic = 0x00000803;
static constexpr uint32_t kIdxLabelsMagic = 0x00000801;

static uint32_t read_u32_be(std::istream& is, const std::string& path, int64_t offset) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    if (!is) throw FormatError(path + ": truncated header at byte " + std::to_string(offset), offset);
    return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
           uint32_t(buf[3]);
}

static void write_u32_be(std::ostream& os, uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(buf), 4);
}

RawImages read_idx_images(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path + ": cannot open", 0);
    uint32_t magic = read_u32_be(is, path, 0);
    if (magic != kIdxImagesMagic)
        throw FormatError(path + ": bad image magic at byte 0 (got 0x" +
                              [&] { std::ostringstream o; o << std::hex << magic; return o.str(); }() +
                              ")",
                          0);
    RawImages out;
    out.count = read_u32_be(is, path, 4);
    out.height = read_u32_be(is, path, 8);
    out.width = read_u32_be(is, path, 12);
    int64_t n = out.count * out.height * out.width;
    out.pixels.resize(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(out.pixels.data()), n);
    if (is.gcount() != n)
        throw FormatError(path + ": truncated pixel data at byte " + std::to_string(16 + is.gcount()),
                          16 + is.gcount());
    return out;
}

std::vector<uint8_t> read_idx_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path + ": cannot open", 0);
    uint32_t magic = read_u32_be(is, path, 0);
    if (magic != kIdxLabelsMagic)
        throw FormatError(path + ": bad label magic at byte 0", 0);
    uint32_t count = read_u32_be(is, path, 4);
    std::vector<uint8_t> labels(count);
    is.read(reinterpret_cast<char*>(labels.data()), count);
    if (is.gcount() != static_cast<int64_t>(count))
        throw FormatError(path + ": truncated label data at byte " + std::to_string(8 + is.gcount()),
                          8 + is.gcount());
    return labels;
}

void write_idx_images(const std::string& path, const RawImages& images) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path + ": cannot open for writing", 0);
    write_u32_be(os, kIdxImagesMagic);
    write_u32_be(os, static_cast<uint32_t>(images.count));
    write_u32_be(os, static_cast<uint32_t>(images.height));
    write_u32_be(os, static_cast<uint32_t>(images.width));
    os.write(reinterpret_cast<const char*>(images.pixels.data()),
             static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path + ": cannot open for writing", 0);
    write_u32_be(os, kIdxLabelsMagic);
    write_u32_be(os, static_cast<uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
}

void read_csv_dataset(const std::string& path, int64_t height, int64_t width, RawImages& images,
                      std::vector<uint8_t>& labels) {
    std::ifstream is(path);
    if (!is) throw FormatError(path + ": cannot open", 0);
    images = RawImages{0, height, width, {}};
    labels.clear();
    std::string line;
    int64_t line_no = 0;
    int64_t expect = height * width;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        int64_t n_fields = 0;
        while (std::getline(ss, field, ',')) {
            int value;
            try {
                value = std::stoi(field);
            } catch (const std::exception&) {
                throw FormatError(path + ": non-numeric field on line " + std::to_string(line_no),
                                  line_no);
            }
            if (n_fields == 0) {
                labels.push_back(static_cast<uint8_t>(value));
            } else {
                if (value < 0 || value > 255)
                    throw FormatError(path + ": pixel out of range on line " + std::to_string(line_no),
                                      line_no);
                images.pixels.push_back(static_cast<uint8_t>(value));
            }
            ++n_fields;
        }
        if (n_fields != expect + 1)
            throw FormatError(path + ": ragged row on line " + std::to_string(line_no) + " (got " +
                                  std::to_string(n_fields) + " fields, want " +
                                  std::to_string(expect + 1) + ")",
                              line_no);
        ++images.count;
    }
    return;
}

// -- normalization ----------------------------------------------------------------

Dataset assemble_dataset(const RawImages& images, const std::vector<uint8_t>& labels,
                         const Dataset* stats) {
    require(images.count == static_cast<int64_t>(labels.size()),
            "dataset: image/label counts differ");
    require(images.count >= 1, "dataset: empty");

    Dataset out;
    out.labels.assign(labels.begin(), labels.end());

    int64_t n = static_cast<int64_t>(images.pixels.size());
    std::vector<double> scaled(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) scaled[static_cast<size_t>(i)] = images.pixels[static_cast<size_t>(i)] / 255.0;

    if (stats) {
        out.norm_mean = stats->norm_mean;
        out.norm_std = stats->norm_std;
    } else {
        double mean = std::accumulate(scaled.begin(), scaled.end(), 0.0) / n;
        double var = 0.0;
        for (double v : scaled) var += (v - mean) * (v - mean);
        var /= n;
        out.norm_mean = mean;
        out.norm_std = std::sqrt(var);
        if (out.norm_std < 1e-12) out.norm_std = 1.0;
    }
    for (double& v : scaled) v = (v - out.norm_mean) / out.norm_std;
    out.images = DenseTensor({images.count, 1, images.height, images.width}, std::move(scaled));
    return out;
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         const Dataset* stats) {
    RawImages images = read_idx_images(images_path);
    std::vector<uint8_t> labels = read_idx_labels(labels_path);
    return assemble_dataset(images, labels, stats);
}

Dataset load_csv_dataset(const std::string& path, int64_t height, int64_t width,
                         const Dataset* stats) {
    RawImages images;
    std::vector<uint8_t> labels;
    read_csv_dataset(path, height, width, images, labels);
    return assemble_dataset(images, labels, stats);
}

// -- synthetic glyphs ----------------------------------------------------------------

namespace {

constexpr int64_t kSide = 28;

struct Pose {
    double cx, cy, angle, scale, intensity, thickness;
};

double coverage(double t) { return std::clamp(t + 0.5, 0.0, 1.0); }

double bar_value(double px, double py, const Pose& p, double angle_off, double half_len) {
    double a = p.angle + angle_off;
    double ux = std::cos(a), uy = std::sin(a);
    double dx = px - p.cx, dy = py - p.cy;
    double along = dx * ux + dy * uy;
    double perp = -dx * uy + dy * ux;
    return coverage(p.thickness - std::abs(perp)) *
           coverage(half_len * p.scale - std::abs(along));
}

double render_glyph(int cls, double px, double py, const Pose& p) {
    switch (cls) {
        case 0:
        case 1:
        case 2:
        case 3:
        case 4: return bar_value(px, py, p, cls * (M_PI / 5.0), 9.0);
        case 5: {  // filled disc
            double r = 5.5 * p.scale;
            double d = std::hypot(px - p.cx, py - p.cy);
            return coverage(r - d);
        }
        case 6: {  // ring
            double r = 7.0 * p.scale;
            double d = std::hypot(px - p.cx, py - p.cy);
            return coverage(p.thickness - std::abs(d - r));
        }
        case 7:  // cross
            return std::max(bar_value(px, py, p, 0.0, 8.0), bar_value(px, py, p, M_PI / 2, 8.0));
        case 8: {  // two parallel bars
            double gap = 4.0 * p.scale;
            double nx = -std::sin(p.angle), ny = std::cos(p.angle);
            Pose a = p, b = p;
            a.cx += gap * nx;
            a.cy += gap * ny;
            b.cx -= gap * nx;
            b.cy -= gap * ny;
            return std::max(bar_value(px, py, a, 0.0, 8.0), bar_value(px, py, b, 0.0, 8.0));
        }
        case 9: {  // corner: two half bars meeting at the centre
            double ux = std::cos(p.angle), uy = std::sin(p.angle);
            Pose a = p, b = p;
            a.cx += 4.5 * p.scale * ux;
            a.cy += 4.5 * p.scale * uy;
            b.cx += 4.5 * p.scale * -uy;
            b.cy += 4.5 * p.scale * ux;
            return std::max(bar_value(px, py, a, 0.0, 4.5), bar_value(px, py, b, M_PI / 2, 4.5));
        }
        default: return 0.0;
    }
}

void render_example(int cls, std::mt19937_64& rng, uint8_t* out) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Pose p;
    p.cx = 13.5 + (unit(rng) - 0.5) * 7.0;
    p.cy = 13.5 + (unit(rng) - 0.5) * 7.0;
    p.angle = (unit(rng) - 0.5) * 2.0 * (14.0 * M_PI / 180.0);
    p.scale = 0.75 + 0.5 * unit(rng);
    p.intensity = 0.55 + 0.45 * unit(rng);
    p.thickness = 1.1 + 1.0 * unit(rng);

    double img[kSide * kSide];
    for (int64_t y = 0; y < kSide; ++y)
        for (int64_t x = 0; x < kSide; ++x)
            img[y * kSide + x] =
                p.intensity * render_glyph(cls, static_cast<double>(x), static_cast<double>(y), p);

    // Distractor blobs plus pixel noise keep the task from saturating.
    int n_blobs = 1 + static_cast<int>(unit(rng) * 3.0);
    for (int d = 0; d < n_blobs; ++d) {
        double bx = unit(rng) * 27.0, by = unit(rng) * 27.0;
        double br = 0.8 + 1.2 * unit(rng), bi = 0.3 + 0.5 * unit(rng);
        for (int64_t y = 0; y < kSide; ++y)
            for (int64_t x = 0; x < kSide; ++x) {
                double dcov = coverage(br - std::hypot(x - bx, y - by));
                img[y * kSide + x] = std::max(img[y * kSide + x], bi * dcov);
            }
    }
    for (int64_t i = 0; i < kSide * kSide; ++i) {
        double v = img[i] + 0.10 * gauss(rng);
        out[i] = static_cast<uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    }
}

void generate_split(int64_t n, uint64_t seed, uint64_t stream, RawImages& images,
                    std::vector<uint8_t>& labels) {
    images = RawImages{n, kSide, kSide, std::vector<uint8_t>(static_cast<size_t>(n * kSide * kSide))};
    labels.resize(static_cast<size_t>(n));

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(seed, stream, 0));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (int64_t i = 0; i < n; ++i) {
        int cls = static_cast<int>(i % 10);  // balanced by construction
        std::mt19937_64 rng(derive_seed(seed, stream, static_cast<uint64_t>(i) + 1));
        int64_t slot = order[static_cast<size_t>(i)];
        labels[static_cast<size_t>(slot)] = static_cast<uint8_t>(cls);
        render_example(cls, rng, images.pixels.data() + slot * kSide * kSide);
    }
}

}  // namespace

void write_synthetic_dataset(const std::string& dir, int64_t n_train, int64_t n_test,
                             uint64_t seed) {
    std::filesystem::create_directories(dir);
    RawImages images;
    std::vector<uint8_t> labels;
    generate_split(n_train, seed, 20, images, labels);
    write_idx_images(synth_train_images(dir), images);
    write_idx_labels(synth_train_labels(dir), labels);
    generate_split(n_test, seed, 21, images, labels);
    write_idx_images(synth_test_images(dir), images);
    write_idx_labels(synth_test_labels(dir), labels);
}

// -- augmentation -----------------------------------------------------------------

void flip_horizontal(double* image, int64_t channels, int64_t height, int64_t width) {
    for (int64_t c = 0; c < channels; ++c)
        for (int64_t y = 0; y < height; ++y) {
            double* row = image + (c * height + y) * width;
            std::reverse(row, row + width);
        }
}

void shift_image(double* image, int64_t channels, int64_t height, int64_t width, int64_t dy,
                 int64_t dx, double fill) {
    std::vector<double> tmp(static_cast<size_t>(height * width));
    for (int64_t c = 0; c < channels; ++c) {
        double* plane = image + c * height * width;
        for (int64_t y = 0; y < height; ++y)
            for (int64_t x = 0; x < width; ++x) {
                int64_t sy = y - dy, sx = x - dx;
                bool inside = sy >= 0 && sy < height && sx >= 0 && sx < width;
                tmp[static_cast<size_t>(y * width + x)] = inside ? plane[sy * width + sx] : fill;
            }
        std::copy(tmp.begin(), tmp.end(), plane);
    }
}

}  // namespace bnn
