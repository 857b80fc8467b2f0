#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

// Little-endian stream helpers shared by the checkpoint and frozen-model
// writers (IDX uses its own big-endian headers in dataset.cpp).

namespace bnn::serial {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    // Builds target little-endian hosts; keep the byte order explicit anyway.
    if constexpr (sizeof(T) > 1) {
        uint64_t bits = 0;
        std::memcpy(&bits, &value, sizeof(T));
        for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    }
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

inline void write_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_le<uint64_t>(os, bits);
}

inline void write_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_le<uint32_t>(os, bits);
}

template <typename T>
T read_le(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw IoError("unexpected end of file");
    if constexpr (sizeof(T) == 1) {
        T v;
        std::memcpy(&v, buf, 1);
        return v;
    } else {
        uint64_t bits = 0;
        for (size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
        T v{};
        std::memcpy(&v, &bits, sizeof(T));
        return v;
    }
}

inline double read_f64(std::istream& is) {
    uint64_t bits = read_le<uint64_t>(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline float read_f32(std::istream& is) {
    uint32_t bits = read_le<uint32_t>(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void write_f64_array(std::ostream& os, const std::vector<double>& a) {
    for (double v : a) write_f64(os, v);
}

inline std::vector<double> read_f64_array(std::istream& is, size_t n) {
    std::vector<double> a(n);
    for (size_t i = 0; i < n; ++i) a[i] = read_f64(is);
    return a;
}

/// FNV-1a 64-bit, used as the checkpoint integrity checksum.
inline uint64_t fnv1a(const unsigned char* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL) {
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s) {
    return fnv1a(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

}  // namespace bnn::serial
