#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "bgdm/tensor.hpp"

namespace bgdm {

// Tensor file format, little-endian:
//   magic "NTSR" | u8 dtype (0=real64, 1=complex128) | u8 rank |
//   rank x u32 dims | float64 payload, row-major, complex interleaved (re, im)

namespace detail {

inline constexpr char kTensorMagic[4] = {'N', 'T', 'S', 'R'};

template <class T>
inline constexpr std::uint8_t dtype_tag() {
    return is_complex_v<T> ? 1 : 0;
}

inline void write_exact(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw format_error("tensor write failed");
}

inline void read_exact(std::istream& is, void* p, std::size_t n, long long offset) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw format_error("truncated tensor file", offset);
}

template <class T>
void save_tensor_stream(const Tensor<T>& t, std::ostream& os) {
    if (!t.all_finite()) throw format_error("refusing to export non-finite tensor");
    if (t.rank() > 255) throw format_error("tensor rank exceeds format limit");
    write_exact(os, kTensorMagic, 4);
    const std::uint8_t tag = dtype_tag<T>();
    const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
    write_exact(os, &tag, 1);
    write_exact(os, &rank, 1);
    for (std::size_t d : t.shape()) {
        const std::uint32_t dim = static_cast<std::uint32_t>(d);
        write_exact(os, &dim, 4);
    }
    write_exact(os, t.data(), t.size() * sizeof(T));
}

template <class T>
Tensor<T> load_tensor_stream(std::istream& is) {
    char magic[4];
    read_exact(is, magic, 4, 0);
    if (std::memcmp(magic, kTensorMagic, 4) != 0)
        throw format_error("bad magic bytes", 0);
    std::uint8_t tag = 0, rank = 0;
    read_exact(is, &tag, 1, 4);
    read_exact(is, &rank, 1, 5);
    if (tag != dtype_tag<T>())
        throw format_error("dtype tag mismatch (expected " +
                               std::to_string(int(dtype_tag<T>())) + ", got " +
                               std::to_string(int(tag)) + ")",
                           4);
    std::vector<std::size_t> shape(rank);
    long long offset = 6;
    for (std::size_t i = 0; i < rank; ++i) {
        std::uint32_t dim = 0;
        read_exact(is, &dim, 4, offset);
        if (dim == 0) throw format_error("zero-sized dimension", offset);
        shape[i] = dim;
        offset += 4;
    }
    Tensor<T> t(shape);
    read_exact(is, t.data(), t.size() * sizeof(T), offset);
    if (!t.all_finite())
        throw format_error("non-finite values in tensor payload", offset);
    return t;
}

}  // namespace detail

template <class T>
void save_tensor(const Tensor<T>& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("cannot open for writing: " + path);
    detail::save_tensor_stream(t, os);
}

template <class T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("cannot open: " + path);
    return detail::load_tensor_stream<T>(is);
}

/// Peek at the dtype tag of a tensor file (0=real64, 1=complex128).
inline int tensor_file_dtype(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("cannot open: " + path);
    char header[5];
    detail::read_exact(is, header, 5, 0);
    if (std::memcmp(header, detail::kTensorMagic, 4) != 0)
        throw format_error("bad magic bytes", 0);
    return header[4];
}

}  // namespace bgdm
