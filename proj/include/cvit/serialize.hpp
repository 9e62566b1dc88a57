#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <type_traits>

#include "cvit/io.hpp"
#include "cvit/tensor.hpp"

namespace cvit {

/// Named tensors in sorted-name order, so serialization is canonical.
template <class T>
using NamedTensors = std::map<std::string, Tensor<T>>;

namespace detail {

template <class T>
constexpr std::uint8_t dtype_code()
{
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? 0 : 1;
}

}  // namespace detail

// Tensor record: "CVT1", u8 dtype (0=f32, 1=f64), u32 rank, rank x u32 dims,
// row-major payload, all little-endian.

template <class T>
void write_tensor(io::ByteWriter& w, const Tensor<T>& t)
{
    w.bytes("CVT1");
    w.put<std::uint8_t>(detail::dtype_code<T>());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (T v : t.data()) w.put<T>(v);
}

/// Reads one tensor record, converting the stored dtype to T if needed.
template <class T>
Tensor<T> read_tensor(io::ByteReader& r)
{
    if (r.remaining() < 4) throw FormatError(FormatError::Kind::truncated_payload, "truncated tensor header");
    if (r.bytes(4, "tensor magic") != "CVT1") throw FormatError(FormatError::Kind::bad_magic, "bad magic in tensor record");
    const auto dtype = r.get<std::uint8_t>("tensor dtype");
    if (dtype > 1) throw FormatError(FormatError::Kind::bad_header, "unknown tensor dtype " + std::to_string(dtype));
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > 16) throw FormatError(FormatError::Kind::bad_header, "implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>("tensor dims");
    const std::size_t n = shape_size(shape);
    const std::size_t width = dtype == 0 ? 4 : 8;
    if (r.remaining() / width < n) throw FormatError(FormatError::Kind::truncated_payload, "truncated tensor payload");
    std::vector<T> values(n);
    for (auto& v : values) v = dtype == 0 ? static_cast<T>(r.get<float>()) : static_cast<T>(r.get<double>());
    return Tensor<T>(std::move(shape), std::move(values));
}

template <class T>
std::string encode_tensor(const Tensor<T>& t)
{
    io::ByteWriter w;
    write_tensor(w, t);
    return w.take();
}

template <class T>
Tensor<T> decode_tensor(std::string_view bytes)
{
    io::ByteReader r(bytes);
    return read_tensor<T>(r);
}

// Checkpoint archive: "CVC1", u32 entry count, then per entry u32 name
// length, UTF-8 name, tensor record. Entries are written in name order.

template <class T>
std::string encode_checkpoint(const NamedTensors<T>& entries)
{
    io::ByteWriter w;
    w.bytes("CVC1");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, tensor] : entries) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        write_tensor(w, tensor);
    }
    return w.take();
}

template <class T>
NamedTensors<T> decode_checkpoint(std::string_view bytes)
{
    io::ByteReader r(bytes);
    if (bytes.size() < 4) throw FormatError(FormatError::Kind::truncated_payload, "truncated checkpoint header");
    if (r.bytes(4) != "CVC1") throw FormatError(FormatError::Kind::bad_magic, "bad magic: not a checkpoint archive");
    const auto count = r.get<std::uint32_t>("checkpoint entry count");
    NamedTensors<T> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint32_t>("entry name length");
        std::string name(r.bytes(len, "entry name"));
        if (entries.contains(name)) throw FormatError(FormatError::Kind::bad_header, "duplicate checkpoint entry " + name);
        entries.emplace(std::move(name), read_tensor<T>(r));
    }
    if (r.remaining() != 0) throw FormatError(FormatError::Kind::bad_header, "trailing bytes after checkpoint entries");
    return entries;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const NamedTensors<T>& entries)
{
    io::write_file_atomic(path, encode_checkpoint(entries));
}

template <class T>
NamedTensors<T> load_checkpoint(const std::filesystem::path& path)
{
    return decode_checkpoint<T>(io::read_file(path));
}

/// Checkpoint with entries of both precisions (e.g. f32 parameters plus f64
/// metadata). Names must be unique across the two maps.
struct Archive {
    NamedTensors<float> f32;
    NamedTensors<double> f64;

    template <class T>
    NamedTensors<T>& of()
    {
        if constexpr (std::is_same_v<T, float>) return f32; else return f64;
    }
    template <class T>
    const NamedTensors<T>& of() const
    {
        if constexpr (std::is_same_v<T, float>) return f32; else return f64;
    }

    [[nodiscard]] bool contains(const std::string& name) const { return f32.contains(name) || f64.contains(name); }
};

inline std::string encode_archive(const Archive& a)
{
    std::map<std::string, const void*> order;
    for (const auto& [name, _] : a.f32) order.emplace(name, nullptr);
    for (const auto& [name, _] : a.f64) {
        if (!order.emplace(name, nullptr).second) throw FormatError(FormatError::Kind::bad_header, "duplicate entry " + name);
    }
    io::ByteWriter w;
    w.bytes("CVC1");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(order.size()));
    for (const auto& [name, _] : order) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        if (auto it = a.f32.find(name); it != a.f32.end()) write_tensor(w, it->second);
        else write_tensor(w, a.f64.at(name));
    }
    return w.take();
}

/// Entries keep their stored precision.
inline Archive decode_archive(std::string_view bytes)
{
    io::ByteReader r(bytes);
    if (bytes.size() < 4) throw FormatError(FormatError::Kind::truncated_payload, "truncated checkpoint header");
    if (r.bytes(4) != "CVC1") throw FormatError(FormatError::Kind::bad_magic, "bad magic: not a checkpoint archive");
    const auto count = r.get<std::uint32_t>("checkpoint entry count");
    Archive a;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint32_t>("entry name length");
        std::string name(r.bytes(len, "entry name"));
        if (a.contains(name)) throw FormatError(FormatError::Kind::bad_header, "duplicate checkpoint entry " + name);
        auto peek = r;
        if (peek.remaining() >= 5) peek.bytes(4);
        const auto dtype = peek.remaining() ? peek.get<std::uint8_t>() : std::uint8_t{0};
        if (dtype == 1) a.f64.emplace(std::move(name), read_tensor<double>(r));
        else a.f32.emplace(std::move(name), read_tensor<float>(r));
    }
    if (r.remaining() != 0) throw FormatError(FormatError::Kind::bad_header, "trailing bytes after checkpoint entries");
    return a;
}

inline void save_archive(const std::filesystem::path& path, const Archive& a)
{
    io::write_file_atomic(path, encode_archive(a));
}

inline Archive load_archive(const std::filesystem::path& path) { return decode_archive(io::read_file(path)); }

}  // namespace cvit
