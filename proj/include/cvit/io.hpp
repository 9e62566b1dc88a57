#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>

#include "cvit/errors.hpp"

namespace cvit::io {

/// Little-endian byte sink.
class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.append(s); }

    template <class U>
    void put(U v)
    {
        static_assert(std::is_arithmetic_v<U>);
        using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                     std::conditional_t<sizeof(U) == 2, std::uint16_t,
                     std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
        const Bits bits = std::bit_cast<Bits>(v);
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }

    [[nodiscard]] const std::string& buffer() const noexcept { return buf_; }
    [[nodiscard]] std::string take() noexcept { return std::move(buf_); }

private:
    std::string buf_;
};

/// Little-endian byte source over an in-memory buffer. Running past the end
/// raises FormatError::truncated_payload.
class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::string_view bytes(std::size_t n, const char* what = "payload")
    {
        require(n, what);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    template <class U>
    U get(const char* what = "payload")
    {
        static_assert(std::is_arithmetic_v<U>);
        using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                     std::conditional_t<sizeof(U) == 2, std::uint16_t,
                     std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
        require(sizeof(U), what);
        Bits bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bits |= static_cast<Bits>(static_cast<Bits>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
        }
        pos_ += sizeof(U);
        return std::bit_cast<U>(bits);
    }

    [[nodiscard]] std::size_t remaining() const noexcept { return data_.size() - pos_; }
    [[nodiscard]] std::size_t position() const noexcept { return pos_; }

private:
    void require(std::size_t n, const char* what) const
    {
        if (data_.size() - pos_ < n) {
            throw FormatError(FormatError::Kind::truncated_payload,
                              std::string("truncated payload while reading ") + what);
        }
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temp file then renames, so readers never observe a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError(FormatError::Kind::io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace cvit::io
