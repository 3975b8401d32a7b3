#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cloudclass/core/error.hpp"

namespace cloudclass {

/// Little-endian byte buffer used by all binary writers. Files are staged in
/// memory and written in one shot, so identical inputs give identical bytes
/// and failures never leave partial output behind.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }

    void u32(std::uint32_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
        buf_.push_back(static_cast<std::uint8_t>(v >> 16));
        buf_.push_back(static_cast<std::uint8_t>(v >> 24));
    }

    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    const std::vector<std::uint8_t>& data() const { return buf_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        if (!out) throw IoError("write failed for '" + path.string() + "'");
    }

private:
    std::vector<std::uint8_t> buf_;
};

/// Cursor over a fully loaded file; every read reports its byte offset on
/// truncation so format errors point at the failing field.
class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

    static ByteReader from_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw IoError("cannot open '" + path.string() + "'");
        const auto size = static_cast<std::size_t>(in.tellg());
        in.seekg(0);
        std::vector<std::uint8_t> buf(size);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
        if (!in) throw IoError("read failed for '" + path.string() + "'");
        return ByteReader(std::move(buf));
    }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

    std::uint8_t u8() {
        need(1, "u8");
        return buf_[pos_++];
    }

    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = static_cast<std::uint32_t>(buf_[pos_]) |
                          static_cast<std::uint32_t>(buf_[pos_ + 1]) << 8 |
                          static_cast<std::uint32_t>(buf_[pos_ + 2]) << 16 |
                          static_cast<std::uint32_t>(buf_[pos_ + 3]) << 24;
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | static_cast<std::uint64_t>(u32()) << 32;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    void bytes(void* out, std::size_t n) {
        need(n, "bytes");
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }

    std::string str() {
        const std::uint32_t n = u32();
        need(n, "string payload");
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void expect_end(const char* what) const {
        if (pos_ != buf_.size())
            throw FormatError(std::string("trailing bytes after ") + what, pos_);
    }

private:
    void need(std::size_t n, const char* what) const {
        if (buf_.size() - pos_ < n)
            throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

} // namespace cloudclass
