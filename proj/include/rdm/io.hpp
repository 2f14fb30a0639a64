#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rdm/errors.hpp"

namespace rdm {

// Little-endian binary encoding into a growable buffer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v);
    void bytes(const void* p, std::size_t n);
    // u32 length prefix + UTF-8 payload
    void str(const std::string& s);
    void magic(const char tag[4]) { bytes(tag, 4); }

    const std::vector<std::uint8_t>& buffer() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

// Little-endian decoding with offset tracking; truncation and bad tags raise
// FormatError carrying the byte offset.
class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> data, std::string source)
        : data_(std::move(data)), source_(std::move(source)) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    void bytes(void* p, std::size_t n);
    std::string str();
    void expect_magic(const char tag[4]);

    std::uint64_t offset() const { return off_; }
    std::uint64_t remaining() const { return data_.size() - off_; }
    bool at_end() const { return off_ == data_.size(); }
    void expect_end();

    [[noreturn]] void fail(const std::string& msg) const;

private:
    void need(std::size_t n);

    std::vector<std::uint8_t> data_;
    std::string source_;
    std::uint64_t off_ = 0;
};

std::uint32_t crc32_bytes(const std::vector<std::uint8_t>& data);
std::uint32_t crc32_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// Writes to "<path>.tmp" then renames, so a crash never leaves a half file.
void atomic_write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data);
void atomic_write_text(const std::filesystem::path& path, const std::string& text);

std::string read_text_file(const std::filesystem::path& path);

// FNV-1a over a string; used for config hashes and provenance ids.
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

}  // namespace rdm
