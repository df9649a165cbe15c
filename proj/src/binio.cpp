#include "planloc/binio.hpp"

#include <bit>
#include <cstring>

#include "planloc/error.hpp"

namespace planloc::binio {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
}

}  // namespace

void Writer::magic(const char (&tag)[5]) { os_.write(tag, 4); }
void Writer::u8(std::uint8_t v) { put(os_, v); }
void Writer::u32(std::uint32_t v) { put(os_, v); }
void Writer::f32(float v) { put(os_, v); }
void Writer::f64(double v) { put(os_, v); }

void Writer::bytes(std::span<const std::uint8_t> data) {
    os_.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
}

void Writer::f32s(std::span<const float> data) {
    os_.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size_bytes()));
}

void Reader::read_raw(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
        throw FormatError(std::string("truncated stream while reading ") + what +
                          ": missing " + std::to_string(n - got) + " byte(s)");
    }
}

void Reader::expect_magic(const char (&tag)[5]) {
    char buf[4];
    read_raw(buf, 4, "magic");
    if (std::memcmp(buf, tag, 4) != 0) {
        throw FormatError(std::string("bad magic: expected '") + tag + "', got '" +
                          std::string(buf, 4) + "'");
    }
}

std::uint8_t Reader::u8(const char* what) {
    std::uint8_t v;
    read_raw(reinterpret_cast<char*>(&v), 1, what);
    return v;
}

std::uint32_t Reader::u32(const char* what) {
    std::uint32_t v;
    read_raw(reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
}

float Reader::f32(const char* what) {
    float v;
    read_raw(reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
}

double Reader::f64(const char* what) {
    double v;
    read_raw(reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
}

void Reader::bytes(std::span<std::uint8_t> out, const char* what) {
    read_raw(reinterpret_cast<char*>(out.data()), out.size(), what);
}

void Reader::f32s(std::span<float> out, const char* what) {
    read_raw(reinterpret_cast<char*>(out.data()), out.size_bytes(), what);
}

void Reader::expect_end() {
    if (is_.peek() != std::char_traits<char>::eof()) {
        throw FormatError("unexpected trailing bytes after payload");
    }
}

}  // namespace planloc::binio
