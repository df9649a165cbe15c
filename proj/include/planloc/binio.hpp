#pragma once

// Little-endian binary readers/writers shared by the tile, neural-map,
// column-feature, BEV and pose-volume containers.

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace planloc::binio {

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void magic(const char (&tag)[5]);
    void u8(std::uint8_t v);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::span<const std::uint8_t> data);
    void f32s(std::span<const float> data);

private:
    std::ostream& os_;
};

// Every read failure throws FormatError naming what was being read and how
// many bytes were missing.
class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    void expect_magic(const char (&tag)[5]);
    std::uint8_t u8(const char* what);
    std::uint32_t u32(const char* what);
    float f32(const char* what);
    double f64(const char* what);
    void bytes(std::span<std::uint8_t> out, const char* what);
    void f32s(std::span<float> out, const char* what);
    // Throws if the stream has trailing bytes.
    void expect_end();

private:
    void read_raw(char* dst, std::size_t n, const char* what);

    std::istream& is_;
};

}  // namespace planloc::binio
