#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "planloc/classes.hpp"
#include "planloc/digest.hpp"
#include "planloc/geometry.hpp"
#include "planloc/osm.hpp"

namespace planloc {

// Three class-index planes (areas, lines, nodes), row-major with row 0 at
// the southern edge. Index 0 is void.
struct MapRaster {
    GridSpec spec;
    Datum datum;
    Sha256 class_table_hash{};
    std::array<std::vector<std::uint8_t>, kChannelCount> channels;

    MapRaster() = default;
    MapRaster(const GridSpec& spec, const Datum& datum, const Sha256& table_hash);

    std::uint8_t at(GeometryKind kind, int row, int col) const {
        return channels[static_cast<int>(kind)][std::size_t(row) * spec.width() + col];
    }
    std::uint8_t& at(GeometryKind kind, int row, int col) {
        return channels[static_cast<int>(kind)][std::size_t(row) * spec.width() + col];
    }

    friend bool operator==(const MapRaster&, const MapRaster&) = default;
};

struct RasterOptions {
    // Odd trace width in cells per line class; classes not listed use 1.
    std::map<int, int> line_width;
    // Workers splitting the grid into disjoint row bands.
    int threads = 1;
};

// Polygons are filled with the nonzero winding rule (a cell is inside when
// its center is), polylines are traced as supercover cell chains, points set
// their nearest cell. Within a channel elements are drawn in ascending class
// order and later writes win. Throws ConfigError for class indices the table
// does not define.
MapRaster rasterize(const MapGeometries& geoms, const GridSpec& spec, const ClassTable& table,
                    const Datum& datum = {}, const RasterOptions& options = {});

// Cells visited by the supercover trace of segment a-b, in continuous grid
// coordinates ({col, row}, cell centers integral). Only cells inside
// [0, width) x [0, height) are reported.
std::vector<CellIndex> supercover(Vec2 a, Vec2 b, int width, int height);

inline constexpr std::uint32_t kTileVersion = 1;

// PLTL container: "PLTL", u32 version, f64 origin.x, f64 origin.y, f64 delta,
// u32 width, u32 height, f64 lon0, f64 lat0, 32-byte class table digest, then
// the area, line and node planes (u8, row-major, rows south to north).
void save_tile(const MapRaster& raster, std::ostream& os);
void save_tile(const MapRaster& raster, const std::filesystem::path& path);

struct TileLoad {
    MapRaster raster;
    // Non-fatal findings, e.g. a class table digest that differs from the
    // table the caller is using.
    std::vector<std::string> warnings;
};

// Throws FormatError on bad magic, unsupported version or truncation.
TileLoad load_tile(std::istream& is, const ClassTable* current = nullptr);
TileLoad load_tile(const std::filesystem::path& path, const ClassTable* current = nullptr);

std::string serialize_tile(const MapRaster& raster);
// SHA-256 of the PLTL encoding.
std::string raster_digest(const MapRaster& raster);

// Binary PGM of one channel, north up, indices scaled to 0..255.
void write_channel_pgm(const MapRaster& raster, GeometryKind kind, const std::filesystem::path& path);

}  // namespace planloc
