#include "planloc/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "planloc/binio.hpp"
#include "planloc/error.hpp"

namespace planloc {

MapRaster::MapRaster(const GridSpec& s, const Datum& d, const Sha256& table_hash)
    : spec(s), datum(d), class_table_hash(table_hash) {
    for (auto& c : channels) c.assign(std::size_t(spec.cell_count()), 0);
}

namespace {

struct Band {
    int row_begin;
    int row_end;
};

Vec2 to_grid(const GridSpec& spec, Vec2 p) { return spec.continuous_index(p); }

template <typename Visit>
void trace_segment(Vec2 a, Vec2 b, int width, int row_begin, int row_end, Visit&& visit) {
    const double xmin = std::min(a.x, b.x);
    const double xmax = std::max(a.x, b.x);
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    auto j0 = static_cast<std::int64_t>(std::ceil(xmin - 0.5));
    auto j1 = static_cast<std::int64_t>(std::floor(xmax + 0.5));
    j0 = std::max<std::int64_t>(j0, 0);
    j1 = std::min<std::int64_t>(j1, width - 1);
    for (auto j = j0; j <= j1; ++j) {
        double ylo;
        double yhi;
        if (dx == 0.0) {
            ylo = std::min(a.y, b.y);
            yhi = std::max(a.y, b.y);
        } else {
            double xa = std::max(xmin, double(j) - 0.5);
            double xb = std::min(xmax, double(j) + 0.5);
            double ta = std::clamp((xa - a.x) / dx, 0.0, 1.0);
            double tb = std::clamp((xb - a.x) / dx, 0.0, 1.0);
            double ya = a.y + ta * dy;
            double yb = a.y + tb * dy;
            ylo = std::min(ya, yb);
            yhi = std::max(ya, yb);
        }
        auto i0 = static_cast<std::int64_t>(std::ceil(ylo - 0.5));
        auto i1 = static_cast<std::int64_t>(std::floor(yhi + 0.5));
        i0 = std::max<std::int64_t>(i0, row_begin);
        i1 = std::min<std::int64_t>(i1, row_end - 1);
        for (auto i = i0; i <= i1; ++i) visit(i, j);
    }
}

void fill_polygon(const std::vector<Vec2>& ring, int width, Band band, std::uint8_t value,
                  std::vector<std::uint8_t>& plane) {
    if (ring.size() < 3) return;
    double ymin = ring.front().y;
    double ymax = ymin;
    for (const auto& p : ring) {
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    int r0 = std::max(band.row_begin, static_cast<int>(std::max(std::ceil(ymin), -1.0)));
    int r1 = std::min(band.row_end - 1, static_cast<int>(std::min(std::floor(ymax), 1e9)));

    struct Crossing {
        double x;
        int winding;
    };
    std::vector<Crossing> xs;
    for (int i = r0; i <= r1; ++i) {
        const double y = i;
        xs.clear();
        // A closed ring's final edge is degenerate and never crosses.
        for (std::size_t e = 0; e < ring.size(); ++e) {
            const Vec2 a = ring[e];
            const Vec2 b = ring[(e + 1) % ring.size()];
            int w = 0;
            if (a.y <= y && y < b.y) {
                w = 1;
            } else if (b.y <= y && y < a.y) {
                w = -1;
            }
            if (w == 0) continue;
            xs.push_back({a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y), w});
        }
        std::sort(xs.begin(), xs.end(), [](const Crossing& p, const Crossing& q) {
            return p.x < q.x || (p.x == q.x && p.winding < q.winding);
        });
        int winding = 0;
        for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
            winding += xs[k].winding;
            if (winding == 0) continue;
            double c0 = std::max(std::ceil(xs[k].x), 0.0);
            double c1 = std::min(std::ceil(xs[k + 1].x) - 1.0, double(width - 1));
            for (auto j = static_cast<std::int64_t>(c0); j <= static_cast<std::int64_t>(c1); ++j) {
                plane[std::size_t(i) * width + j] = value;
            }
        }
    }
}

void check_index(int cls, GeometryKind kind, const ClassTable& table) {
    if (cls < 1 || cls >= table.index_count(kind)) {
        throw ConfigError("class index " + std::to_string(cls) + " is not a valid " +
                          std::string(to_string(kind)) + " class");
    }
}

template <typename T>
std::vector<const T*> by_class(const std::vector<T>& items) {
    std::vector<const T*> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(&it);
    std::stable_sort(out.begin(), out.end(),
                     [](const T* a, const T* b) { return a->class_index < b->class_index; });
    return out;
}

}  // namespace

std::vector<CellIndex> supercover(Vec2 a, Vec2 b, int width, int height) {
    std::vector<CellIndex> cells;
    trace_segment(a, b, width, 0, height, [&](std::int64_t i, std::int64_t j) { cells.push_back({i, j}); });
    return cells;
}

MapRaster rasterize(const MapGeometries& geoms, const GridSpec& spec, const ClassTable& table,
                    const Datum& datum, const RasterOptions& options) {
    for (const auto& p : geoms.polygons) check_index(p.class_index, GeometryKind::Area, table);
    for (const auto& l : geoms.polylines) check_index(l.class_index, GeometryKind::Line, table);
    for (const auto& p : geoms.points) check_index(p.class_index, GeometryKind::Node, table);

    MapRaster raster(spec, datum, table.hash());
    const int W = spec.width();
    const int H = spec.height();

    std::vector<std::pair<int, std::vector<Vec2>>> polys;
    for (const auto* p : by_class(geoms.polygons)) {
        std::vector<Vec2> g;
        g.reserve(p->ring.size());
        for (auto v : p->ring) g.push_back(to_grid(spec, v));
        polys.emplace_back(p->class_index, std::move(g));
    }
    std::vector<std::pair<int, std::vector<Vec2>>> lines;
    for (const auto* l : by_class(geoms.polylines)) {
        std::vector<Vec2> g;
        g.reserve(l->points.size());
        for (auto v : l->points) g.push_back(to_grid(spec, v));
        lines.emplace_back(l->class_index, std::move(g));
    }
    const auto points = by_class(geoms.points);

    auto draw_band = [&](Band band) {
        auto& area = raster.channels[0];
        auto& line = raster.channels[1];
        auto& node = raster.channels[2];
        for (const auto& [cls, ring] : polys) {
            fill_polygon(ring, W, band, static_cast<std::uint8_t>(cls), area);
        }
        for (const auto& [cls, pts] : lines) {
            int w = 1;
            if (auto it = options.line_width.find(cls); it != options.line_width.end()) w = it->second;
            const int r = std::max(0, (w - 1) / 2);
            const auto value = static_cast<std::uint8_t>(cls);
            auto put = [&](std::int64_t i, std::int64_t j) {
                line[std::size_t(i) * W + j] = value;
            };
            for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
                if (r == 0) {
                    trace_segment(pts[k], pts[k + 1], W, band.row_begin, band.row_end, put);
                } else {
                    // Dilated trace: offsets applied to the segment itself so
                    // every band sees the same cells.
                    for (int oy = -r; oy <= r; ++oy) {
                        for (int ox = -r; ox <= r; ++ox) {
                            Vec2 o{double(ox), double(oy)};
                            trace_segment(pts[k] + o, pts[k + 1] + o, W, band.row_begin, band.row_end, put);
                        }
                    }
                }
            }
        }
        for (const auto* p : points) {
            CellIndex c = spec.cell_of(p->position);
            if (!spec.contains(c) || c.row < band.row_begin || c.row >= band.row_end) continue;
            node[std::size_t(c.row) * W + c.col] = static_cast<std::uint8_t>(p->class_index);
        }
    };

    const int threads = std::clamp(options.threads, 1, H);
    if (threads == 1) {
        draw_band({0, H});
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            Band band{H * t / threads, H * (t + 1) / threads};
            pool.emplace_back(draw_band, band);
        }
        for (auto& th : pool) th.join();
    }
    return raster;
}

void save_tile(const MapRaster& r, std::ostream& os) {
    binio::Writer w(os);
    w.magic("PLTL");
    w.u32(kTileVersion);
    w.f64(r.spec.origin().x);
    w.f64(r.spec.origin().y);
    w.f64(r.spec.delta());
    w.u32(static_cast<std::uint32_t>(r.spec.width()));
    w.u32(static_cast<std::uint32_t>(r.spec.height()));
    w.f64(r.datum.lon0());
    w.f64(r.datum.lat0());
    w.bytes(r.class_table_hash);
    for (const auto& c : r.channels) w.bytes(c);
    if (!os) throw Error("failed writing tile");
}

void save_tile(const MapRaster& raster, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create '" + path.string() + "'");
    save_tile(raster, out);
}

TileLoad load_tile(std::istream& is, const ClassTable* current) {
    binio::Reader rd(is);
    rd.expect_magic("PLTL");
    auto version = rd.u32("version");
    if (version != kTileVersion) {
        throw FormatError("unsupported tile version " + std::to_string(version));
    }
    Vec2 origin{rd.f64("origin.x"), 0.0};
    origin.y = rd.f64("origin.y");
    double delta = rd.f64("delta");
    auto width = rd.u32("width");
    auto height = rd.u32("height");
    double lon0 = rd.f64("datum lon0");
    double lat0 = rd.f64("datum lat0");
    if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
        throw FormatError("tile dimensions out of range");
    }
    TileLoad out;
    try {
        out.raster = MapRaster(GridSpec(origin, delta, int(width), int(height)), Datum(lon0, lat0), {});
    } catch (const DomainError& e) {
        throw FormatError(std::string("invalid tile header: ") + e.what());
    }
    rd.bytes(out.raster.class_table_hash, "class table digest");
    const char* names[] = {"area plane", "line plane", "node plane"};
    for (int k = 0; k < kChannelCount; ++k) rd.bytes(out.raster.channels[k], names[k]);
    rd.expect_end();
    if (current && current->hash() != out.raster.class_table_hash) {
        out.warnings.push_back("tile class table digest " + to_hex(out.raster.class_table_hash) +
                               " differs from the active table " + to_hex(current->hash()));
    }
    if (current) {
        for (int k = 0; k < kChannelCount; ++k) {
            auto limit = current->index_count(static_cast<GeometryKind>(k));
            for (auto v : out.raster.channels[k]) {
                if (v >= limit) {
                    out.warnings.push_back(std::string(to_string(static_cast<GeometryKind>(k))) +
                                           " plane holds class indices beyond the active table");
                    break;
                }
            }
        }
    }
    return out;
}

TileLoad load_tile(const std::filesystem::path& path, const ClassTable* current) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return load_tile(in, current);
}

std::string serialize_tile(const MapRaster& raster) {
    std::ostringstream os(std::ios::binary);
    save_tile(raster, os);
    return os.str();
}

std::string raster_digest(const MapRaster& raster) { return to_hex(sha256(serialize_tile(raster))); }

void write_channel_pgm(const MapRaster& r, GeometryKind kind, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create '" + path.string() + "'");
    const int W = r.spec.width();
    const int H = r.spec.height();
    const auto& plane = r.channels[static_cast<int>(kind)];
    int maxv = 1;
    for (auto v : plane) maxv = std::max<int>(maxv, v);
    out << "P5\n" << W << ' ' << H << "\n255\n";
    std::vector<std::uint8_t> row(W);
    for (int i = H - 1; i >= 0; --i) {
        for (int j = 0; j < W; ++j) row[j] = static_cast<std::uint8_t>(plane[std::size_t(i) * W + j] * 255 / maxv);
        out.write(reinterpret_cast<const char*>(row.data()), W);
    }
}

}  // namespace planloc
