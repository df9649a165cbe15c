#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "planloc/error.hpp"
#include "planloc/osm.hpp"
#include "planloc/raster.hpp"
#include "planloc/rng.hpp"

using namespace planloc;

namespace {

// Liang-Barsky: does segment a-b meet the closed square of cell (i, j)?
bool segment_hits_cell(Vec2 a, Vec2 b, std::int64_t i, std::int64_t j) {
    double t0 = 0.0, t1 = 1.0;
    const double d[2] = {b.x - a.x, b.y - a.y};
    const double lo[2] = {double(j) - 0.5, double(i) - 0.5};
    const double hi[2] = {double(j) + 0.5, double(i) + 0.5};
    const double p0[2] = {a.x, a.y};
    for (int k = 0; k < 2; ++k) {
        if (d[k] == 0.0) {
            if (p0[k] < lo[k] || p0[k] > hi[k]) return false;
            continue;
        }
        double ta = (lo[k] - p0[k]) / d[k];
        double tb = (hi[k] - p0[k]) / d[k];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}

int winding_number(const std::vector<Vec2>& ring, Vec2 p) {
    int w = 0;
    for (std::size_t e = 0; e + 1 < ring.size(); ++e) {
        Vec2 a = ring[e], b = ring[e + 1];
        double cross = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if (a.y <= p.y && b.y > p.y && cross > 0) ++w;
        if (a.y > p.y && b.y <= p.y && cross < 0) --w;
    }
    return w;
}

const ClassTable& table() { return ClassTable::builtin(); }

int area(const char* name) { return *table().index_of(GeometryKind::Area, name); }
int line(const char* name) { return *table().index_of(GeometryKind::Line, name); }
int node(const char* name) { return *table().index_of(GeometryKind::Node, name); }

}  // namespace

TEST_CASE("supercover matches a closed-cell intersection oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        Vec2 a{rng.uniform(-3, 23), rng.uniform(-3, 23)};
        Vec2 b{rng.uniform(-3, 23), rng.uniform(-3, 23)};
        if (trial % 10 == 0) b.x = a.x;
        if (trial % 10 == 1) b.y = a.y;
        auto cells = supercover(a, b, 20, 20);
        std::set<std::pair<std::int64_t, std::int64_t>> got;
        for (auto c : cells) got.insert({c.row, c.col});
        CHECK(got.size() == cells.size());
        std::set<std::pair<std::int64_t, std::int64_t>> want;
        for (int i = 0; i < 20; ++i)
            for (int j = 0; j < 20; ++j)
                if (segment_hits_cell(a, b, i, j)) want.insert({i, j});
        CHECK(got == want);
    }
}

TEST_CASE("supercover examples") {
    auto cells = supercover({0, 0}, {3, 0}, 10, 10);
    CHECK(cells == std::vector<CellIndex>{{0, 0}, {0, 1}, {0, 2}, {0, 3}});
    CHECK(supercover({-5, -5}, {-4, -4}, 10, 10).empty());
    CHECK(supercover({2, 2}, {2, 2}, 10, 10) == std::vector<CellIndex>{{2, 2}});
}

TEST_CASE("polygon fill matches a nonzero winding oracle on cell centers") {
    Rng rng(5);
    const auto spec = GridSpec({0, 0}, 1.0, 24, 24);
    for (int trial = 0; trial < 60; ++trial) {
        MapGeometries g;
        osm::Polygon p;
        p.class_index = area("building");
        const int n = 3 + trial % 6;
        for (int k = 0; k < n; ++k) p.ring.push_back({rng.uniform(-2.3, 25.3), rng.uniform(-2.3, 25.3)});
        p.ring.push_back(p.ring.front());
        g.polygons.push_back(p);
        auto r = rasterize(g, spec, table());
        int mismatches = 0;
        for (int i = 0; i < 24; ++i)
            for (int j = 0; j < 24; ++j) {
                bool inside = winding_number(p.ring, {double(j), double(i)}) != 0;
                mismatches += inside != (r.at(GeometryKind::Area, i, j) != 0);
            }
        CHECK(mismatches == 0);
    }
}

TEST_CASE("nonzero rule fills the core of a pentagram") {
    MapGeometries g;
    osm::Polygon p;
    p.class_index = area("grass");
    for (int k = 0; k <= 5; ++k) {
        double a = M_PI / 2 + k * 4 * M_PI / 5;
        p.ring.push_back({10.1 + 9 * std::cos(a), 10.1 + 9 * std::sin(a)});
    }
    g.polygons.push_back(p);
    auto r = rasterize(g, GridSpec({0, 0}, 1.0, 21, 21), table());
    CHECK(r.at(GeometryKind::Area, 10, 10) == area("grass"));
}

TEST_CASE("drawing order, points and line width") {
    const auto spec = GridSpec({0, 0}, 1.0, 16, 16);
    MapGeometries g;
    osm::Polygon big{area("grass"), {{-1, -1}, {17, -1}, {17, 17}, {-1, 17}, {-1, -1}}};
    osm::Polygon small{area("building"), {{3.5, 3.5}, {6.5, 3.5}, {6.5, 6.5}, {3.5, 6.5}, {3.5, 3.5}}};
    // Listed in reverse class order: the higher class must still win.
    if (area("building") > area("grass")) {
        g.polygons = {small, big};
    } else {
        g.polygons = {big, small};
    }
    g.points.push_back({node("tree"), {7.4, 8.6}});
    g.points.push_back({node("tree"), {100, 100}});
    g.polylines.push_back({line("road"), {{0, 12}, {15, 12}}});
    RasterOptions opt;
    opt.line_width[line("road")] = 3;
    auto r = rasterize(g, spec, table(), {}, opt);
    const int top = std::max(area("building"), area("grass"));
    CHECK(r.at(GeometryKind::Area, 5, 5) == top);
    CHECK(r.at(GeometryKind::Area, 0, 0) == area("grass"));
    CHECK(r.at(GeometryKind::Node, 9, 7) == node("tree"));
    int trees = 0;
    for (auto v : r.channels[2]) trees += v != 0;
    CHECK(trees == 1);
    for (int j = 0; j < 16; ++j) {
        CHECK(r.at(GeometryKind::Line, 11, j) == line("road"));
        CHECK(r.at(GeometryKind::Line, 12, j) == line("road"));
        CHECK(r.at(GeometryKind::Line, 13, j) == line("road"));
        CHECK(r.at(GeometryKind::Line, 10, j) == 0);
        CHECK(r.at(GeometryKind::Line, 14, j) == 0);
    }
}

TEST_CASE("unknown class index is a configuration error") {
    MapGeometries g;
    g.points.push_back({200, {0, 0}});
    CHECK_THROWS_AS(rasterize(g, GridSpec({0, 0}, 1.0, 4, 4), table()), ConfigError);
    g.points = {{0, {0, 0}}};
    CHECK_THROWS_AS(rasterize(g, GridSpec({0, 0}, 1.0, 4, 4), table()), ConfigError);
}

TEST_CASE("fixture rasterization is deterministic across thread counts") {
    auto graph = osm::parse_xml_file(std::string(PLANLOC_SOURCE_DIR) + "/fixtures/block.osm");
    Datum d(8.5400, 47.3700);
    auto geo = osm::build_geometries(graph, d, table());
    auto spec = GridSpec::centered(0.5, 128, 128);
    auto one = rasterize(geo, spec, table(), d);
    for (int threads : {2, 3, 4, 8}) {
        RasterOptions opt;
        opt.threads = threads;
        auto many = rasterize(geo, spec, table(), d, opt);
        CHECK(many == one);
        CHECK(raster_digest(many) == raster_digest(one));
    }
    int filled = 0;
    for (const auto& ch : one.channels)
        for (auto v : ch) filled += v != 0;
    CHECK(filled > 0);
}

TEST_CASE("tile container round trip and errors") {
    auto r = MapRaster(GridSpec({-3.5, 2.25}, 0.5, 7, 5), Datum(8.54, 47.37), table().hash());
    Rng rng(3);
    for (auto& ch : r.channels)
        for (auto& v : ch) v = static_cast<std::uint8_t>(rng.below(7));
    const auto bytes = serialize_tile(r);
    CHECK(bytes.size() == 4 + 4 + 24 + 8 + 16 + 32 + 3 * 35);
    std::istringstream is(bytes);
    auto back = load_tile(is, &table());
    CHECK(back.raster == r);
    CHECK(back.warnings.empty());

    auto other = ClassTable::parse("area = a\nline = b\nnode = c\nrule = x=* -> area a\n");
    std::istringstream is2(bytes);
    auto warned = load_tile(is2, &other);
    CHECK_FALSE(warned.warnings.empty());

    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream is3(bad);
    CHECK_THROWS_AS(load_tile(is3), FormatError);
    std::istringstream is4(bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS(load_tile(is4), FormatError);
    std::string ver = bytes;
    ver[4] = 9;
    std::istringstream is5(ver);
    CHECK_THROWS_AS(load_tile(is5), FormatError);
}
