#pragma once

// OpenStreetMap ingestion: XML parsing, Overpass download with an on-disk
// cache, and conversion of tagged elements into local-frame geometries.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "planloc/classes.hpp"
#include "planloc/geometry.hpp"

namespace planloc::osm {

struct Node {
    std::int64_t id = 0;
    double lon = 0.0;
    double lat = 0.0;
    Tags tags;
};

struct Way {
    std::int64_t id = 0;
    std::vector<std::int64_t> refs;
    Tags tags;

    bool is_closed() const { return refs.size() >= 4 && refs.front() == refs.back(); }
};

struct Member {
    std::string type;  // node | way | relation
    std::int64_t ref = 0;
    std::string role;
    friend bool operator==(const Member&, const Member&) = default;
};

struct Relation {
    std::int64_t id = 0;
    std::vector<Member> members;
    Tags tags;
};

struct DanglingRef {
    std::string from_type;  // way | relation
    std::int64_t from_id = 0;
    std::string to_type;
    std::int64_t missing_id = 0;
};

struct Graph {
    std::map<std::int64_t, Node> nodes;
    std::map<std::int64_t, Way> ways;
    std::map<std::int64_t, Relation> relations;
    // References to elements absent from the document.
    std::vector<DanglingRef> dangling;
};

inline constexpr std::string_view kSupportedVersion = "0.6";

// Parses an OSM XML document. Throws ParseError (with byte offset) on
// malformed XML or out-of-range coordinates, VersionError when the <osm>
// version attribute is present and not 0.6.
Graph parse_xml(std::string_view document);
Graph parse_xml_file(const std::filesystem::path& path);

// Serializes back to OSM XML; parse_xml(write_xml(g)) preserves every entity
// and tag.
std::string write_xml(const Graph& graph);

struct BBox {
    double west = 0.0;
    double south = 0.0;
    double east = 0.0;
    double north = 0.0;

    Vec2 center() const { return {0.5 * (west + east), 0.5 * (south + north)}; }
};

// Parses "west,south,east,north".
BBox parse_bbox(std::string_view text);

// Overpass QL returning every node, way and relation in the box together
// with the nodes referenced by those ways.
std::string overpass_query(const BBox& bbox, int timeout_s);

// PLANLOC_OVERPASS_URL when set, else the public endpoint.
std::string default_overpass_endpoint();

struct FetchOptions {
    std::string endpoint = default_overpass_endpoint();
    double timeout_s = 60.0;
    std::filesystem::path cache_dir = ".planloc-cache";
    int max_attempts = 3;
    double backoff_base_s = 1.0;
    double backoff_factor = 2.0;
    // Injected for tests; defaults to std::this_thread::sleep_for.
    std::function<void(double seconds)> sleep;
};

struct FetchResult {
    std::string data;
    bool from_cache = false;
    int network_calls = 0;
    std::filesystem::path cache_file;
};

// Downloads the raw OSM XML for `bbox`, retrying transient failures with
// exponential backoff. Responses are cached under cache_dir keyed by the
// bbox digest; a cache hit performs no network call.
// Throws DomainError for a degenerate bbox, ThrottledError when every
// attempt was rate limited (HTTP 429), TransportError otherwise.
FetchResult fetch_overpass(const BBox& bbox, const FetchOptions& options);

std::filesystem::path cache_path(const BBox& bbox, const std::filesystem::path& cache_dir);

struct Polygon {
    int class_index = 0;
    std::vector<Vec2> ring;  // closed: front() == back()
};

struct Polyline {
    int class_index = 0;
    std::vector<Vec2> points;
};

struct PointFeature {
    int class_index = 0;
    Vec2 position;
};

struct Skipped {
    std::string type;
    std::int64_t id = 0;
    std::string reason;
};

}  // namespace planloc::osm

namespace planloc {

struct MapGeometries {
    std::vector<osm::Polygon> polygons;
    std::vector<osm::Polyline> polylines;
    std::vector<osm::PointFeature> points;
    std::vector<osm::Skipped> skipped;
};

namespace osm {

// Closed ways with area classes become polygons (buildings also emit a
// building_outline polyline), ways with line classes become polylines,
// tagged nodes become points, single-outer multipolygon relations become
// polygons. Everything else that carries a class is listed in `skipped`.
MapGeometries build_geometries(const Graph& graph, const Datum& datum, const ClassTable& table);

}  // namespace osm
}  // namespace planloc
