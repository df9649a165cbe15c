#include <optional>

#include "planloc/error.hpp"
#include "planloc/osm.hpp"

namespace planloc::osm {

namespace {

// First area or line rule matching a way's tags.
std::optional<Classification> classify_way(const Tags& tags, const ClassTable& table) {
    for (const auto& rule : table.rules()) {
        if (rule.kind == GeometryKind::Node) continue;
        if (rule.matches(tags)) return Classification{rule.kind, rule.class_index};
    }
    return std::nullopt;
}

std::optional<std::vector<Vec2>> resolve(const Graph& g, const std::vector<std::int64_t>& refs,
                                         const Datum& datum) {
    std::vector<Vec2> pts;
    pts.reserve(refs.size());
    for (auto ref : refs) {
        auto it = g.nodes.find(ref);
        if (it == g.nodes.end()) return std::nullopt;
        pts.push_back(wgs84_to_local(datum, it->second.lon, it->second.lat));
    }
    return pts;
}

}  // namespace

MapGeometries build_geometries(const Graph& g, const Datum& datum, const ClassTable& table) {
    MapGeometries out;
    const auto building = table.index_of(GeometryKind::Area, "building");
    const auto outline = table.index_of(GeometryKind::Line, "building_outline");

    auto emit_area = [&](int cls, std::vector<Vec2> ring) {
        if (building && outline && cls == *building) out.polylines.push_back({*outline, ring});
        out.polygons.push_back({cls, std::move(ring)});
    };

    for (const auto& [id, way] : g.ways) {
        auto cls = classify_way(way.tags, table);
        if (!cls) continue;
        auto pts = resolve(g, way.refs, datum);
        if (!pts) {
            out.skipped.push_back({"way", id, "references a missing node"});
            continue;
        }
        if (cls->kind == GeometryKind::Area) {
            if (!way.is_closed()) {
                out.skipped.push_back({"way", id, "area class on an unclosed way"});
                continue;
            }
            emit_area(cls->class_index, std::move(*pts));
        } else {
            if (pts->size() < 2) {
                out.skipped.push_back({"way", id, "line with fewer than 2 nodes"});
                continue;
            }
            out.polylines.push_back({cls->class_index, std::move(*pts)});
        }
    }

    for (const auto& [id, rel] : g.relations) {
        auto type = rel.tags.find("type");
        if (type == rel.tags.end() || type->second != "multipolygon") continue;
        auto cls = classify(rel.tags, table, GeometryKind::Area);
        if (!cls) continue;
        const Way* outer = nullptr;
        int outers = 0;
        int inners = 0;
        for (const auto& m : rel.members) {
            if (m.type != "way") continue;
            if (m.role == "inner") {
                ++inners;
            } else {
                ++outers;
                auto it = g.ways.find(m.ref);
                outer = it == g.ways.end() ? nullptr : &it->second;
            }
        }
        if (outers != 1 || inners != 0) {
            out.skipped.push_back({"relation", id, "multipolygon is not a single outer ring"});
            continue;
        }
        if (!outer || !outer->is_closed()) {
            out.skipped.push_back({"relation", id, "outer ring missing or unclosed"});
            continue;
        }
        auto pts = resolve(g, outer->refs, datum);
        if (!pts) {
            out.skipped.push_back({"relation", id, "outer ring references a missing node"});
            continue;
        }
        emit_area(cls->class_index, std::move(*pts));
    }

    for (const auto& [id, node] : g.nodes) {
        if (node.tags.empty()) continue;
        auto cls = classify(node.tags, table, GeometryKind::Node);
        if (!cls) continue;
        out.points.push_back({cls->class_index, wgs84_to_local(datum, node.lon, node.lat)});
    }
    return out;
}

}  // namespace planloc::osm
