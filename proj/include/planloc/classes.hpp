#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "planloc/digest.hpp"

namespace planloc {

// Raster channel order: areas, lines, nodes.
enum class GeometryKind : std::uint8_t { Area = 0, Line = 1, Node = 2 };

inline constexpr int kChannelCount = 3;

std::string_view to_string(GeometryKind kind);
std::optional<GeometryKind> parse_geometry_kind(std::string_view s);

using Tags = std::map<std::string, std::string>;

struct TagRule {
    std::string key;
    std::vector<std::string> values;  // empty: any value
    GeometryKind kind = GeometryKind::Area;
    std::string class_name;
    int class_index = 0;

    bool matches(const Tags& tags) const;
};

struct Classification {
    GeometryKind kind;
    int class_index;
    friend bool operator==(const Classification&, const Classification&) = default;
};

// Ordered class lists per geometry kind plus ordered tag rules. Class names
// map to raster indices starting at 1; index 0 is void in every channel.
class ClassTable {
public:
    // Throws ConfigError on malformed lines, duplicate names or rules naming
    // unknown classes.
    static ClassTable parse(std::string_view text);
    static ClassTable load(const std::filesystem::path& path);
    // The bundled 7 area / 10 line / 33 node taxonomy.
    static const ClassTable& builtin();

    const std::vector<std::string>& names(GeometryKind kind) const;
    // Number of raster indices in the channel, void included.
    int index_count(GeometryKind kind) const;
    std::optional<int> index_of(GeometryKind kind, std::string_view name) const;
    const std::vector<TagRule>& rules() const { return rules_; }

    // Canonical text form; parse(serialize()) reproduces the table.
    std::string serialize() const;
    const Sha256& hash() const { return hash_; }

private:
    std::array<std::vector<std::string>, kChannelCount> names_;
    std::vector<TagRule> rules_;
    Sha256 hash_{};
};

// First rule (in table order) whose key/value pattern matches. When `only`
// is set, rules of other geometry kinds are skipped.
std::optional<Classification> classify(const Tags& tags, const ClassTable& table,
                                       std::optional<GeometryKind> only = std::nullopt);

}  // namespace planloc
