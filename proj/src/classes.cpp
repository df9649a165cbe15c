#include "planloc/classes.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "planloc/error.hpp"

namespace planloc {

namespace {

#include "default_classes.inc"

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::string_view to_string(GeometryKind kind) {
    switch (kind) {
        case GeometryKind::Area: return "area";
        case GeometryKind::Line: return "line";
        case GeometryKind::Node: return "node";
    }
    return "?";
}

std::optional<GeometryKind> parse_geometry_kind(std::string_view s) {
    if (s == "area") return GeometryKind::Area;
    if (s == "line") return GeometryKind::Line;
    if (s == "node") return GeometryKind::Node;
    return std::nullopt;
}

bool TagRule::matches(const Tags& tags) const {
    auto it = tags.find(key);
    if (it == tags.end()) return false;
    if (values.empty()) return true;
    return std::find(values.begin(), values.end(), it->second) != values.end();
}

ClassTable ClassTable::parse(std::string_view text) {
    ClassTable table;
    std::array<bool, kChannelCount> seen{};
    struct PendingRule {
        TagRule rule;
        int line;
    };
    std::vector<PendingRule> pending;

    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        std::string_view raw =
            text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        start = end == std::string_view::npos ? text.size() + 1 : end + 1;
        ++line_no;

        auto hash = raw.find('#');
        std::string_view line = trim(raw.substr(0, hash));
        if (line.empty()) continue;

        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("class table line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        std::string_view key = trim(line.substr(0, eq));
        std::string_view value = trim(line.substr(eq + 1));
        auto where = [&] { return "class table line " + std::to_string(line_no) + ": "; };

        if (auto kind = parse_geometry_kind(key)) {
            auto k = static_cast<int>(*kind);
            if (seen[k]) throw ConfigError(where() + "duplicate '" + std::string(key) + "' list");
            seen[k] = true;
            std::set<std::string> unique;
            for (auto& name : split(value, ',')) {
                if (name.empty()) throw ConfigError(where() + "empty class name");
                if (!unique.insert(name).second) {
                    throw ConfigError(where() + "duplicate class name '" + name + "'");
                }
                table.names_[k].push_back(name);
            }
            if (table.names_[k].size() > 255) throw ConfigError(where() + "more than 255 classes");
        } else if (key == "rule") {
            auto arrow = value.find("->");
            if (arrow == std::string_view::npos) throw ConfigError(where() + "rule lacks '->'");
            std::string_view lhs = trim(value.substr(0, arrow));
            std::string_view rhs = trim(value.substr(arrow + 2));
            auto lhs_eq = lhs.find('=');
            if (lhs_eq == std::string_view::npos) throw ConfigError(where() + "rule lacks 'key=values'");
            TagRule rule;
            rule.key = std::string(trim(lhs.substr(0, lhs_eq)));
            std::string_view vals = trim(lhs.substr(lhs_eq + 1));
            if (rule.key.empty() || vals.empty()) throw ConfigError(where() + "empty rule key or value");
            if (vals != "*") rule.values = split(vals, '|');
            auto sp = rhs.find_first_of(" \t");
            if (sp == std::string_view::npos) throw ConfigError(where() + "rule target must be '<kind> <name>'");
            auto kind2 = parse_geometry_kind(trim(rhs.substr(0, sp)));
            if (!kind2) throw ConfigError(where() + "unknown geometry kind in rule");
            rule.kind = *kind2;
            rule.class_name = std::string(trim(rhs.substr(sp)));
            pending.push_back({std::move(rule), line_no});
        } else {
            throw ConfigError(where() + "unknown key '" + std::string(key) + "'");
        }
    }

    for (auto& p : pending) {
        auto idx = table.index_of(p.rule.kind, p.rule.class_name);
        if (!idx) {
            throw ConfigError("class table line " + std::to_string(p.line) + ": rule targets unknown " +
                              std::string(to_string(p.rule.kind)) + " class '" + p.rule.class_name + "'");
        }
        p.rule.class_index = *idx;
        table.rules_.push_back(std::move(p.rule));
    }
    table.hash_ = sha256(table.serialize());
    return table;
}

ClassTable ClassTable::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open class table '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const ClassTable& ClassTable::builtin() {
    static const ClassTable table = parse(kDefaultClassTable);
    return table;
}

const std::vector<std::string>& ClassTable::names(GeometryKind kind) const {
    return names_[static_cast<int>(kind)];
}

int ClassTable::index_count(GeometryKind kind) const {
    return static_cast<int>(names(kind).size()) + 1;
}

std::optional<int> ClassTable::index_of(GeometryKind kind, std::string_view name) const {
    const auto& v = names(kind);
    auto it = std::find(v.begin(), v.end(), name);
    if (it == v.end()) return std::nullopt;
    return static_cast<int>(it - v.begin()) + 1;
}

std::string ClassTable::serialize() const {
    std::ostringstream os;
    for (int k = 0; k < kChannelCount; ++k) {
        os << to_string(static_cast<GeometryKind>(k)) << " = ";
        for (std::size_t i = 0; i < names_[k].size(); ++i) os << (i ? ", " : "") << names_[k][i];
        os << '\n';
    }
    for (const auto& r : rules_) {
        os << "rule = " << r.key << '=';
        if (r.values.empty()) {
            os << '*';
        } else {
            for (std::size_t i = 0; i < r.values.size(); ++i) os << (i ? "|" : "") << r.values[i];
        }
        os << " -> " << to_string(r.kind) << ' ' << r.class_name << '\n';
    }
    return os.str();
}

std::optional<Classification> classify(const Tags& tags, const ClassTable& table,
                                       std::optional<GeometryKind> only) {
    for (const auto& rule : table.rules()) {
        if (only && rule.kind != *only) continue;
        if (rule.matches(tags)) return Classification{rule.kind, rule.class_index};
    }
    return std::nullopt;
}

}  // namespace planloc
