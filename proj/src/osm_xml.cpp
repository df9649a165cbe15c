#include <expat.h>

#include <charconv>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "planloc/error.hpp"
#include "planloc/osm.hpp"

namespace planloc::osm {

namespace {

enum class Open { None, Node, Way, Relation };

struct ParserState {
    XML_Parser parser = nullptr;
    Graph graph;
    int depth = 0;
    bool saw_root = false;
    Open open = Open::None;
    Node node;
    Way way;
    Relation relation;
    std::optional<std::string> error;
    std::size_t error_offset = 0;
    bool version_error = false;

    void fail(std::string what, bool version = false) {
        if (error) return;
        error = std::move(what);
        version_error = version;
        error_offset = static_cast<std::size_t>(XML_GetCurrentByteIndex(parser));
        XML_StopParser(parser, XML_FALSE);
    }
};

const char* attr(const XML_Char** atts, const char* name) {
    for (int i = 0; atts[i]; i += 2) {
        if (std::strcmp(atts[i], name) == 0) return atts[i + 1];
    }
    return nullptr;
}

template <typename T>
std::optional<T> parse_number(const char* s) {
    if (!s) return std::nullopt;
    T v{};
    const char* end = s + std::strlen(s);
    auto [ptr, ec] = std::from_chars(s, end, v);
    if (ec != std::errc{} || ptr != end) return std::nullopt;
    return v;
}

void on_start(void* user, const XML_Char* name, const XML_Char** atts) {
    auto& st = *static_cast<ParserState*>(user);
    ++st.depth;
    if (st.error) return;

    if (st.depth == 1) {
        if (std::strcmp(name, "osm") != 0) {
            st.fail(std::string("root element is <") + name + ">, expected <osm>");
            return;
        }
        st.saw_root = true;
        if (const char* v = attr(atts, "version"); v && kSupportedVersion != v) {
            st.fail(std::string("unsupported OSM version '") + v + "' (supported: " +
                        std::string(kSupportedVersion) + ")",
                    true);
        }
        return;
    }

    if (st.depth == 2) {
        auto id = parse_number<std::int64_t>(attr(atts, "id"));
        if (std::strcmp(name, "node") == 0) {
            auto lat = parse_number<double>(attr(atts, "lat"));
            auto lon = parse_number<double>(attr(atts, "lon"));
            if (!id || !lat || !lon) {
                st.fail("<node> requires numeric id, lat and lon");
                return;
            }
            if (!(*lat >= -90.0 && *lat <= 90.0 && *lon >= -180.0 && *lon <= 180.0)) {
                st.fail("node " + std::to_string(*id) + " has coordinates outside WGS84 bounds");
                return;
            }
            st.node = Node{*id, *lon, *lat, {}};
            st.open = Open::Node;
        } else if (std::strcmp(name, "way") == 0) {
            if (!id) {
                st.fail("<way> requires a numeric id");
                return;
            }
            st.way = Way{*id, {}, {}};
            st.open = Open::Way;
        } else if (std::strcmp(name, "relation") == 0) {
            if (!id) {
                st.fail("<relation> requires a numeric id");
                return;
            }
            st.relation = Relation{*id, {}, {}};
            st.open = Open::Relation;
        } else {
            st.open = Open::None;  // bounds, meta, note, ...
        }
        return;
    }

    if (st.depth == 3 && st.open != Open::None) {
        if (std::strcmp(name, "tag") == 0) {
            const char* k = attr(atts, "k");
            const char* v = attr(atts, "v");
            if (!k || !v) {
                st.fail("<tag> requires k and v");
                return;
            }
            Tags& tags = st.open == Open::Node  ? st.node.tags
                         : st.open == Open::Way ? st.way.tags
                                                : st.relation.tags;
            tags[k] = v;
        } else if (std::strcmp(name, "nd") == 0 && st.open == Open::Way) {
            auto ref = parse_number<std::int64_t>(attr(atts, "ref"));
            if (!ref) {
                st.fail("<nd> requires a numeric ref");
                return;
            }
            st.way.refs.push_back(*ref);
        } else if (std::strcmp(name, "member") == 0 && st.open == Open::Relation) {
            const char* type = attr(atts, "type");
            auto ref = parse_number<std::int64_t>(attr(atts, "ref"));
            const char* role = attr(atts, "role");
            if (!type || !ref) {
                st.fail("<member> requires type and numeric ref");
                return;
            }
            st.relation.members.push_back(Member{type, *ref, role ? role : ""});
        }
    }
}

void on_end(void* user, const XML_Char* name) {
    auto& st = *static_cast<ParserState*>(user);
    if (!st.error && st.depth == 2) {
        switch (st.open) {
            case Open::Node:
                if (!st.graph.nodes.emplace(st.node.id, std::move(st.node)).second)
                    st.fail("duplicate node id");
                break;
            case Open::Way:
                if (!st.graph.ways.emplace(st.way.id, std::move(st.way)).second)
                    st.fail("duplicate way id");
                break;
            case Open::Relation:
                if (!st.graph.relations.emplace(st.relation.id, std::move(st.relation)).second)
                    st.fail("duplicate relation id");
                break;
            case Open::None: break;
        }
        st.open = Open::None;
    }
    (void)name;
    --st.depth;
}

void collect_dangling(Graph& g) {
    for (const auto& [id, way] : g.ways) {
        std::set<std::int64_t> reported;
        for (auto ref : way.refs) {
            if (!g.nodes.count(ref) && reported.insert(ref).second) {
                g.dangling.push_back({"way", id, "node", ref});
            }
        }
    }
    for (const auto& [id, rel] : g.relations) {
        for (const auto& m : rel.members) {
            bool present = m.type == "node"       ? g.nodes.count(m.ref) > 0
                           : m.type == "way"      ? g.ways.count(m.ref) > 0
                           : m.type == "relation" ? g.relations.count(m.ref) > 0
                                                  : true;
            if (!present) g.dangling.push_back({"relation", id, m.type, m.ref});
        }
    }
}

std::string escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\n': out += "&#10;"; break;
            case '\t': out += "&#9;"; break;
            case '\r': out += "&#13;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void write_tags(std::ostringstream& os, const Tags& tags) {
    for (const auto& [k, v] : tags) {
        os << "    <tag k=\"" << escape(k) << "\" v=\"" << escape(v) << "\"/>\n";
    }
}

}  // namespace

Graph parse_xml(std::string_view document) {
    ParserState st;
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
        XML_ParserCreate(nullptr), &XML_ParserFree);
    if (!parser) throw Error("cannot allocate XML parser");
    st.parser = parser.get();
    XML_SetUserData(st.parser, &st);
    XML_SetElementHandler(st.parser, on_start, on_end);

    auto status = XML_Parse(st.parser, document.data(), static_cast<int>(document.size()), XML_TRUE);
    if (st.error) {
        if (st.version_error) throw VersionError(*st.error);
        throw ParseError(*st.error, st.error_offset);
    }
    if (status != XML_STATUS_OK) {
        throw ParseError(std::string("malformed XML: ") + XML_ErrorString(XML_GetErrorCode(st.parser)),
                         static_cast<std::size_t>(XML_GetCurrentByteIndex(st.parser)));
    }
    if (!st.saw_root) throw ParseError("document has no <osm> element", 0);
    collect_dangling(st.graph);
    return std::move(st.graph);
}

Graph parse_xml_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open OSM file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_xml(ss.str());
}

std::string write_xml(const Graph& g) {
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"planloc\">\n";
    for (const auto& [id, n] : g.nodes) {
        os << "  <node id=\"" << id << "\" lat=\"" << shortest(n.lat) << "\" lon=\"" << shortest(n.lon)
           << "\"";
        if (n.tags.empty()) {
            os << "/>\n";
        } else {
            os << ">\n";
            write_tags(os, n.tags);
            os << "  </node>\n";
        }
    }
    for (const auto& [id, w] : g.ways) {
        os << "  <way id=\"" << id << "\">\n";
        for (auto r : w.refs) os << "    <nd ref=\"" << r << "\"/>\n";
        write_tags(os, w.tags);
        os << "  </way>\n";
    }
    for (const auto& [id, r] : g.relations) {
        os << "  <relation id=\"" << id << "\">\n";
        for (const auto& m : r.members) {
            os << "    <member type=\"" << escape(m.type) << "\" ref=\"" << m.ref << "\" role=\""
               << escape(m.role) << "\"/>\n";
        }
        write_tags(os, r.tags);
        os << "  </relation>\n";
    }
    os << "</osm>\n";
    return os.str();
}

}  // namespace planloc::osm
