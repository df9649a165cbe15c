#include "planloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "planloc/error.hpp"

namespace planloc {

namespace {

std::string trim(std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

int class_index(const ClassTable& table, GeometryKind kind, const char* name) {
    auto idx = table.index_of(kind, name);
    if (!idx) throw ConfigError(std::string("class table lacks '") + name + "'");
    return *idx;
}

std::vector<Vec2> rect(double x0, double y0, double x1, double y1) {
    return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
}

struct Box {
    double x0, y0, x1, y1;
    bool contains(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
};

}  // namespace

GridSpec WorldSpec::grid() const {
    const int n = static_cast<int>(std::lround(extent_m / delta));
    return GridSpec::centered(delta, n, n);
}

WorldSpec parse_world_spec(const std::string& text) {
    WorldSpec s;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("world spec line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(val, &used);
            if (used != val.size()) throw std::invalid_argument(val);
        } catch (const std::exception&) {
            throw ConfigError("world spec line " + std::to_string(lineno) + ": '" + val + "' is not a number");
        }
        if (key == "extent_m") s.extent_m = v;
        else if (key == "delta") s.delta = v;
        else if (key == "block_m") s.block_m = v;
        else if (key == "road_margin_m") s.road_margin_m = v;
        else if (key == "building_density") s.building_density = v;
        else if (key == "green_density") s.green_density = v;
        else if (key == "tree_density") s.tree_density = v;
        else if (key == "point_density") s.point_density = v;
        else throw ConfigError("world spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!(s.extent_m > 0.0) || !(s.delta > 0.0) || !(s.block_m > 0.0)) {
        throw ConfigError("world spec needs positive extent_m, delta and block_m");
    }
    for (double p : {s.building_density, s.green_density}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("world spec densities of lots must lie in [0, 1]");
    }
    if (!(s.tree_density >= 0.0) || !(s.point_density >= 0.0) || !(s.road_margin_m >= 0.0)) {
        throw ConfigError("world spec densities must be >= 0");
    }
    return s;
}

WorldSpec load_world_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_world_spec(ss.str());
}

World gen_world(std::uint64_t seed, const WorldSpec& spec, const ClassTable& table) {
    Rng rng(seed);
    const int road = class_index(table, GeometryKind::Line, "road");
    const int building = class_index(table, GeometryKind::Area, "building");
    const int outline = class_index(table, GeometryKind::Line, "building_outline");
    const int grass = class_index(table, GeometryKind::Area, "grass");
    const int parking = class_index(table, GeometryKind::Area, "parking");
    const int tree = class_index(table, GeometryKind::Node, "tree");
    const int furniture[] = {class_index(table, GeometryKind::Node, "street_lamp"),
                             class_index(table, GeometryKind::Node, "bench"),
                             class_index(table, GeometryKind::Node, "bollard"),
                             class_index(table, GeometryKind::Node, "fire_hydrant")};

    World w;
    auto& g = w.geometries;
    const double half = spec.extent_m / 2.0;
    const double lo = -half - spec.delta;
    const double hi = half + spec.delta;

    auto grid_lines = [&](double phase) {
        std::vector<double> v;
        for (double p = -half + phase; p < half; p += spec.block_m) v.push_back(p);
        return v;
    };
    const auto xs = grid_lines(rng.uniform(0.0, spec.block_m));
    const auto ys = grid_lines(rng.uniform(0.0, spec.block_m));
    for (double x : xs) g.polylines.push_back({road, {{x, lo}, {x, hi}}});
    for (double y : ys) g.polylines.push_back({road, {{lo, y}, {hi, y}}});

    auto bounds = [&](const std::vector<double>& lines) {
        std::vector<double> b{-half};
        b.insert(b.end(), lines.begin(), lines.end());
        b.push_back(half);
        return b;
    };
    const auto bx = bounds(xs);
    const auto by = bounds(ys);
    std::vector<Box> buildings;
    const double m = spec.road_margin_m;
    for (std::size_t a = 0; a + 1 < by.size(); ++a) {
        for (std::size_t b = 0; b + 1 < bx.size(); ++b) {
            const double x0 = bx[b] + m, x1 = bx[b + 1] - m;
            const double y0 = by[a] + m, y1 = by[a + 1] - m;
            if (x1 - x0 < 4.0 || y1 - y0 < 4.0) continue;
            // Split the block into up to 2 x 2 lots.
            const int nx = x1 - x0 >= 16.0 ? 2 : 1;
            const int ny = y1 - y0 >= 16.0 ? 2 : 1;
            for (int p = 0; p < ny; ++p) {
                for (int q = 0; q < nx; ++q) {
                    const double lx0 = x0 + (x1 - x0) * q / nx, lx1 = x0 + (x1 - x0) * (q + 1) / nx;
                    const double ly0 = y0 + (y1 - y0) * p / ny, ly1 = y0 + (y1 - y0) * (p + 1) / ny;
                    if (rng.bernoulli(spec.building_density)) {
                        const double w0 = rng.uniform(0.5, 0.9) * (lx1 - lx0);
                        const double h0 = rng.uniform(0.5, 0.9) * (ly1 - ly0);
                        const double cx = rng.uniform(lx0, lx1 - w0);
                        const double cy = rng.uniform(ly0, ly1 - h0);
                        auto ring = rect(cx, cy, cx + w0, cy + h0);
                        g.polygons.push_back({building, ring});
                        g.polylines.push_back({outline, ring});
                        buildings.push_back({cx, cy, cx + w0, cy + h0});
                    } else if (rng.bernoulli(spec.green_density)) {
                        const int cls = rng.bernoulli(0.5) ? grass : parking;
                        g.polygons.push_back({cls, rect(lx0, ly0, lx1, ly1)});
                    }
                }
            }
        }
    }

    const double area = spec.extent_m * spec.extent_m;
    const auto trees = static_cast<std::size_t>(std::llround(spec.tree_density * area));
    for (std::size_t t = 0; t < trees; ++t) {
        Vec2 p{rng.uniform(-half, half), rng.uniform(-half, half)};
        if (std::any_of(buildings.begin(), buildings.end(), [&](const Box& b) { return b.contains(p); })) continue;
        g.points.push_back({tree, p});
    }
    const auto items = static_cast<std::size_t>(std::llround(spec.point_density * area));
    for (std::size_t t = 0; t < items && !(xs.empty() && ys.empty()); ++t) {
        const int cls = furniture[rng.below(4)];
        const double side = rng.bernoulli(0.5) ? 2.5 : -2.5;
        const double along = rng.uniform(-half, half);
        const std::size_t pick = rng.below(xs.size() + ys.size());
        Vec2 p = pick < xs.size() ? Vec2{xs[pick] + side, along} : Vec2{along, ys[pick - xs.size()] + side};
        g.points.push_back({cls, p});
    }

    w.raster = rasterize(g, spec.grid(), table);
    return w;
}

BevGrid render_observation(const NeuralMap& map, const Pose2& gt, const BevSpec& bs, const ObservationNoise& noise,
                           std::uint64_t seed) {
    if (!(noise.sigma >= 0.0) || !(noise.dropout >= 0.0 && noise.dropout <= 1.0)) {
        throw DomainError("observation noise needs sigma >= 0 and dropout in [0, 1]");
    }
    if (!(bs.half_angle > 0.0 && bs.half_angle < 3.14159265358979323846 / 2.0)) {
        throw DomainError("frustum half-angle must lie in (0, pi/2)");
    }
    const auto& spec = map.spec;
    const int W = spec.width();
    const int H = spec.height();
    const int N = map.channels();
    const Vec2 gi = spec.continuous_index(gt.translation());
    if (!(gi.x >= -0.5 && gi.x <= W - 0.5 && gi.y >= -0.5 && gi.y <= H - 0.5)) {
        throw DomainError("ground-truth pose lies outside the map");
    }
    BevGrid bev(bs.L, bs.D, N, bs.delta);
    const double sd = noise.sigma > 0.0 ? noise.sigma * feature_std(map.features) : 0.0;
    const double slope = std::tan(bs.half_angle);
    Rng rng(seed);
    std::vector<double> sample(N);
    for (int r = 0; r < bs.D; ++r) {
        for (int l = 0; l < bs.L; ++l) {
            const BevPoint p{bev.lateral(l), bev.forward(r)};
            if (std::abs(p.lateral) > p.forward * slope + 1e-9) continue;
            const Vec2 ci = spec.continuous_index(transform_point(gt, p));
            if (!(ci.x >= 0.0 && ci.x <= W - 1 && ci.y >= 0.0 && ci.y <= H - 1)) continue;
            if (noise.dropout > 0.0 && rng.bernoulli(noise.dropout)) continue;
            const int x0 = std::min(static_cast<int>(std::floor(ci.x)), W - 1);
            const int y0 = std::min(static_cast<int>(std::floor(ci.y)), H - 1);
            const int x1 = std::min(x0 + 1, W - 1);
            const int y1 = std::min(y0 + 1, H - 1);
            const double a = ci.x - x0;
            const double b = ci.y - y0;
            const float* f00 = map.features.cell(y0, x0);
            const float* f01 = map.features.cell(y0, x1);
            const float* f10 = map.features.cell(y1, x0);
            const float* f11 = map.features.cell(y1, x1);
            float* dst = bev.cell(r, l);
            for (int n = 0; n < N; ++n) {
                double v = (1.0 - a) * (1.0 - b) * f00[n] + a * (1.0 - b) * f01[n] + (1.0 - a) * b * f10[n] +
                           a * b * f11[n];
                if (sd > 0.0) v += sd * rng.normal();
                dst[n] = static_cast<float>(v);
            }
            bev.conf(r, l) = 1.0f;
        }
    }
    return bev;
}

OracleResult oracle_localize(const NeuralMap& map, const BevGrid& bev, int K) {
    if (K < 1) throw DomainError("need K >= 1 rotations");
    if (bev.N != map.channels()) throw DomainError("map and BEV channel counts differ");
    if (std::abs(bev.delta - map.spec.delta()) > 1e-9 * map.spec.delta()) {
        throw ConfigError("BEV pitch differs from the map pitch");
    }
    const int W = map.spec.width();
    const int H = map.spec.height();
    const int N = bev.N;
    const int L = bev.L;
    const int D = bev.D;
    const int half = L / 2;
    int Z = 0;
    for (int r = 0; r < D; ++r) {
        for (int l = 0; l < L; ++l) Z += bev.conf(r, l) > 0.0f;
    }
    OracleResult res{Pose2(), PoseVolume(map.spec, K, VolumeKind::LogScore)};
    if (Z == 0) {
        res.pose = res.scores.pose(0, 0, 0);
        return res;
    }
    // Every map offset the template can touch lies within this radius.
    const int reach = static_cast<int>(std::ceil(std::hypot(double(std::max(half + 1, L - half)), double(D + 1)))) + 1;
    std::vector<double> w(N);
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
        const double th = rotation_angle(k, K);
        const double c = std::cos(th);
        const double s = std::sin(th);
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                double acc = 0.0;
                for (int mi = std::max(0, i - reach); mi <= std::min(H - 1, i + reach); ++mi) {
                    for (int mj = std::max(0, j - reach); mj <= std::min(W - 1, j + reach); ++mj) {
                        const double qx = mj - j;
                        const double qy = mi - i;
                        const double colf = (qx * s - qy * c) + half;
                        const double rowf = (qx * c + qy * s) - 1.0;
                        std::fill(w.begin(), w.end(), 0.0);
                        const double cf = std::floor(colf);
                        const double rf = std::floor(rowf);
                        const double a = colf - cf;
                        const double b = rowf - rf;
                        const double wts[2][2] = {{(1.0 - a) * (1.0 - b), a * (1.0 - b)}, {(1.0 - a) * b, a * b}};
                        for (int dr = 0; dr < 2; ++dr) {
                            for (int dc = 0; dc < 2; ++dc) {
                                const double rr = rf + dr;
                                const double cc = cf + dc;
                                if (rr < 0.0 || rr >= D || cc < 0.0 || cc >= L) continue;
                                const double conf = bev.conf(int(rr), int(cc));
                                const float* t = bev.cell(int(rr), int(cc));
                                for (int n = 0; n < N; ++n) w[n] += wts[dr][dc] * (double(t[n]) * conf);
                            }
                        }
                        const float* f = map.features.cell(mi, mj);
                        for (int n = 0; n < N; ++n) acc += double(f[n]) * w[n];
                    }
                }
                const double v = acc / Z;
                res.scores.at(k, i, j) = v;
            }
        }
    }
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            for (int k = 0; k < K; ++k) {
                if (res.scores.at(k, i, j) > best) {
                    best = res.scores.at(k, i, j);
                    res.pose = res.scores.pose(i, j, k);
                }
            }
        }
    }
    return res;
}

Pose2 random_grid_pose(const NeuralMap& map, int K, double margin_m, Rng& rng) {
    const auto& spec = map.spec;
    const int m = static_cast<int>(std::ceil(margin_m / spec.delta()));
    const int W = spec.width();
    const int H = spec.height();
    if (2 * m >= W || 2 * m >= H) throw DomainError("margin leaves no room for poses");
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const int row = m + static_cast<int>(rng.below(H - 2 * m));
        const int col = m + static_cast<int>(rng.below(W - 2 * m));
        const int k = static_cast<int>(rng.below(K));
        if (!map.omega.empty() && map.omega[std::size_t(row) * W + col] != 0.0f) continue;
        const Vec2 c = spec.cell_center(row, col);
        return {c.x, c.y, rotation_angle(k, K)};
    }
    throw DegenerateError("no free cell for a random pose");
}

}  // namespace planloc
