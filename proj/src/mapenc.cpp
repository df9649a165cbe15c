#include "planloc/mapenc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "planloc/binio.hpp"
#include "planloc/error.hpp"
#include "planloc/rng.hpp"

namespace planloc {

Embeddings Embeddings::random(const ClassTable& table, int dim, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
    Embeddings e;
    e.dim = dim;
    Rng rng(seed);
    for (int k = 0; k < kChannelCount; ++k) {
        int count = table.index_count(static_cast<GeometryKind>(k));
        e.tables[k].assign(count, std::vector<float>(dim, 0.0f));
        for (int c = 1; c < count; ++c) {
            for (auto& v : e.tables[k][c]) v = static_cast<float>(rng.normal());
        }
    }
    return e;
}

FeatureGrid embed_classes(const MapRaster& raster, const Embeddings& emb) {
    const int W = raster.spec.width();
    const int H = raster.spec.height();
    const int N = emb.dim;
    for (int k = 0; k < kChannelCount; ++k) {
        const auto& tab = emb.tables[k];
        for (const auto& row : tab) {
            if (int(row.size()) != N) throw ConfigError("embedding rows must all have dimension N");
        }
        if (!tab.empty() && std::any_of(tab[0].begin(), tab[0].end(), [](float v) { return v != 0.0f; })) {
            throw ConfigError("void embedding (index 0) must be the zero vector");
        }
    }
    FeatureGrid out(W, H, kChannelCount * N);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            float* dst = out.cell(i, j);
            for (int k = 0; k < kChannelCount; ++k) {
                auto idx = raster.at(static_cast<GeometryKind>(k), i, j);
                if (idx >= emb.tables[k].size()) {
                    throw ConfigError("no embedding for " + std::string(to_string(static_cast<GeometryKind>(k))) +
                                      " class index " + std::to_string(idx));
                }
                std::copy_n(emb.tables[k][idx].begin(), N, dst + k * N);
            }
        }
    }
    return out;
}

namespace {

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas).
void dt1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == inf) continue;
        if (k < 0) {
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            k = 0;
            continue;
        }
        double s;
        while (true) {
            int p = v[k];
            s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (s <= z[k]) {
            // k == 0 and the new parabola dominates everywhere.
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    if (k < 0) {
        std::fill(d, d + n, inf);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        double dq = q - v[j];
        d[q] = dq * dq + f[v[j]];
    }
}

}  // namespace

std::vector<double> distance_transform(const std::vector<std::uint8_t>& mask, int W, int H) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> grid(std::size_t(W) * H);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = mask[i] ? 0.0 : inf;

    const int n = std::max(W, H);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    for (int j = 0; j < W; ++j) {
        for (int i = 0; i < H; ++i) f[i] = grid[std::size_t(i) * W + j];
        dt1d(f.data(), d.data(), H, v, z);
        for (int i = 0; i < H; ++i) grid[std::size_t(i) * W + j] = d[i];
    }
    for (int i = 0; i < H; ++i) {
        double* row = grid.data() + std::size_t(i) * W;
        std::copy_n(row, W, f.begin());
        dt1d(f.data(), d.data(), W, v, z);
        std::copy_n(d.begin(), W, row);
    }
    for (auto& g : grid) g = std::sqrt(g);
    return grid;
}

AnalyticEncoder::AnalyticEncoder(const ClassTable& table, AnalyticParams params) : params_(params) {
    if (!(params_.radius_m > 0.0)) throw ConfigError("analytic encoder radius must be > 0");
    if (params_.channels < 1) throw ConfigError("analytic encoder needs at least one channel");
    int offset = 0;
    for (int k = 0; k < kChannelCount; ++k) {
        channel_offset_[k] = offset;
        offset += static_cast<int>(table.names(static_cast<GeometryKind>(k)).size());
    }
    total_classes_ = offset;
    for (const char* name : {"building", "water"}) {
        if (auto idx = table.index_of(GeometryKind::Area, name)) blocked_area_classes_.push_back(*idx);
    }

    const int N = params_.channels;
    const int C = total_classes_;
    projection_.assign(std::size_t(N) * C, 0.0);
    if (params_.identity_projection) {
        if (N != C) throw ConfigError("identity projection requires channels == total class count");
        for (int i = 0; i < N; ++i) projection_[std::size_t(i) * C + i] = 1.0;
        return;
    }
    // Gram-Schmidt on Gaussian vectors: orthonormal rows when N <= C,
    // orthonormal columns otherwise.
    Rng rng(params_.projection_seed);
    const bool rows = N <= C;
    const int count = rows ? N : C;
    const int len = rows ? C : N;
    std::vector<std::vector<double>> basis;
    while (static_cast<int>(basis.size()) < count) {
        std::vector<double> v(len);
        for (auto& x : v) x = rng.normal();
        for (const auto& b : basis) {
            double p = 0.0;
            for (int t = 0; t < len; ++t) p += v[t] * b[t];
            for (int t = 0; t < len; ++t) v[t] -= p * b[t];
        }
        double nrm = 0.0;
        for (auto x : v) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm < 1e-6) continue;
        for (auto& x : v) x /= nrm;
        basis.push_back(std::move(v));
    }
    for (int a = 0; a < count; ++a) {
        for (int t = 0; t < len; ++t) {
            if (rows) {
                projection_[std::size_t(a) * C + t] = basis[a][t];
            } else {
                projection_[std::size_t(t) * C + a] = basis[a][t];
            }
        }
    }
}

NeuralMap AnalyticEncoder::encode(const FeatureGrid& /*embedded*/, const MapRaster& raster) const {
    const int W = raster.spec.width();
    const int H = raster.spec.height();
    const int N = params_.channels;
    const int C = total_classes_;
    const std::size_t cells = std::size_t(W) * H;
    const double radius_cells = params_.radius_m / raster.spec.delta();

    NeuralMap out;
    out.spec = raster.spec;
    out.features = FeatureGrid(W, H, N);
    out.omega.assign(cells, 0.0f);

    std::vector<double> acc(cells * N, 0.0);
    std::vector<std::uint8_t> mask(cells);
    for (int k = 0; k < kChannelCount; ++k) {
        const auto& plane = raster.channels[k];
        std::array<bool, 256> present{};
        for (auto v : plane) present[v] = true;
        for (int cls = 1; cls < 256; ++cls) {
            if (!present[cls]) continue;
            const int column = channel_offset_[k] + cls - 1;
            if (column >= C) throw ConfigError("raster class index beyond the encoder's class table");
            for (std::size_t c = 0; c < cells; ++c) mask[c] = plane[c] == cls;
            auto dist = distance_transform(mask, W, H);
            for (std::size_t c = 0; c < cells; ++c) {
                double value = 1.0 - dist[c] / radius_cells;
                if (!(value > 0.0)) continue;
                double* dst = acc.data() + c * N;
                for (int n = 0; n < N; ++n) dst[n] += projection_[std::size_t(n) * C + column] * value;
            }
        }
    }
    auto& data = out.features.data();
    for (std::size_t t = 0; t < data.size(); ++t) {
        data[t] = static_cast<float>(acc[t] * params_.feature_scale);
    }

    const auto& areas = raster.channels[static_cast<int>(GeometryKind::Area)];
    for (std::size_t c = 0; c < cells; ++c) {
        if (std::find(blocked_area_classes_.begin(), blocked_area_classes_.end(), areas[c]) !=
            blocked_area_classes_.end()) {
            out.omega[c] = params_.prior_penalty;
        }
    }
    return out;
}

NeuralMap encode_analytic(const MapRaster& raster, const ClassTable& table, const AnalyticParams& params) {
    return AnalyticEncoder(table, params).encode(FeatureGrid{}, raster);
}

double feature_std(const FeatureGrid& grid) {
    const auto& d = grid.data();
    if (d.empty()) return 0.0;
    double mean = 0.0;
    for (auto v : d) mean += v;
    mean /= double(d.size());
    double var = 0.0;
    for (auto v : d) var += (v - mean) * (v - mean);
    return std::sqrt(var / double(d.size()));
}

void save_neural_map(const NeuralMap& map, std::ostream& os) {
    binio::Writer w(os);
    w.magic("PLNM");
    w.u32(kNeuralMapVersion);
    w.f64(map.spec.origin().x);
    w.f64(map.spec.origin().y);
    w.f64(map.spec.delta());
    w.u32(static_cast<std::uint32_t>(map.spec.width()));
    w.u32(static_cast<std::uint32_t>(map.spec.height()));
    w.u32(static_cast<std::uint32_t>(map.channels()));
    w.f32s(map.features.data());
    w.f32s(map.omega);
    if (!os) throw Error("failed writing neural map");
}

void save_neural_map(const NeuralMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create '" + path.string() + "'");
    save_neural_map(map, out);
}

NeuralMap load_neural_map(std::istream& is) {
    binio::Reader rd(is);
    rd.expect_magic("PLNM");
    auto version = rd.u32("version");
    if (version != kNeuralMapVersion) throw FormatError("unsupported neural map version " + std::to_string(version));
    Vec2 origin;
    origin.x = rd.f64("origin.x");
    origin.y = rd.f64("origin.y");
    double delta = rd.f64("delta");
    auto W = rd.u32("width");
    auto H = rd.u32("height");
    auto N = rd.u32("channel count");
    if (N == 0) throw FormatError("neural map declares N = 0 channels");
    if (W == 0 || H == 0 || W > (1u << 16) || H > (1u << 16) || N > 4096) {
        throw FormatError("neural map dimensions out of range");
    }
    NeuralMap map;
    try {
        map.spec = GridSpec(origin, delta, int(W), int(H));
    } catch (const DomainError& e) {
        throw FormatError(std::string("invalid neural map header: ") + e.what());
    }
    map.features = FeatureGrid(int(W), int(H), int(N));
    rd.f32s(map.features.data(), "feature payload");
    map.omega.resize(std::size_t(W) * H);
    rd.f32s(map.omega, "prior payload");
    rd.expect_end();
    return map;
}

NeuralMap load_neural_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return load_neural_map(in);
}

}  // namespace planloc
