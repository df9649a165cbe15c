#include "planloc/bev.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "planloc/binio.hpp"
#include "planloc/error.hpp"

namespace planloc {

ScaleBins::ScaleBins(double sigma_min, double sigma_max, int S)
    : sigma_min_(sigma_min), sigma_max_(sigma_max), S_(S) {
    if (!(sigma_min > 0.0 && sigma_max > sigma_min)) throw DomainError("scale bins need 0 < sigma_min < sigma_max");
    if (S < 1) throw DomainError("scale bins need S >= 1");
}

double ScaleBins::value(int i) const {
    return sigma_min_ * std::pow(sigma_max_ / sigma_min_, double(i) / double(S_));
}

double scale_from_depth(double focal_px, double depth_m) {
    if (!(focal_px > 0.0) || !(depth_m > 0.0)) throw DomainError("focal length and depth must be positive");
    return focal_px / depth_m;
}

double depth_from_scale(double focal_px, double sigma) {
    if (!(focal_px > 0.0) || !(sigma > 0.0)) throw DomainError("focal length and scale must be positive");
    return focal_px / sigma;
}

std::optional<double> scale_to_bin(double sigma, const ScaleBins& bins) {
    if (!(sigma >= bins.sigma_min() && sigma <= bins.sigma_max())) return std::nullopt;
    double idx = bins.S() * std::log(sigma / bins.sigma_min()) / std::log(bins.sigma_max() / bins.sigma_min());
    return std::clamp(idx, 0.0, double(bins.S()));
}

ColumnFeatures::ColumnFeatures(int U_, int V_, int N_, int S_, double focal_, double cx_)
    : U(U_), V(V_), N(N_), S(S_), focal(focal_), cx(cx_),
      features(std::size_t(U_) * V_ * N_, 0.0f), scores(std::size_t(U_) * V_ * (S_ + 1), 0.0f) {}

void ColumnFeatures::validate() const {
    if (U < 1 || V < 1 || N < 1 || S < 1) throw DomainError("column features need U, V, N, S >= 1");
    if (!(focal > 0.0)) throw DomainError("focal length must be positive");
    if (features.size() != std::size_t(U) * V * N || scores.size() != std::size_t(U) * V * (S + 1)) {
        throw DomainError("column feature buffers do not match U x V x N / U x V x (S+1)");
    }
    auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(features.begin(), features.end(), finite) || !std::all_of(scores.begin(), scores.end(), finite)) {
        throw DomainError("column features must be finite");
    }
}

std::vector<double> polar_attention(const ColumnFeatures& cols, const ScaleBins& bins, double delta, int D) {
    cols.validate();
    if (D < 1) throw DomainError("need at least one depth plane");
    if (cols.S != bins.S()) throw DomainError("column scores and scale bins disagree on S");
    const int U = cols.U;
    const int V = cols.V;
    const int nb = cols.S + 1;
    std::vector<double> alpha(std::size_t(U) * D * V, 0.0);
    std::vector<double> s(V);
    for (int d = 0; d < D; ++d) {
        auto bin = scale_to_bin(cols.focal / ((d + 1) * delta), bins);
        if (!bin) continue;
        const int i0 = static_cast<int>(std::floor(*bin));
        const int i1 = std::min(i0 + 1, cols.S);
        const double w = *bin - i0;
        for (int u = 0; u < U; ++u) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int v = 0; v < V; ++v) {
                const float* sc = cols.scores.data() + (std::size_t(u) * V + v) * nb;
                s[v] = (1.0 - w) * sc[i0] + w * sc[i1];
                mx = std::max(mx, s[v]);
            }
            double total = 0.0;
            for (int v = 0; v < V; ++v) {
                s[v] = std::exp(s[v] - mx);
                total += s[v];
            }
            double* a = alpha.data() + (std::size_t(u) * D + d) * V;
            for (int v = 0; v < V; ++v) a[v] = s[v] / total;
        }
    }
    return alpha;
}

PolarGrid lift_polar(const ColumnFeatures& cols, const ScaleBins& bins, double delta, int D) {
    auto alpha = polar_attention(cols, bins, delta, D);
    PolarGrid out;
    out.U = cols.U;
    out.D = D;
    out.N = cols.N;
    out.features.assign(std::size_t(out.U) * D * out.N, 0.0);
    out.valid.assign(std::size_t(out.U) * D, 0);
    for (int d = 0; d < D; ++d) {
        const bool ok = scale_to_bin(cols.focal / ((d + 1) * delta), bins).has_value();
        if (!ok) continue;
        for (int u = 0; u < cols.U; ++u) {
            out.valid[std::size_t(u) * D + d] = 1;
            const double* a = alpha.data() + (std::size_t(u) * D + d) * cols.V;
            double* dst = out.features.data() + (std::size_t(u) * D + d) * cols.N;
            for (int v = 0; v < cols.V; ++v) {
                const float* x = cols.features.data() + (std::size_t(u) * cols.V + v) * cols.N;
                for (int n = 0; n < cols.N; ++n) dst[n] += a[v] * x[n];
            }
        }
    }
    return out;
}

BevGrid::BevGrid(int L_, int D_, int N_, double delta_)
    : L(L_), D(D_), N(N_), delta(delta_), features(std::size_t(L_) * D_ * N_, 0.0f),
      confidence(std::size_t(L_) * D_, 0.0f) {
    if (L_ < 1 || D_ < 1 || N_ < 1) throw DomainError("BEV grid needs L, D, N >= 1");
    if (!(delta_ > 0.0)) throw DomainError("BEV delta must be > 0");
}

BevGrid polar_to_cartesian(const PolarGrid& polar, const ColumnFeatures& cols, double delta, int L) {
    if (L < 1) throw DomainError("need at least one lateral cell");
    if (polar.U != cols.U || polar.N != cols.N) throw DomainError("polar grid does not match the column features");
    BevGrid bev(L, polar.D, polar.N, delta);
    const int U = polar.U;
    for (int r = 0; r < polar.D; ++r) {
        const double y = bev.forward(r);
        for (int l = 0; l < L; ++l) {
            const double u = cols.cx + cols.focal * bev.lateral(l) / y;
            if (!(u >= 0.0 && u <= double(U - 1))) continue;
            const int u0 = static_cast<int>(std::floor(u));
            const int u1 = std::min(u0 + 1, U - 1);
            const double a = u - u0;
            if (!polar.valid[std::size_t(u0) * polar.D + r] || !polar.valid[std::size_t(u1) * polar.D + r]) continue;
            const double* p0 = polar.features.data() + (std::size_t(u0) * polar.D + r) * polar.N;
            const double* p1 = polar.features.data() + (std::size_t(u1) * polar.D + r) * polar.N;
            float* dst = bev.cell(r, l);
            for (int n = 0; n < polar.N; ++n) dst[n] = static_cast<float>((1.0 - a) * p0[n] + a * p1[n]);
            bev.conf(r, l) = 1.0f;
        }
    }
    return bev;
}

BevGrid lift_to_bev(const ColumnFeatures& cols, const ScaleBins& bins, double delta, int L, int D,
                    const BevRefiner& refine) {
    auto bev = polar_to_cartesian(lift_polar(cols, bins, delta, D), cols, delta, L);
    return refine ? refine(std::move(bev)) : bev;
}

void save_columns(const ColumnFeatures& c, std::ostream& os) {
    c.validate();
    binio::Writer w(os);
    w.magic("PLCF");
    w.u32(kColumnFeaturesVersion);
    w.u32(std::uint32_t(c.U));
    w.u32(std::uint32_t(c.V));
    w.u32(std::uint32_t(c.N));
    w.u32(std::uint32_t(c.S));
    w.f64(c.focal);
    w.f64(c.cx);
    w.f32s(c.features);
    w.f32s(c.scores);
    if (!os) throw Error("failed writing column features");
}

void save_columns(const ColumnFeatures& cols, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create '" + path.string() + "'");
    save_columns(cols, out);
}

ColumnFeatures load_columns(std::istream& is) {
    binio::Reader rd(is);
    rd.expect_magic("PLCF");
    auto version = rd.u32("version");
    if (version != kColumnFeaturesVersion) throw FormatError("unsupported column feature version " + std::to_string(version));
    auto U = rd.u32("U");
    auto V = rd.u32("V");
    auto N = rd.u32("N");
    auto S = rd.u32("S");
    double f = rd.f64("focal");
    double cx = rd.f64("cx");
    if (U == 0 || V == 0 || N == 0 || S == 0 || U > 65536 || V > 65536 || N > 4096 || S > 4096) {
        throw FormatError("column feature dimensions out of range");
    }
    ColumnFeatures c(int(U), int(V), int(N), int(S), f, cx);
    rd.f32s(c.features, "feature payload");
    rd.f32s(c.scores, "score payload");
    rd.expect_end();
    try {
        c.validate();
    } catch (const DomainError& e) {
        throw FormatError(std::string("invalid column features: ") + e.what());
    }
    return c;
}

ColumnFeatures load_columns(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return load_columns(in);
}

void save_bev(const BevGrid& b, std::ostream& os) {
    binio::Writer w(os);
    w.magic("PLBV");
    w.u32(kBevVersion);
    w.u32(std::uint32_t(b.L));
    w.u32(std::uint32_t(b.D));
    w.u32(std::uint32_t(b.N));
    w.f64(b.delta);
    w.f32s(b.features);
    w.f32s(b.confidence);
    if (!os) throw Error("failed writing BEV grid");
}

void save_bev(const BevGrid& bev, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create '" + path.string() + "'");
    save_bev(bev, out);
}

BevGrid load_bev(std::istream& is) {
    binio::Reader rd(is);
    rd.expect_magic("PLBV");
    auto version = rd.u32("version");
    if (version != kBevVersion) throw FormatError("unsupported BEV version " + std::to_string(version));
    auto L = rd.u32("L");
    auto D = rd.u32("D");
    auto N = rd.u32("N");
    double delta = rd.f64("delta");
    if (L == 0 || D == 0 || N == 0 || L > 65536 || D > 65536 || N > 4096 || !(delta > 0.0)) {
        throw FormatError("BEV header out of range");
    }
    BevGrid b(int(L), int(D), int(N), delta);
    rd.f32s(b.features, "feature payload");
    rd.f32s(b.confidence, "confidence payload");
    rd.expect_end();
    return b;
}

BevGrid load_bev(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return load_bev(in);
}

BevGrid load_observation(const std::filesystem::path& path, double sigma_min, double sigma_max, double delta, int L,
                         int D) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    char magic[4] = {};
    in.read(magic, 4);
    in.seekg(0);
    if (std::string(magic, 4) == "PLCF") {
        auto cols = load_columns(in);
        return lift_to_bev(cols, ScaleBins(sigma_min, sigma_max, cols.S), delta, L, D);
    }
    return load_bev(in);
}

}  // namespace planloc
