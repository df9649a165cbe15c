#include "planloc/matcher.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include "planloc/binio.hpp"
#include "planloc/error.hpp"
#include "planloc/parallel.hpp"

namespace planloc {

namespace {

constexpr double kPi = std::numbers::pi;

// Adds the bilinear sample of T (x) C (and C) at continuous BEV index
// (colf, rowf) into w[0..N) and *conf. Cells outside the BEV count as zero.
void sample_weighted(const BevGrid& bev, double colf, double rowf, double* w, double* conf) {
    const double cf = std::floor(colf);
    const double rf = std::floor(rowf);
    if (cf < -1.0 || cf >= bev.L || rf < -1.0 || rf >= bev.D) return;
    const int c0 = static_cast<int>(cf);
    const int r0 = static_cast<int>(rf);
    const double a = colf - cf;
    const double b = rowf - rf;
    const double wt[4] = {(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b};
    const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
    const int cc[4] = {c0, c0 + 1, c0, c0 + 1};
    for (int t = 0; t < 4; ++t) {
        if (wt[t] == 0.0 || rr[t] < 0 || rr[t] >= bev.D || cc[t] < 0 || cc[t] >= bev.L) continue;
        const double c = bev.conf(rr[t], cc[t]);
        if (c == 0.0) continue;
        const float* f = bev.cell(rr[t], cc[t]);
        for (int n = 0; n < bev.N; ++n) w[n] += wt[t] * (double(f[n]) * c);
        *conf += wt[t] * c;
    }
}

void check_pitch(const BevGrid& bev, double map_delta) {
    if (std::abs(bev.delta - map_delta) > 1e-9 * map_delta) {
        throw ConfigError("BEV pitch " + std::to_string(bev.delta) + " m differs from map pitch " +
                          std::to_string(map_delta) + " m");
    }
}

void check_template_fits(const NeuralMap& map, const BevGrid& bev) {
    if (map.channels() != bev.N) {
        throw DomainError("map has " + std::to_string(map.channels()) + " channels but the BEV has " +
                          std::to_string(bev.N));
    }
    const double diag = std::hypot(double(bev.L), double(bev.D));
    if (double(std::min(map.spec.width(), map.spec.height())) <= diag) {
        throw DomainError("map must be larger than the template diagonal");
    }
}

// Upper bound on the rotated canvas extent of an L x D template.
int max_canvas_extent(int L, int D) {
    return static_cast<int>(std::ceil(std::hypot(double(D + 1), double(L + 1)))) + 3;
}

// Smallest size >= n of the form 2^a * {1, 3, 5}. Plans are made with
// FFTW_ESTIMATE, which is deterministic across runs but slow for sizes with
// large odd factors.
int fast_fft_size(int n) {
    n = std::max(n, 1);
    int best = std::numeric_limits<int>::max();
    for (int odd : {1, 3, 5}) {
        long m = odd;
        while (m < n) m *= 2;
        best = std::min<long>(best, m);
    }
    return best;
}

PoseVolume score_naive(const NeuralMap& map, const BevGrid& bev, int K, int threads) {
    const int W = map.spec.width();
    const int H = map.spec.height();
    const int N = bev.N;
    PoseVolume out(map.spec, K, VolumeKind::LogScore);
    const int Z = confident_cells(bev);
    if (Z == 0) return out;
    parallel_for(K, threads, [&](int, int k) {
        const auto rt = rotate_template(bev, rotation_angle(k, K), map.spec.delta());
        std::vector<std::uint8_t> live(std::size_t(rt.width) * rt.height, 0);
        for (int a = 0; a < rt.height; ++a) {
            for (int b = 0; b < rt.width; ++b) {
                const double* w = rt.at(a, b);
                live[std::size_t(a) * rt.width + b] = std::any_of(w, w + N, [](double v) { return v != 0.0; });
            }
        }
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                double acc = 0.0;
                for (int a = 0; a < rt.height; ++a) {
                    const int mi = i + rt.row_offset + a;
                    if (mi < 0 || mi >= H) continue;
                    for (int b = 0; b < rt.width; ++b) {
                        const int mj = j + rt.col_offset + b;
                        if (mj < 0 || mj >= W || !live[std::size_t(a) * rt.width + b]) continue;
                        const float* f = map.features.cell(mi, mj);
                        const double* w = rt.at(a, b);
                        for (int n = 0; n < N; ++n) acc += double(f[n]) * w[n];
                    }
                }
                out.at(k, i, j) = acc / Z;
            }
        }
    });
    return out;
}

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct Plans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

// Plans are created once per size and live for the whole process; FFTW
// planning is not thread-safe, execution on new arrays is.
Plans plans_for(int n) {
    std::lock_guard lock(fftw_planner_mutex());
    static std::map<int, Plans> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    const std::size_t nc = std::size_t(n) * (n / 2 + 1);
    double* real = fftw_alloc_real(std::size_t(n) * n);
    fftw_complex* spec = fftw_alloc_complex(nc);
    Plans p;
    p.forward = fftw_plan_dft_r2c_2d(n, n, real, spec, FFTW_ESTIMATE);
    p.backward = fftw_plan_dft_c2r_2d(n, n, spec, real, FFTW_ESTIMATE);
    fftw_free(real);
    fftw_free(spec);
    if (!p.forward || !p.backward) throw Error("FFTW planning failed for size " + std::to_string(n));
    cache.emplace(n, p);
    return p;
}

struct RealBuffer {
    double* p = nullptr;
    explicit RealBuffer(std::size_t n) : p(fftw_alloc_real(n)) {
        if (!p) throw std::bad_alloc();
    }
    ~RealBuffer() { fftw_free(p); }
    RealBuffer(const RealBuffer&) = delete;
    RealBuffer& operator=(const RealBuffer&) = delete;
};

struct ComplexBuffer {
    fftw_complex* p = nullptr;
    explicit ComplexBuffer(std::size_t n) : p(fftw_alloc_complex(n)) {
        if (!p) throw std::bad_alloc();
    }
    ~ComplexBuffer() { fftw_free(p); }
    ComplexBuffer(const ComplexBuffer&) = delete;
    ComplexBuffer& operator=(const ComplexBuffer&) = delete;
};

// Applies R^-r (rotation by -r * 90 degrees) to integer cell coordinates.
inline void rotate_back(int r, int x, int y, int& ox, int& oy) {
    switch (r) {
        case 0: ox = x; oy = y; break;
        case 1: ox = y; oy = -x; break;
        case 2: ox = -x; oy = -y; break;
        default: ox = -y; oy = x; break;
    }
}

inline int wrap(int v, int n) {
    v %= n;
    return v < 0 ? v + n : v;
}

}  // namespace

double rotation_angle(int k, int K) { return -kPi + 2.0 * kPi * double(k) / double(K); }

PoseVolume::PoseVolume(GridSpec spec, int K, VolumeKind kind, double fill)
    : spec_(spec), K_(K), kind_(kind) {
    if (K < 1) throw DomainError("pose volume needs K >= 1 rotations");
    values_.assign(std::size_t(spec.cell_count()) * K, fill);
}

double PoseVolume::bin_width() const { return 2.0 * kPi / K_; }

double PoseVolume::theta(int k) const { return normalize_angle(rotation_angle(k, K_)); }

Pose2 PoseVolume::pose(int row, int col, int k) const {
    Vec2 c = spec_.cell_center(row, col);
    return {c.x, c.y, theta(k)};
}

double PoseVolume::theta_index(double theta) const {
    double t = (normalize_angle(theta) + kPi) / bin_width();
    t = std::fmod(t, double(K_));
    if (t < 0.0) t += K_;
    return t >= K_ ? 0.0 : t;
}

double PoseVolume::sum() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s;
}

void PoseVolume::require_probability(const char* op) const {
    if (kind_ != VolumeKind::Probability) throw DomainError(std::string(op) + " needs a probability volume");
}

bool PoseVolume::same_shape(const PoseVolume& o) const { return spec_ == o.spec_ && K_ == o.K_; }

int confident_cells(const BevGrid& bev) {
    return static_cast<int>(std::count_if(bev.confidence.begin(), bev.confidence.end(), [](float c) { return c > 0.0f; }));
}

RotatedTemplate rotate_template(const BevGrid& bev, double theta, double map_delta) {
    check_pitch(bev, map_delta);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const int half = bev.center_column();
    // Bilinear support of the BEV in (lateral, forward) cell units.
    const double lats[2] = {double(-half - 1), double(bev.L - half)};
    const double fwds[2] = {0.0, double(bev.D + 1)};
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (double lat : lats) {
        for (double fwd : fwds) {
            const double qx = fwd * c + lat * s;
            const double qy = fwd * s - lat * c;
            xmin = std::min(xmin, qx);
            xmax = std::max(xmax, qx);
            ymin = std::min(ymin, qy);
            ymax = std::max(ymax, qy);
        }
    }
    RotatedTemplate rt;
    rt.theta = theta;
    rt.channels = bev.N;
    rt.col_offset = static_cast<int>(std::floor(xmin));
    rt.row_offset = static_cast<int>(std::floor(ymin));
    rt.width = static_cast<int>(std::ceil(xmax)) - rt.col_offset + 1;
    rt.height = static_cast<int>(std::ceil(ymax)) - rt.row_offset + 1;
    rt.weights.assign(std::size_t(rt.width) * rt.height * bev.N, 0.0);
    rt.confidence.assign(std::size_t(rt.width) * rt.height, 0.0);
    for (int a = 0; a < rt.height; ++a) {
        const double qy = rt.row_offset + a;
        for (int b = 0; b < rt.width; ++b) {
            const double qx = rt.col_offset + b;
            const double fwd = qx * c + qy * s;
            const double lat = qx * s - qy * c;
            const std::size_t cell = std::size_t(a) * rt.width + b;
            sample_weighted(bev, lat + half, fwd - 1.0, rt.weights.data() + cell * bev.N, &rt.confidence[cell]);
        }
    }
    return rt;
}

struct FourierMatcher::Impl {
    const NeuralMap* map = nullptr;
    int W = 0, H = 0, N = 0, L = 0, D = 0, threads = 1;
    int n = 0;
    std::size_t nc = 0;
    Plans plans;
    // spectra[r * N + ch]: map rotated by r * 90 degrees, channel ch.
    std::vector<std::unique_ptr<ComplexBuffer>> spectra;
    int ox[4] = {}, oy[4] = {};

    void build() {
        const std::size_t nn = std::size_t(n) * n;
        spectra.resize(std::size_t(4) * N);
        for (int r = 0; r < 4; ++r) {
            int cx[4], cy[4];
            rotate_back(r, 0, 0, cx[0], cy[0]);
            rotate_back(r, W - 1, 0, cx[1], cy[1]);
            rotate_back(r, 0, H - 1, cx[2], cy[2]);
            rotate_back(r, W - 1, H - 1, cx[3], cy[3]);
            ox[r] = *std::min_element(cx, cx + 4);
            oy[r] = *std::min_element(cy, cy + 4);
        }
        std::vector<std::unique_ptr<RealBuffer>> bufs(std::size_t(resolve_threads(threads)));
        parallel_for(4 * N, threads, [&](int worker, int item) {
            const int r = item / N;
            const int ch = item % N;
            auto& bp = bufs[std::size_t(worker)];
            if (!bp) bp = std::make_unique<RealBuffer>(nn);
            RealBuffer& buf = *bp;
            std::fill(buf.p, buf.p + nn, 0.0);
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    int ux, uy;
                    rotate_back(r, x, y, ux, uy);
                    buf.p[std::size_t(uy - oy[r]) * n + (ux - ox[r])] = map->features.cell(y, x)[ch];
                }
            }
            auto spec = std::make_unique<ComplexBuffer>(nc);
            fftw_execute_dft_r2c(plans.forward, buf.p, spec->p);
            spectra[item] = std::move(spec);
        });
    }
};

FourierMatcher::FourierMatcher(const NeuralMap& map, int L, int D, int threads) : impl_(std::make_unique<Impl>()) {
    auto& m = *impl_;
    m.map = &map;
    m.W = map.spec.width();
    m.H = map.spec.height();
    m.N = map.channels();
    m.L = L;
    m.D = D;
    m.threads = threads;
    m.n = fast_fft_size(std::max(m.W, m.H) + max_canvas_extent(L, D) - 1);
    m.nc = std::size_t(m.n) * (m.n / 2 + 1);
    m.plans = plans_for(m.n);
    m.build();
}

FourierMatcher::~FourierMatcher() = default;

int FourierMatcher::fft_size() const { return impl_->n; }

PoseVolume FourierMatcher::score(const BevGrid& bev, int K) const {
    const auto& m = *impl_;
    if (bev.L != m.L || bev.D != m.D || bev.N != m.N) throw DomainError("template size differs from the matcher's");
    check_pitch(bev, m.map->spec.delta());
    PoseVolume out(m.map->spec, K, VolumeKind::LogScore);
    const int Z = confident_cells(bev);
    if (Z == 0) return out;
    const bool symmetric = K % 4 == 0;
    const int base = symmetric ? K / 4 : K;
    const int reps = symmetric ? 4 : 1;
    const int n = m.n;
    const std::size_t nn = std::size_t(n) * n;
    const double scale = 1.0 / (double(nn) * Z);
    struct Scratch {
        RealBuffer real;
        ComplexBuffer acc;
        std::vector<std::unique_ptr<ComplexBuffer>> tspec;
        Scratch(std::size_t nn, std::size_t nc, int N) : real(nn), acc(nc) {
            for (int ch = 0; ch < N; ++ch) tspec.push_back(std::make_unique<ComplexBuffer>(nc));
        }
    };
    std::vector<std::unique_ptr<Scratch>> scratch(std::size_t(resolve_threads(m.threads)));
    parallel_for(base, m.threads, [&](int worker, int kb) {
        const auto rt = rotate_template(bev, rotation_angle(kb, K), m.map->spec.delta());
        if (rt.width > n || rt.height > n) throw Error("rotated template exceeds the FFT size");
        auto& sp = scratch[std::size_t(worker)];
        if (!sp) sp = std::make_unique<Scratch>(nn, m.nc, m.N);
        RealBuffer& real = sp->real;
        ComplexBuffer& acc = sp->acc;
        auto& tspec = sp->tspec;
        std::fill(real.p, real.p + nn, 0.0);
        for (int ch = 0; ch < m.N; ++ch) {
            for (int a = 0; a < rt.height; ++a) {
                for (int b = 0; b < rt.width; ++b) real.p[std::size_t(a) * n + b] = rt.at(a, b)[ch];
            }
            fftw_execute_dft_r2c(m.plans.forward, real.p, tspec[ch]->p);
        }
        for (int r = 0; r < reps; ++r) {
            std::vector<const fftw_complex*> fs(m.N), ts(m.N);
            for (int ch = 0; ch < m.N; ++ch) {
                fs[ch] = m.spectra[std::size_t(r) * m.N + ch]->p;
                ts[ch] = tspec[ch]->p;
            }
            for (std::size_t q = 0; q < m.nc; ++q) {
                double re = 0.0, im = 0.0;
                for (int ch = 0; ch < m.N; ++ch) {
                    const fftw_complex& f = fs[ch][q];
                    const fftw_complex& t = ts[ch][q];
                    re += f[0] * t[0] + f[1] * t[1];
                    im += f[1] * t[0] - f[0] * t[1];
                }
                acc.p[q][0] = re;
                acc.p[q][1] = im;
            }
            fftw_execute_dft_c2r(m.plans.backward, acc.p, real.p);
            const int k = kb + r * base;
            int sx, sy;
            rotate_back(r, 1, 0, sx, sy);
            double* dst = out.values().data() + std::size_t(k) * m.W * m.H;
            for (int i = 0; i < m.H; ++i) {
                int ux, uy;
                rotate_back(r, 0, i, ux, uy);
                int tx = wrap(ux - m.ox[r] + rt.col_offset, n);
                int ty = wrap(uy - m.oy[r] + rt.row_offset, n);
                for (int j = 0; j < m.W; ++j) {
                    *dst++ = real.p[std::size_t(ty) * n + tx] * scale;
                    tx += sx;
                    ty += sy;
                    if (tx == n) tx = 0;
                    if (tx < 0) tx = n - 1;
                    if (ty == n) ty = 0;
                    if (ty < 0) ty = n - 1;
                }
            }
        }
    });
    return out;
}

PoseVolume score_volume(const NeuralMap& map, const BevGrid& bev, const ScoreOptions& options) {
    if (options.rotations < 1) throw DomainError("need K >= 1 rotations");
    check_pitch(bev, map.spec.delta());
    check_template_fits(map, bev);
    if (options.backend == Backend::Naive) return score_naive(map, bev, options.rotations, options.threads);
    FourierMatcher matcher(map, bev.L, bev.D, options.threads);
    return matcher.score(bev, options.rotations);
}

PoseVolume pose_posterior(const PoseVolume& scores, const std::vector<float>& omega,
                          const std::optional<PriorDisk>& prior) {
    const int W = scores.width();
    const int H = scores.height();
    const int K = scores.rotations();
    if (omega.size() != std::size_t(W) * H) throw DomainError("prior grid shape differs from the score volume");
    if (prior && !(prior->radius >= 0.0)) throw DomainError("prior radius must be >= 0");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    std::vector<double> cell_term(std::size_t(W) * H);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double v = omega[std::size_t(i) * W + j];
            if (prior && norm(scores.spec().cell_center(i, j) - prior->center) > prior->radius) v = kNegInf;
            cell_term[std::size_t(i) * W + j] = v;
        }
    }
    PoseVolume out(scores.spec(), K, VolumeKind::Probability);
    auto& vals = out.values();
    double mx = kNegInf;
    for (int k = 0; k < K; ++k) {
        for (std::size_t c = 0; c < cell_term.size(); ++c) {
            const std::size_t idx = std::size_t(k) * cell_term.size() + c;
            const double v = scores.values()[idx] + cell_term[c];
            if (std::isnan(v)) throw DomainError("score volume holds NaN");
            vals[idx] = v;
            mx = std::max(mx, v);
        }
    }
    if (mx == kNegInf) throw DegenerateError("every pose bin is excluded by the prior");
    double total = 0.0;
    for (double& v : vals) {
        v = std::exp(v - mx);
        total += v;
    }
    for (double& v : vals) v /= total;
    return out;
}

void save_volume(const PoseVolume& v, std::ostream& os) {
    binio::Writer w(os);
    w.magic("PLPV");
    w.u32(kPoseVolumeVersion);
    w.u32(std::uint32_t(v.width()));
    w.u32(std::uint32_t(v.height()));
    w.u32(std::uint32_t(v.rotations()));
    w.f64(v.spec().origin().x);
    w.f64(v.spec().origin().y);
    w.f64(v.spec().delta());
    w.u8(static_cast<std::uint8_t>(v.kind()));
    std::vector<float> f(v.values().begin(), v.values().end());
    w.f32s(f);
    if (!os) throw Error("failed writing pose volume");
}

void save_volume(const PoseVolume& v, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create '" + path.string() + "'");
    save_volume(v, out);
}

PoseVolume load_volume(std::istream& is) {
    binio::Reader rd(is);
    rd.expect_magic("PLPV");
    auto version = rd.u32("version");
    if (version != kPoseVolumeVersion) throw FormatError("unsupported pose volume version " + std::to_string(version));
    auto W = rd.u32("width");
    auto H = rd.u32("height");
    auto K = rd.u32("rotations");
    double ox = rd.f64("origin.x");
    double oy = rd.f64("origin.y");
    double delta = rd.f64("delta");
    auto kind = rd.u8("kind");
    if (W == 0 || H == 0 || K == 0 || W > 65536 || H > 65536 || K > 65536 || !(delta > 0.0)) {
        throw FormatError("pose volume header out of range");
    }
    if (kind > 1) throw FormatError("unknown pose volume kind " + std::to_string(kind));
    PoseVolume v(GridSpec({ox, oy}, delta, int(W), int(H)), int(K), static_cast<VolumeKind>(kind));
    std::vector<float> f(v.size());
    rd.f32s(f, "volume payload");
    rd.expect_end();
    std::copy(f.begin(), f.end(), v.values().begin());
    return v;
}

PoseVolume load_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return load_volume(in);
}

}  // namespace planloc
