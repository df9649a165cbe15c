#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "planloc/error.hpp"
#include "planloc/matcher.hpp"
#include "planloc/rng.hpp"

using namespace planloc;

namespace {

constexpr double kPi = std::numbers::pi;

NeuralMap random_map(int W, int H, int N, std::uint64_t seed, double delta = 0.5) {
    NeuralMap m;
    m.spec = GridSpec({1.25, -3.0}, delta, W, H);
    m.features = FeatureGrid(W, H, N);
    Rng rng(seed);
    for (auto& x : m.features.data()) x = static_cast<float>(rng.normal());
    m.omega.assign(std::size_t(W) * H, 0.0f);
    return m;
}

BevGrid random_bev(int L, int D, int N, std::uint64_t seed, double delta = 0.5, double keep = 0.7) {
    BevGrid b(L, D, N, delta);
    Rng rng(seed);
    for (auto& x : b.features) x = static_cast<float>(rng.normal());
    for (auto& c : b.confidence) c = rng.bernoulli(keep) ? static_cast<float>(rng.uniform(0.2, 1.0)) : 0.0f;
    return b;
}

// Score of one pose bin straight from the definition: every map cell is
// mapped into the camera frame, T (x) C is bilinearly sampled there (zero
// outside the BEV), and the dot product with F is accumulated.
double oracle_score(const NeuralMap& m, const BevGrid& b, int row, int col, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    double z = 0.0;
    for (auto x : b.confidence) z += x > 0.0f;
    if (z == 0.0) return 0.0;
    auto sample = [&](int r, int l, int n) -> double {
        if (r < 0 || r >= b.D || l < 0 || l >= b.L) return 0.0;
        return double(b.cell(r, l)[n]) * b.conf(r, l);
    };
    double acc = 0.0;
    for (int i = 0; i < m.spec.height(); ++i)
        for (int j = 0; j < m.spec.width(); ++j) {
            const double qx = j - col, qy = i - row;
            const double fwd = qx * c + qy * s;
            const double lat = qx * s - qy * c;
            const double br = fwd - 1.0, bl = lat + b.L / 2;
            const int r0 = int(std::floor(br)), l0 = int(std::floor(bl));
            const double fr = br - r0, fl = bl - l0;
            for (int n = 0; n < b.N; ++n) {
                const double t = (1 - fr) * (1 - fl) * sample(r0, l0, n) + (1 - fr) * fl * sample(r0, l0 + 1, n) +
                                 fr * (1 - fl) * sample(r0 + 1, l0, n) + fr * fl * sample(r0 + 1, l0 + 1, n);
                acc += t * m.features.cell(i, j)[n];
            }
        }
    return acc / z;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (auto x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("rotation bins") {
    CHECK(rotation_angle(0, 8) == -kPi);
    CHECK(rotation_angle(4, 8) == 0.0);
    PoseVolume v(GridSpec({0, 0}, 1.0, 2, 3), 8, VolumeKind::LogScore);
    CHECK(v.size() == 48);
    CHECK(v.theta(0) == doctest::Approx(kPi));
    CHECK(v.theta(2) == doctest::Approx(-kPi / 2));
    CHECK(v.bin_width() == doctest::Approx(kPi / 4));
    for (int k = 0; k < 8; ++k) CHECK(v.theta_index(v.theta(k)) == doctest::Approx(k));
    CHECK(v.theta_index(kPi - 1e-12) == doctest::Approx(8.0 - 8e-12 / (2 * kPi) * 8).epsilon(1e-6));
    CHECK(v.index(1, 2, 1) == (std::size_t(1) * 3 + 2) * 2 + 1);
    CHECK(v.pose(2, 1, 4) == Pose2(1.0, 2.0, 0.0));
    CHECK_THROWS_AS(PoseVolume(GridSpec({0, 0}, 1.0, 2, 2), 0, VolumeKind::LogScore), DomainError);
}

TEST_CASE("naive and Fourier backends agree with the definition") {
    for (int trial = 0; trial < 6; ++trial) {
        auto map = random_map(20, 18, 3, 10 + trial);
        auto bev = random_bev(6, 5, 3, 20 + trial);
        const int K = 8;
        auto naive = score_volume(map, bev, {K, Backend::Naive, 1});
        auto fourier = score_volume(map, bev, {K, Backend::Fourier, 1});
        CHECK(naive.kind() == VolumeKind::LogScore);
        const double scale = max_abs(naive.values());
        for (std::size_t t = 0; t < naive.size(); ++t)
            CHECK(std::abs(naive.values()[t] - fourier.values()[t]) <= 1e-9 * scale);
        Rng rng(trial);
        for (int s = 0; s < 40; ++s) {
            const int k = int(rng.below(K)), i = int(rng.below(18)), j = int(rng.below(20));
            CHECK(naive.at(k, i, j) == doctest::Approx(oracle_score(map, bev, i, j, rotation_angle(k, K))).epsilon(1e-9));
        }
    }
}

TEST_CASE("odd rotation counts and odd BEV widths") {
    auto map = random_map(17, 19, 2, 3);
    auto bev = random_bev(5, 4, 2, 4);
    auto naive = score_volume(map, bev, {7, Backend::Naive, 1});
    auto fourier = score_volume(map, bev, {7, Backend::Fourier, 1});
    const double scale = max_abs(naive.values());
    for (std::size_t t = 0; t < naive.size(); ++t) CHECK(std::abs(naive.values()[t] - fourier.values()[t]) <= 1e-9 * scale);
    CHECK(naive.at(3, 9, 8) == doctest::Approx(oracle_score(map, bev, 9, 8, rotation_angle(3, 7))).epsilon(1e-9));
}

TEST_CASE("scores are linear in the map features and shift with the map") {
    auto a = random_map(16, 16, 2, 1);
    auto b = random_map(16, 16, 2, 2);
    auto mix = a;
    for (std::size_t t = 0; t < mix.features.data().size(); ++t)
        mix.features.data()[t] = 0.5f * a.features.data()[t] + 2.0f * b.features.data()[t];
    auto bev = random_bev(4, 4, 2, 3);
    auto va = score_volume(a, bev, {4, Backend::Naive, 1});
    auto vb = score_volume(b, bev, {4, Backend::Naive, 1});
    auto vm = score_volume(mix, bev, {4, Backend::Naive, 1});
    for (std::size_t t = 0; t < vm.size(); ++t)
        CHECK(vm.values()[t] == doctest::Approx(0.5 * va.values()[t] + 2.0 * vb.values()[t]).epsilon(1e-6));

    // Cyclic shift by (2, 3): interior scores move with it.
    auto shifted = a;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            for (int n = 0; n < 2; ++n)
                shifted.features.cell((i + 2) % 16, (j + 3) % 16)[n] = a.features.cell(i, j)[n];
    auto vs = score_volume(shifted, bev, {4, Backend::Naive, 1});
    // A 4 x 4 template reaches at most 5 cells; stay clear of the seam.
    for (int k = 0; k < 4; ++k)
        for (int i = 7; i < 9; ++i)
            for (int j = 7; j < 9; ++j) CHECK(vs.at(k, i + 2, j + 3) == doctest::Approx(va.at(k, i, j)));
}

TEST_CASE("multi-threaded scoring is bit-identical") {
    auto map = random_map(24, 24, 3, 7);
    auto bev = random_bev(6, 6, 3, 8);
    for (auto backend : {Backend::Naive, Backend::Fourier}) {
        auto one = score_volume(map, bev, {8, backend, 1});
        for (int threads : {2, 4, 8}) CHECK(score_volume(map, bev, {8, backend, threads}) == one);
    }
}

TEST_CASE("reusable Fourier matcher") {
    auto map = random_map(256, 256, 2, 1);
    FourierMatcher fm(map, 64, 64);
    CHECK(fm.fft_size() == 384);
    auto small = random_map(20, 20, 2, 5);
    FourierMatcher sm(small, 5, 4);
    auto b1 = random_bev(5, 4, 2, 6);
    auto b2 = random_bev(5, 4, 2, 7);
    CHECK(sm.score(b1, 8) == score_volume(small, b1, {8, Backend::Fourier, 1}));
    CHECK(sm.score(b2, 8) == score_volume(small, b2, {8, Backend::Fourier, 1}));
    CHECK_THROWS(sm.score(random_bev(6, 4, 2, 1), 8));
}

TEST_CASE("template and preconditions") {
    auto map = random_map(16, 16, 2, 1);
    auto bev = random_bev(4, 4, 2, 2, 0.5, 0.0);
    CHECK(confident_cells(bev) == 0);
    auto v = score_volume(map, bev, {4, Backend::Fourier, 1});
    for (auto x : v.values()) CHECK(x == 0.0);
    CHECK_THROWS_AS(score_volume(map, random_bev(4, 4, 2, 1, 1.0), {}), ConfigError);
    CHECK_THROWS_AS(score_volume(map, random_bev(4, 4, 3, 1), {}), DomainError);
    CHECK_THROWS_AS(score_volume(random_map(5, 5, 2, 1), random_bev(4, 4, 2, 1), {}), DomainError);

    BevGrid one(3, 2, 1, 0.5);
    one.cell(0, 1)[0] = 2.0f;
    one.conf(0, 1) = 1.0f;
    CHECK(confident_cells(one) == 1);
    // Heading +x: the single cell sits one cell ahead of the camera.
    auto t = rotate_template(one, 0.0, 0.5);
    double total = 0.0;
    for (int a = 0; a < t.height; ++a)
        for (int b = 0; b < t.width; ++b) {
            if (t.at(a, b)[0] == 0.0) continue;
            CHECK(t.col_offset + b == 1);
            CHECK(t.row_offset + a == 0);
            total += t.at(a, b)[0];
        }
    CHECK(total == 2.0);
    t = rotate_template(one, kPi / 2, 0.5);
    for (int a = 0; a < t.height; ++a)
        for (int b = 0; b < t.width; ++b)
            if (t.at(a, b)[0] != 0.0) {
                CHECK(t.col_offset + b == 0);
                CHECK(t.row_offset + a == 1);
            }
}

TEST_CASE("posterior is a softmax with the prior broadcast over rotations") {
    auto map = random_map(12, 10, 2, 3);
    Rng rng(4);
    PoseVolume s(map.spec, 4, VolumeKind::LogScore);
    for (auto& x : s.values()) x = 3.0 * rng.normal();
    std::vector<float> omega(120, 0.0f);
    for (auto& o : omega) o = rng.bernoulli(0.2) ? -5.0f : 0.0f;
    auto p = pose_posterior(s, omega);
    CHECK(p.kind() == VolumeKind::Probability);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    double z = 0.0;
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 120; ++c) z += std::exp(s.values()[k * 120 + c] + omega[c]);
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 120; ++c)
            CHECK(p.values()[k * 120 + c] ==
                  doctest::Approx(std::exp(s.values()[k * 120 + c] + omega[c]) / z).epsilon(1e-9));

    // Shifting every score by a constant leaves the posterior unchanged.
    auto shifted = s;
    for (auto& x : shifted.values()) x += 700.0;
    auto ps = pose_posterior(shifted, omega);
    for (std::size_t t = 0; t < p.size(); ++t) CHECK(ps.values()[t] == doctest::Approx(p.values()[t]).epsilon(1e-9));

    PriorDisk disk{map.spec.cell_center(5, 5), 1.1 * map.spec.delta()};
    auto pd = pose_posterior(s, omega, disk);
    CHECK(pd.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 12; ++j)
                if (std::hypot(i - 5.0, j - 5.0) > 1.1) CHECK(pd.at(k, i, j) == 0.0);

    PriorDisk far{{1e4, 1e4}, 1.0};
    CHECK_THROWS_AS(pose_posterior(s, omega, far), DegenerateError);
    auto neg = s;
    for (auto& x : neg.values()) x = -std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(pose_posterior(neg, omega), DegenerateError);
    CHECK_NOTHROW(p.require_probability("x"));
    CHECK_THROWS_AS(s.require_probability("x"), DomainError);
}

TEST_CASE("PLPV round trip") {
    auto map = random_map(6, 5, 1, 1);
    PoseVolume v(map.spec, 3, VolumeKind::Probability);
    Rng rng(2);
    for (auto& x : v.values()) x = static_cast<float>(rng.uniform());
    std::stringstream ss;
    save_volume(v, ss);
    const auto bytes = ss.str();
    CHECK(bytes.size() == 4 + 4 + 12 + 24 + 1 + 90 * 4);
    std::istringstream in(bytes);
    auto back = load_volume(in);
    CHECK(back == v);
    std::string bad = bytes;
    bad[4] = 2;
    std::istringstream bin(bad);
    CHECK_THROWS_AS(load_volume(bin), FormatError);
    std::istringstream tin(bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS(load_volume(tin), FormatError);
}
