#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "planloc/error.hpp"
#include "planloc/fusion.hpp"
#include "planloc/infer.hpp"
#include "planloc/rng.hpp"

using namespace planloc;

namespace {

constexpr double kPi = std::numbers::pi;

PoseVolume normalized(PoseVolume v) {
    const double s = v.sum();
    for (auto& x : v.values()) x /= s;
    v.set_kind(VolumeKind::Probability);
    return v;
}

PoseVolume random_volume(int W, int H, int K, std::uint64_t seed) {
    PoseVolume v(GridSpec({-2.0, 3.0}, 0.5, W, H), K, VolumeKind::LogScore);
    Rng rng(seed);
    for (auto& x : v.values()) x = std::exp(3.0 * rng.uniform());
    return normalized(v);
}

PoseVolume point_mass(const GridSpec& g, int K, int row, int col, int k) {
    PoseVolume v(g, K, VolumeKind::Probability, 0.0);
    v.at(k, row, col) = 1.0;
    return v;
}

// Direct evaluation: sample P at xi (+) rel for every bin, floor, normalize.
PoseVolume oracle_warp(const PoseVolume& P, const Pose2& rel) {
    PoseVolume out(P.spec(), P.rotations(), VolumeKind::LogScore);
    for (int k = 0; k < P.rotations(); ++k)
        for (int i = 0; i < P.height(); ++i)
            for (int j = 0; j < P.width(); ++j) {
                auto p = interpolate(P, compose(P.pose(i, j, k), rel));
                out.at(k, i, j) = std::max(p.value_or(0.0), kProbabilityFloor);
            }
    return normalized(out);
}

}  // namespace

TEST_CASE("warp equals direct resampling") {
    auto P = random_volume(12, 10, 8, 1);
    Rng rng(2);
    for (int t = 0; t < 8; ++t) {
        Pose2 rel(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-kPi, kPi));
        auto got = warp_volume(P, rel);
        auto want = oracle_warp(P, rel);
        CHECK(got.kind() == VolumeKind::Probability);
        for (std::size_t s = 0; s < got.size(); ++s) CHECK(got.values()[s] == doctest::Approx(want.values()[s]).epsilon(1e-9));
        CHECK(warp_volume(P, rel, 4) == got);
    }
}

TEST_CASE("identity warp only floors and renormalizes") {
    auto P = random_volume(6, 6, 4, 3);
    P.values()[0] = 0.0;
    P = normalized(P);
    auto W = warp_volume(P, Pose2::identity());
    CHECK(W.sum() == doctest::Approx(1.0));
    CHECK(W.values()[0] > 0.0);
    for (std::size_t s = 1; s < P.size(); ++s) CHECK(W.values()[s] == doctest::Approx(P.values()[s]).epsilon(1e-9));
}

TEST_CASE("grid-aligned warp moves a point mass") {
    const GridSpec g({0, 0}, 1.0, 15, 15);
    const int K = 4;
    // Heading +pi/2 (bin 3 of 4): a forward step of 2 m is +2 rows.
    auto P = point_mass(g, K, 9, 7, 3);
    auto W = warp_volume(P, Pose2(2.0, 0.0, 0.0));
    auto b = max_bin(W);
    CHECK(b.row == 7);
    CHECK(b.col == 7);
    CHECK(b.k == 3);
    CHECK(W.at(3, 7, 7) == doctest::Approx(1.0).epsilon(1e-9));
    // A quarter-turn relative heading moves mass one bin.
    W = warp_volume(P, Pose2(0.0, 0.0, kPi / 2));
    b = max_bin(W);
    CHECK(b.k == 2);
    CHECK(b.row == 9);
}

TEST_CASE("fusion is the renormalized product of warped views") {
    auto a = random_volume(10, 9, 8, 4);
    auto b = random_volume(10, 9, 8, 5);
    auto c = random_volume(10, 9, 8, 6);
    const Pose2 rb(0.5, -0.5, kPi / 4), rc(-1.0, 0.0, -kPi / 2);
    auto fused = fuse_views({a, b, c}, {Pose2::identity(), rb, rc});
    auto wa = warp_volume(a, Pose2::identity()), wb = warp_volume(b, rb), wc = warp_volume(c, rc);
    PoseVolume want(a.spec(), 8, VolumeKind::LogScore);
    for (std::size_t s = 0; s < want.size(); ++s) want.values()[s] = wa.values()[s] * wb.values()[s] * wc.values()[s];
    want = normalized(want);
    for (std::size_t s = 0; s < want.size(); ++s) CHECK(fused.values()[s] == doctest::Approx(want.values()[s]).epsilon(1e-9));
    CHECK(fused.sum() == doctest::Approx(1.0).epsilon(1e-12));

    auto swapped = fuse_views({c, a, b}, {rc, Pose2::identity(), rb});
    for (std::size_t s = 0; s < want.size(); ++s) CHECK(swapped.values()[s] == doctest::Approx(fused.values()[s]).epsilon(1e-9));
    CHECK(fuse_views({a, b, c}, {Pose2::identity(), rb, rc}, 3) == fused);

    CHECK_THROWS_AS(fuse_views({a, b}, {Pose2::identity()}), DomainError);
    CHECK_THROWS_AS(fuse_views({}, {}), DomainError);
    auto other = random_volume(9, 9, 8, 1);
    CHECK_THROWS_AS(fuse_views({a, other}, {Pose2::identity(), Pose2::identity()}), DomainError);
}

TEST_CASE("two ambiguous views resolve to their common mode") {
    const GridSpec g({0, 0}, 1.0, 20, 20);
    // b observes from 3 m further along +x (heading bin 2 is theta 0).
    auto a = point_mass(g, 4, 5, 5, 2);
    a.at(2, 14, 14) = 1.0;
    a = normalized(a);
    auto b = point_mass(g, 4, 5, 8, 2);
    b.at(2, 10, 3) = 1.0;
    b = normalized(b);
    auto f = fuse_views({a, b}, {Pose2::identity(), Pose2(3.0, 0.0, 0.0)});
    auto m = max_bin(f);
    CHECK(m.row == 5);
    CHECK(m.col == 5);
    CHECK(f.at(2, 5, 5) > 0.99);
}

TEST_CASE("blur spreads a point mass into a symmetric Gaussian") {
    const GridSpec g({0, 0}, 0.5, 21, 21);
    auto P = point_mass(g, 16, 10, 10, 5);
    auto B = blur_volume(P, {0.5, 2.0 * kPi / 16});
    CHECK(B.sum() == doctest::Approx(1.0));
    CHECK(max_bin(B).row == 10);
    CHECK(B.at(5, 10, 11) == doctest::Approx(B.at(5, 10, 9)));
    CHECK(B.at(5, 11, 10) == doctest::Approx(B.at(5, 9, 10)));
    CHECK(B.at(4, 10, 10) == doctest::Approx(B.at(6, 10, 10)));
    // Sigma of one cell in x: neighbour ratio exp(-1/2).
    CHECK(B.at(5, 10, 11) / B.at(5, 10, 10) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
    CHECK(B.at(5, 10, 14) == 0.0);
    auto cov = covariance(B, B.pose(10, 10, 5), {3.0, kPi});
    CHECK(cov[0][0] == doctest::Approx(cov[1][1]));

    auto seam = blur_volume(point_mass(g, 16, 10, 10, 0), {0.0, 2.0 * kPi / 16});
    CHECK(seam.at(15, 10, 10) == doctest::Approx(seam.at(1, 10, 10)));
    CHECK(seam.at(0, 10, 11) == 0.0);
    CHECK(blur_volume(P, {0.0, 0.0}) == P);
    CHECK_THROWS_AS(blur_volume(P, {-1.0, 0.0}), DomainError);
}

TEST_CASE("markov step moves the belief along the odometry") {
    const GridSpec g({0, 0}, 1.0, 25, 25);
    const int K = 8;
    auto prev = point_mass(g, K, 10, 10, 6);  // theta = pi/2
    PoseVolume flat(g, K, VolumeKind::Probability, 1.0 / (625.0 * K));
    const Pose2 odo(3.0, 1.0, kPi / 4);
    auto next = markov_step(prev, odo, {0.5, kPi / 180}, flat);
    const Pose2 expect = compose(prev.pose(10, 10, 6), odo);
    auto m = max_bin(next);
    CHECK(next.pose(m.row, m.col, m.k).x() == doctest::Approx(expect.x()));
    CHECK(next.pose(m.row, m.col, m.k).y() == doctest::Approx(expect.y()));
    CHECK(next.theta(m.k) == doctest::Approx(expect.theta()));
    CHECK(next.sum() == doctest::Approx(1.0));

    // The measurement multiplies the prediction.
    auto meas = point_mass(g, K, 5, 5, 0);
    meas.values()[meas.index(0, 5, 5)] = 0.5;
    meas.values()[meas.index(7, 13, 7)] = 0.5;
    auto post = markov_step(prev, odo, {0.5, kPi / 180}, meas);
    CHECK(post.at(7, 13, 7) > 0.99);
}

TEST_CASE("trajectory files") {
    const std::string text =
        "# header\n"
        "a 0 0 0 v0.plpv\n"
        "\n"
        "b 1.5 -2 0.25 sub/v1.plpv  # inline comment\n"
        "c 0 0 0 /abs/v2.plpv\n";
    auto f = parse_trajectory(text, "/data/run");
    REQUIRE(f.size() == 3);
    CHECK(f[0].id == "a");
    CHECK(f[1].odometry == Pose2(1.5, -2.0, 0.25));
    CHECK(f[0].volume == std::filesystem::path("/data/run/v0.plpv"));
    CHECK(f[1].volume == std::filesystem::path("/data/run/sub/v1.plpv"));
    CHECK(f[2].volume == std::filesystem::path("/abs/v2.plpv"));
    CHECK_THROWS_AS(parse_trajectory("a 1 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_trajectory("a 1 2 3 p q\n"), ConfigError);
    CHECK_THROWS_AS(parse_trajectory("# nothing\n"), ConfigError);
}

TEST_CASE("relative poses chain the odometry") {
    Rng rng(9);
    std::vector<TrajectoryFrame> frames(5);
    std::vector<Pose2> absolute{Pose2::identity()};
    for (int i = 1; i < 5; ++i) {
        frames[i].odometry = Pose2(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-1, 1));
        absolute.push_back(compose(absolute.back(), frames[i].odometry));
    }
    frames[0].odometry = Pose2(100, 100, 1);  // ignored
    auto rel = relative_to_last(frames);
    REQUIRE(rel.size() == 5);
    const Pose2 last_inv = inverse(absolute.back());
    for (int i = 0; i < 5; ++i) {
        const Pose2 want = compose(last_inv, absolute[i]);
        CHECK(rel[i].x() == doctest::Approx(want.x()).epsilon(1e-12));
        CHECK(rel[i].y() == doctest::Approx(want.y()).epsilon(1e-12));
        CHECK(normalize_angle(rel[i].theta() - want.theta()) == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK(rel[4] == Pose2::identity());
}

TEST_CASE("trajectory fusion from files") {
    const auto dir = std::filesystem::temp_directory_path() / "planloc-test-fusion";
    std::filesystem::create_directories(dir);
    auto a = random_volume(10, 10, 8, 11), b = random_volume(10, 10, 8, 12);
    save_volume(a, dir / "a.plpv");
    save_volume(b, dir / "b.plpv");
    {
        std::ofstream t(dir / "traj.txt");
        t << "f0 0 0 0 a.plpv\nf1 0.5 0 0.7853981633974483 b.plpv\n";
    }
    auto frames = load_trajectory(dir / "traj.txt");
    auto la = load_volume(dir / "a.plpv"), lb = load_volume(dir / "b.plpv");
    auto joint = fuse_trajectory(frames, FusionMode::Joint, {});
    auto want = fuse_views({la, lb}, relative_to_last(frames));
    CHECK(joint == want);
    auto markov = fuse_trajectory(frames, FusionMode::Markov, {0.5, kPi / 180});
    CHECK(markov == markov_step(la, frames[1].odometry, {0.5, kPi / 180}, lb));
    std::filesystem::remove_all(dir);
}
