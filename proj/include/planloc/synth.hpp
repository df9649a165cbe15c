#pragma once

// Synthetic worlds, rendered BEV observations and a brute-force localizer.

#include <cstdint>
#include <filesystem>
#include <string>

#include "planloc/bev.hpp"
#include "planloc/classes.hpp"
#include "planloc/mapenc.hpp"
#include "planloc/matcher.hpp"
#include "planloc/raster.hpp"
#include "planloc/rng.hpp"

namespace planloc {

// Key/value world description, one "key = value" per line ('#' comments):
//   extent_m          side of the square world (128)
//   delta             cell size in meters (0.5)
//   block_m           road spacing (32)
//   road_margin_m     setback of lots from the road centerline (4)
//   building_density  probability that a lot holds a building (0.6)
//   green_density     probability that an empty lot is grass or parking (1)
//   tree_density      trees per square meter (0.01)
//   point_density     street furniture per square meter (0.004)
struct WorldSpec {
    double extent_m = 128.0;
    double delta = 0.5;
    double block_m = 32.0;
    double road_margin_m = 4.0;
    double building_density = 0.6;
    double green_density = 1.0;
    double tree_density = 0.01;
    double point_density = 0.004;

    GridSpec grid() const;
};

WorldSpec parse_world_spec(const std::string& text);
WorldSpec load_world_spec(const std::filesystem::path& path);

struct World {
    MapGeometries geometries;
    MapRaster raster;
};

// Road grid with a random phase, rectangular buildings (with outlines) and
// green lots inside the blocks, scattered trees and street furniture.
// Deterministic for a seed.
World gen_world(std::uint64_t seed, const WorldSpec& spec, const ClassTable& table = ClassTable::builtin());

struct BevSpec {
    int L = 64;
    int D = 64;
    double delta = 0.5;
    double half_angle = 3.14159265358979323846 / 4.0;
};

struct ObservationNoise {
    double sigma = 0.0;    // multiples of the map's feature std
    double dropout = 0.0;  // probability of dropping a confident cell
};

// T[p] = bilinear sample of F at transform_point(gt, p) plus Gaussian
// noise; C = 1 for cells inside the frustum and the map, minus dropped
// cells. Throws DomainError when gt lies outside the map.
BevGrid render_observation(const NeuralMap& map, const Pose2& gt, const BevSpec& bev, const ObservationNoise& noise,
                           std::uint64_t seed);

struct OracleResult {
    Pose2 pose;
    PoseVolume scores;
};

// Direct evaluation of every pose bin against every map cell the rotated
// template can reach. Cost O(W H K (L + D)^2); small instances only.
OracleResult oracle_localize(const NeuralMap& map, const BevGrid& bev, int K);

// Random cell-center pose on a rotation bin, at least margin_m from the map
// border and on a cell whose prior score is zero.
Pose2 random_grid_pose(const NeuralMap& map, int K, double margin_m, Rng& rng);

}  // namespace planloc
