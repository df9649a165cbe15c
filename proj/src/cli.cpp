#include "planloc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include "planloc/bev.hpp"
#include "planloc/classes.hpp"
#include "planloc/error.hpp"
#include "planloc/eval.hpp"
#include "planloc/fusion.hpp"
#include "planloc/infer.hpp"
#include "planloc/mapenc.hpp"
#include "planloc/matcher.hpp"
#include "planloc/osm.hpp"
#include "planloc/raster.hpp"
#include "planloc/synth.hpp"

namespace planloc {

namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double parse_number(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used == text.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(what + ": '" + text + "' is not a number");
}

Vec2 parse_xy(const std::string& text, const std::string& what) {
    auto comma = text.find(',');
    if (comma == std::string::npos) throw ConfigError(what + " must be given as x,y");
    return {parse_number(trim(text.substr(0, comma)), what), parse_number(trim(text.substr(comma + 1)), what)};
}

// Pipeline configuration file ("key = value" lines, '#' comments):
//   classes          class table file (default: built-in table)
//   encoder          map encoder; only "analytic" is built in
//   radius_m         analytic encoder truncation radius
//   channels         analytic encoder output channels N
//   projection_seed  seed of the random channel projection
//   prior_penalty    Omega value on building and water cells
//   noise_sigma      synth observation noise (feature-std multiples)
//   dropout          synth confident-cell dropout probability
//   half_angle_deg   synth frustum half-angle
//   world            world spec file for synth
struct Settings {
    std::optional<ClassTable> classes;
    AnalyticParams encoder;
    ObservationNoise noise;
    double half_angle_deg = 45.0;
    std::optional<WorldSpec> world;

    const ClassTable& table() const { return classes ? *classes : ClassTable::builtin(); }
};

Settings load_settings(const std::string& path) {
    Settings s;
    if (path.empty()) return s;
    const fs::path base = fs::path(path).parent_path();
    std::istringstream in(read_text(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        const std::string where = path + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
        if (key == "classes") s.classes = ClassTable::load(resolve(val));
        else if (key == "encoder") {
            if (val != "analytic") throw ConfigError(where + ": unknown encoder '" + val + "'");
        } else if (key == "radius_m") s.encoder.radius_m = parse_number(val, where);
        else if (key == "channels") s.encoder.channels = static_cast<int>(parse_number(val, where));
        else if (key == "projection_seed") s.encoder.projection_seed = static_cast<std::uint64_t>(parse_number(val, where));
        else if (key == "prior_penalty") s.encoder.prior_penalty = static_cast<float>(parse_number(val, where));
        else if (key == "noise_sigma") s.noise.sigma = parse_number(val, where);
        else if (key == "dropout") s.noise.dropout = parse_number(val, where);
        else if (key == "half_angle_deg") s.half_angle_deg = parse_number(val, where);
        else if (key == "world") s.world = load_world_spec(resolve(val));
        else throw ConfigError(where + ": unknown key '" + key + "'");
    }
    return s;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// 8-bit grayscale image of the heading marginal, north at the top, scaled
// so that the largest cell is white.
void write_heatmap(const PoseVolume& P, const fs::path& path) {
    const int W = P.width();
    const int H = P.height();
    std::vector<double> marginal(std::size_t(W) * H, 0.0);
    for (int k = 0; k < P.rotations(); ++k) {
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) marginal[std::size_t(i) * W + j] += P.at(k, i, j);
        }
    }
    if (P.kind() == VolumeKind::LogScore) {
        // Log-score volumes are shown through their softmax.
        const double mx = *std::max_element(marginal.begin(), marginal.end());
        for (double& v : marginal) v = std::exp(v - mx);
    }
    const double mx = *std::max_element(marginal.begin(), marginal.end());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create '" + path.string() + "'");
    out << "P5\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> row(W);
    for (int i = H - 1; i >= 0; --i) {
        for (int j = 0; j < W; ++j) {
            const double v = mx > 0.0 ? marginal[std::size_t(i) * W + j] / mx : 0.0;
            row[j] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
        out.write(reinterpret_cast<const char*>(row.data()), W);
    }
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

struct ScenarioObservation {
    std::string id;
    Pose2 gt;
    std::uint64_t seed = 0;
    fs::path path;
};

struct Scenario {
    fs::path map;
    int rotations = 64;
    std::vector<ScenarioObservation> observations;
};

// scenario.txt: "map = <file>", "rotations = <K>" and one
// "observation = <id> <seed> <x> <y> <theta> <file>" per view; paths are
// relative to the scenario directory.
Scenario load_scenario(const fs::path& dir) {
    const fs::path file = dir / "scenario.txt";
    std::istringstream in(read_text(file));
    Scenario sc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        const std::string where = file.string() + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "map") {
            sc.map = dir / val;
        } else if (key == "rotations") {
            sc.rotations = static_cast<int>(parse_number(val, where));
        } else if (key == "observation") {
            std::istringstream ls(val);
            ScenarioObservation o;
            double x, y, t;
            std::string p;
            if (!(ls >> o.id >> o.seed >> x >> y >> t >> p)) {
                throw ConfigError(where + ": expected 'observation = id seed x y theta file'");
            }
            o.gt = Pose2(x, y, t);
            o.path = dir / p;
            sc.observations.push_back(o);
        } else {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
    if (sc.map.empty()) throw ConfigError(file.string() + ": no map entry");
    if (sc.observations.empty()) throw ConfigError(file.string() + ": no observations");
    return sc;
}

struct LiftArgs {
    double sigma_min = 2.0;
    double sigma_max = 512.0;
    int L = 64;
    int D = 64;
};

void add_lift_options(CLI::App* cmd, LiftArgs& a) {
    cmd->add_option("--sigma-min", a.sigma_min, "Smallest scale of column-feature inputs")->capture_default_str();
    cmd->add_option("--sigma-max", a.sigma_max, "Largest scale of column-feature inputs")->capture_default_str();
    cmd->add_option("--L", a.L, "BEV lateral cells for column-feature inputs")->capture_default_str();
    cmd->add_option("--D", a.D, "BEV depth cells for column-feature inputs")->capture_default_str();
}

Backend parse_backend(const std::string& s) {
    if (s == "fourier") return Backend::Fourier;
    if (s == "naive") return Backend::Naive;
    throw ConfigError("unknown backend '" + s + "'");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Localize bird's-eye-view observations in maps rasterized from OpenStreetMap.", "planloc"};
    app.fallthrough();
    int threads = 0;
    std::string config_path;
    app.add_option("--threads", threads, "Worker cap (0: all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--config", config_path, "Pipeline configuration file")->check(CLI::ExistingFile);
    app.require_subcommand(1);

    auto* fetch = app.add_subcommand("fetch", "Download OSM data for west,south,east,north (use -- before negative values)");
    std::string bbox_text, fetch_out, cache_dir = ".planloc-cache", endpoint;
    double fetch_timeout = 60.0;
    fetch->add_option("bbox", bbox_text, "west,south,east,north in degrees")->required();
    fetch->add_option("-o,--out", fetch_out, "Copy the OSM file here");
    fetch->add_option("--cache", cache_dir, "Cache directory")->capture_default_str();
    fetch->add_option("--endpoint", endpoint, "Overpass endpoint (default: $PLANLOC_OVERPASS_URL or the public server)");
    fetch->add_option("--timeout", fetch_timeout, "Request timeout in seconds")->capture_default_str();

    auto* rast = app.add_subcommand("rasterize", "Rasterize an OSM file into a PLTL tile");
    std::string osm_in, tile_out = "tile.pltl", center_text;
    double gsd = 0.5, size_m = 128.0;
    int line_width = 1;
    rast->add_option("osm", osm_in, "OSM XML file")->required();
    rast->add_option("--gsd", gsd, "Cell size in meters")->capture_default_str();
    rast->add_option("--size", size_m, "Tile side in meters")->capture_default_str();
    rast->add_option("--center", center_text, "Tile center lon,lat (default: center of the nodes' extent)");
    rast->add_option("--line-width", line_width, "Trace width in cells for every line class")->capture_default_str();
    rast->add_option("-o,--out", tile_out, "Output tile")->capture_default_str();

    auto* enc = app.add_subcommand("encode", "Encode a tile into a PLNM neural map");
    std::string tile_in, map_out = "map.plnm";
    enc->add_option("tile", tile_in, "PLTL tile")->required();
    enc->add_option("-o,--out", map_out, "Output map")->capture_default_str();

    auto* loc = app.add_subcommand("localize", "Score an observation against a map");
    std::string loc_map, loc_obs, prior_text, loc_out = "volume.plpv", backend_name = "fourier";
    double prior_radius = -1.0;
    int loc_k = 512, loc_top = 3;
    LiftArgs lift;
    loc->add_option("map", loc_map, "PLNM map")->required();
    loc->add_option("observation", loc_obs, "PLBV grid or PLCF column features")->required();
    loc->add_option("--prior", prior_text, "Prior center x,y in map meters");
    loc->add_option("--radius", prior_radius, "Prior radius in meters");
    loc->add_option("--k", loc_k, "Rotation count K")->capture_default_str()->check(CLI::PositiveNumber);
    loc->add_option("--backend", backend_name, "fourier or naive")->capture_default_str();
    loc->add_option("--top", loc_top, "Number of local modes reported")->capture_default_str();
    loc->add_option("-o,--out", loc_out, "Output posterior volume")->capture_default_str();
    add_lift_options(loc, lift);

    auto* fuse = app.add_subcommand("fuse", "Fuse the measurement volumes of a trajectory");
    std::string traj_in, fuse_out = "fused.plpv", fuse_mode = "joint";
    double sigma_xy = 0.5, sigma_theta_deg = 1.0;
    int fuse_top = 3;
    fuse->add_option("trajectory", traj_in, "Trajectory file")->required();
    fuse->add_option("--mode", fuse_mode, "joint or markov")->capture_default_str();
    fuse->add_option("--sigma-xy", sigma_xy, "Markov motion noise in meters")->capture_default_str();
    fuse->add_option("--sigma-theta", sigma_theta_deg, "Markov motion noise in degrees")->capture_default_str();
    fuse->add_option("--top", fuse_top, "Number of local modes reported")->capture_default_str();
    fuse->add_option("-o,--out", fuse_out, "Output fused volume")->capture_default_str();

    auto* syn = app.add_subcommand("synth", "Generate a synthetic world and observations");
    std::uint64_t syn_seed = 1;
    std::string syn_out;
    int syn_views = 8, syn_k = 64;
    BevSpec syn_bev;
    std::optional<double> syn_sigma, syn_dropout;
    syn->add_option("--seed", syn_seed, "World and observation seed")->required();
    syn->add_option("-o,--out", syn_out, "Scenario directory (default: scenario-<seed>)");
    syn->add_option("--views", syn_views, "Number of observations")->capture_default_str();
    syn->add_option("--k", syn_k, "Rotation count for poses and evaluation")->capture_default_str();
    syn->add_option("--L", syn_bev.L, "BEV lateral cells")->capture_default_str();
    syn->add_option("--D", syn_bev.D, "BEV depth cells")->capture_default_str();
    syn->add_option("--noise", syn_sigma, "Noise in feature-std multiples");
    syn->add_option("--dropout", syn_dropout, "Confident-cell dropout probability");

    auto* ev = app.add_subcommand("eval", "Localize every observation of a scenario and report recall");
    std::string scen_dir, report_out;
    int eval_k = 0;
    ev->add_option("scenario", scen_dir, "Scenario directory")->required();
    ev->add_option("--k", eval_k, "Rotation count (default: the scenario's)");
    ev->add_option("-o,--out", report_out, "Report file (default: stdout)");

    auto* heat = app.add_subcommand("heatmap", "Render the heading marginal of a volume as a PGM image");
    std::string vol_in, heat_out = "heatmap.pgm";
    heat->add_option("volume", vol_in, "PLPV volume")->required();
    heat->add_option("-o,--out", heat_out, "Output image")->capture_default_str();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        const Settings settings = load_settings(config_path);
        const ClassTable& table = settings.table();

        if (*fetch) {
            osm::FetchOptions opt;
            if (!endpoint.empty()) opt.endpoint = endpoint;
            opt.cache_dir = cache_dir;
            opt.timeout_s = fetch_timeout;
            auto res = osm::fetch_overpass(osm::parse_bbox(bbox_text), opt);
            if (!fetch_out.empty()) {
                std::ofstream o(fetch_out, std::ios::binary | std::ios::trunc);
                if (!o) throw Error("cannot create '" + fetch_out + "'");
                o << res.data;
            }
            out << (fetch_out.empty() ? res.cache_file.string() : fetch_out) << (res.from_cache ? " (cached)" : "")
                << "\n";
        } else if (*rast) {
            if (!(gsd > 0.0) || !(size_m > 0.0)) throw DomainError("--gsd and --size must be positive");
            if (line_width < 1 || line_width % 2 == 0) throw ConfigError("--line-width must be odd and >= 1");
            const auto graph = osm::parse_xml_file(osm_in);
            Datum datum;
            if (!center_text.empty()) {
                Vec2 c = parse_xy(center_text, "--center");
                datum = Datum(c.x, c.y);
            } else {
                if (graph.nodes.empty()) throw DomainError("OSM file has no nodes; pass --center");
                double w = 1e9, s = 1e9, e = -1e9, n = -1e9;
                for (const auto& [id, node] : graph.nodes) {
                    w = std::min(w, node.lon);
                    e = std::max(e, node.lon);
                    s = std::min(s, node.lat);
                    n = std::max(n, node.lat);
                }
                datum = Datum((w + e) / 2.0, (s + n) / 2.0);
            }
            const auto geoms = osm::build_geometries(graph, datum, table);
            const int cells = static_cast<int>(std::lround(size_m / gsd));
            RasterOptions ropt;
            ropt.threads = threads;
            for (int c = 1; c < table.index_count(GeometryKind::Line); ++c) ropt.line_width[c] = line_width;
            const auto raster = rasterize(geoms, GridSpec::centered(gsd, cells, cells), table, datum, ropt);
            save_tile(raster, fs::path(tile_out));
            out << tile_out << " " << raster_digest(raster) << "\n";
            for (const auto& sk : geoms.skipped) out << "skipped " << sk.type << " " << sk.id << ": " << sk.reason << "\n";
        } else if (*enc) {
            auto tile = load_tile(fs::path(tile_in), &table);
            for (const auto& w : tile.warnings) err << "warning: " << w << "\n";
            const auto map = encode_analytic(tile.raster, table, settings.encoder);
            save_neural_map(map, fs::path(map_out));
            out << map_out << " " << map.spec.width() << "x" << map.spec.height() << "x" << map.channels() << "\n";
        } else if (*loc) {
            const auto map = load_neural_map(fs::path(loc_map));
            const auto bev = load_observation(loc_obs, lift.sigma_min, lift.sigma_max, map.spec.delta(), lift.L, lift.D);
            LocalizeOptions opt;
            opt.score = {loc_k, parse_backend(backend_name), threads};
            opt.top_modes = loc_top;
            if (!prior_text.empty() || prior_radius >= 0.0) {
                if (prior_text.empty() || prior_radius < 0.0) throw ConfigError("--prior and --radius go together");
                opt.prior = PriorDisk{parse_xy(prior_text, "--prior"), prior_radius};
            }
            const auto res = localize(map, bev, opt);
            save_volume(res.posterior, fs::path(loc_out));
            out << localization_json(res) << "\n";
        } else if (*fuse) {
            FusionMode mode;
            if (fuse_mode == "joint") mode = FusionMode::Joint;
            else if (fuse_mode == "markov") mode = FusionMode::Markov;
            else throw ConfigError("unknown fusion mode '" + fuse_mode + "'");
            const auto frames = load_trajectory(traj_in);
            MotionNoise noise{sigma_xy, sigma_theta_deg * std::numbers::pi / 180.0};
            Localization res;
            res.posterior = fuse_trajectory(frames, mode, noise, threads);
            res.estimate = argmax_pose(res.posterior);
            try {
                res.covariance = covariance(res.posterior, res.estimate.pose);
            } catch (const DegenerateError&) {
            }
            res.modes = local_modes(res.posterior, fuse_top);
            save_volume(res.posterior, fs::path(fuse_out));
            out << localization_json(res) << "\n";
        } else if (*syn) {
            const fs::path dir = syn_out.empty() ? fs::path("scenario-" + std::to_string(syn_seed)) : fs::path(syn_out);
            if (syn_views < 1 || syn_k < 1) throw DomainError("--views and --k must be >= 1");
            fs::create_directories(dir / "observations");
            const WorldSpec ws = settings.world.value_or(WorldSpec{});
            const auto world = gen_world(syn_seed, ws, table);
            save_tile(world.raster, dir / "world.pltl");
            const auto map = encode_analytic(world.raster, table, settings.encoder);
            save_neural_map(map, dir / "map.plnm");
            ObservationNoise noise = settings.noise;
            if (syn_sigma) noise.sigma = *syn_sigma;
            if (syn_dropout) noise.dropout = *syn_dropout;
            syn_bev.delta = ws.delta;
            syn_bev.half_angle = settings.half_angle_deg * std::numbers::pi / 180.0;
            std::ofstream sc(dir / "scenario.txt", std::ios::trunc);
            if (!sc) throw Error("cannot create '" + (dir / "scenario.txt").string() + "'");
            sc << "# planloc synthetic scenario, seed " << syn_seed << "\n";
            sc << "map = map.plnm\nrotations = " << syn_k << "\n";
            Rng rng(syn_seed);
            const double margin = std::min(16.0, ws.extent_m / 4.0);
            for (int v = 0; v < syn_views; ++v) {
                const Pose2 gt = random_grid_pose(map, syn_k, margin, rng);
                const std::uint64_t obs_seed = rng.next();
                const auto bev = render_observation(map, gt, syn_bev, noise, obs_seed);
                std::ostringstream name;
                name << "observations/view_" << std::setw(3) << std::setfill('0') << v << ".plbv";
                save_bev(bev, dir / name.str());
                sc << "observation = view_" << v << " " << obs_seed << " " << fmt(gt.x()) << " " << fmt(gt.y()) << " "
                   << fmt(gt.theta()) << " " << name.str() << "\n";
            }
            if (!sc) throw Error("failed writing the scenario file");
            out << dir.string() << " " << raster_digest(world.raster) << "\n";
        } else if (*ev) {
            const auto sc = load_scenario(scen_dir);
            const auto map = load_neural_map(sc.map);
            std::ofstream file;
            if (!report_out.empty()) {
                file.open(report_out, std::ios::trunc);
                if (!file) throw Error("cannot create '" + report_out + "'");
            }
            std::ostream& rep = report_out.empty() ? out : file;
            LocalizeOptions opt;
            opt.score = {eval_k > 0 ? eval_k : sc.rotations, Backend::Fourier, threads};
            opt.top_modes = 1;
            std::vector<PoseErrors> errors;
            for (const auto& o : sc.observations) {
                const auto bev = load_bev(o.path);
                const auto res = localize(map, bev, opt);
                TrialRecord t{o.id, o.seed, o.gt, res.estimate.pose, pose_errors(res.estimate.pose, o.gt)};
                errors.push_back(t.errors);
                rep << trial_json(t) << "\n";
            }
            const auto table_r = recall_table(errors);
            rep << summary_json(table_r, errors.size()) << "\n";
            if (!report_out.empty()) out << report_out << "\n";
        } else if (*heat) {
            write_heatmap(load_volume(fs::path(vol_in)), heat_out);
            out << heat_out << "\n";
        }
    } catch (const std::exception& e) {
        err << "planloc: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace planloc
