#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <sys/file.h>
#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "planloc/digest.hpp"
#include "planloc/error.hpp"
#include "planloc/osm.hpp"

namespace planloc::osm {

namespace {

// Advisory lock on a sidecar file: shared for readers, exclusive for the
// single writer.
class FileLock {
public:
    FileLock(const std::filesystem::path& path, bool exclusive) {
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) throw TransportError("cannot open cache lock '" + path.string() + "'");
        if (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
            ::close(fd_);
            throw TransportError("cannot lock cache file '" + path.string() + "'");
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

std::string bbox_key(const BBox& b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.7f,%.7f,%.7f,%.7f", b.west, b.south, b.east, b.north);
    return buf;
}

struct Endpoint {
    std::string scheme_host_port;
    std::string path;
};

Endpoint split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("endpoint '" + url + "' lacks a scheme");
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::optional<std::string> read_cache(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

BBox parse_bbox(std::string_view text) {
    BBox b;
    std::string s(text);
    char extra = 0;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf%c", &b.west, &b.south, &b.east, &b.north, &extra) != 4) {
        throw DomainError("bbox must be 'west,south,east,north', got '" + s + "'");
    }
    return b;
}

std::string overpass_query(const BBox& b, int timeout_s) {
    char box[160];
    // Overpass boxes are (south, west, north, east).
    std::snprintf(box, sizeof box, "%.7f,%.7f,%.7f,%.7f", b.south, b.west, b.north, b.east);
    std::ostringstream q;
    q << "[out:xml][timeout:" << timeout_s << "];(node(" << box << ");way(" << box << ");relation("
      << box << "););(._;>;);out body;";
    return q.str();
}

std::string default_overpass_endpoint() {
    if (const char* env = std::getenv("PLANLOC_OVERPASS_URL"); env && *env) return env;
    return "https://overpass-api.de/api/interpreter";
}

std::filesystem::path cache_path(const BBox& bbox, const std::filesystem::path& cache_dir) {
    return cache_dir / (to_hex(sha256(bbox_key(bbox))) + ".osm");
}

FetchResult fetch_overpass(const BBox& bbox, const FetchOptions& opt) {
    if (!(bbox.east > bbox.west) || !(bbox.north > bbox.south)) {
        throw DomainError("degenerate bbox " + bbox_key(bbox));
    }
    if (opt.max_attempts < 1) throw DomainError("max_attempts must be >= 1");

    FetchResult result;
    std::filesystem::create_directories(opt.cache_dir);
    result.cache_file = cache_path(bbox, opt.cache_dir);
    auto lock_file = result.cache_file;
    lock_file += ".lock";

    {
        FileLock lock(lock_file, false);
        if (auto cached = read_cache(result.cache_file)) {
            result.data = std::move(*cached);
            result.from_cache = true;
            return result;
        }
    }

    auto [host, path] = split_url(opt.endpoint);
    httplib::Client client(host);
    auto secs = static_cast<time_t>(opt.timeout_s);
    auto usecs = static_cast<time_t>((opt.timeout_s - double(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto sleep = opt.sleep ? opt.sleep : [](double s) {
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
    };
    const std::string body =
        "data=" + httplib::detail::encode_query_param(overpass_query(bbox, static_cast<int>(opt.timeout_s)));

    std::string last_error;
    bool all_throttled = true;
    double wait = opt.backoff_base_s;
    for (int attempt = 1; attempt <= opt.max_attempts; ++attempt) {
        ++result.network_calls;
        auto res = client.Post(path, body, "application/x-www-form-urlencoded");
        if (res && res->status == 200) {
            FileLock lock(lock_file, true);
            auto tmp = result.cache_file;
            tmp += ".tmp";
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                out.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
                if (!out) throw TransportError("cannot write cache file '" + tmp.string() + "'");
            }
            std::filesystem::rename(tmp, result.cache_file);
            result.data = std::move(res->body);
            return result;
        }

        bool transient = true;
        if (!res) {
            all_throttled = false;
            last_error = "connection failed: " + httplib::to_string(res.error());
        } else if (res->status == 429) {
            last_error = "HTTP 429 Too Many Requests";
        } else {
            all_throttled = false;
            last_error = "HTTP " + std::to_string(res->status);
            transient = res->status >= 500 || res->status == 408;
        }
        if (!transient) break;
        if (attempt < opt.max_attempts) {
            sleep(wait);
            wait *= opt.backoff_factor;
        }
    }
    if (all_throttled) {
        throw ThrottledError("Overpass throttled the request after " +
                             std::to_string(result.network_calls) + " attempt(s): " + last_error);
    }
    throw TransportError("Overpass request failed after " + std::to_string(result.network_calls) +
                         " attempt(s): " + last_error);
}

}  // namespace planloc::osm
