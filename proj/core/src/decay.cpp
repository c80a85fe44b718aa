#include "shadowlab/decay.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "shadowlab/rng.hpp"

namespace shadowlab {

RegionStats region_stats(const Image& image, const Mask& region) {
    if (!same_size(image, region))
        throw std::invalid_argument("region_stats: image/region dimension mismatch");
    if (!is_hard(region)) throw std::invalid_argument("region_stats: region must be hard");

    RegionStats stats;
    std::array<double, 3> sum{};
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            if (region.at(x, y) == 0.0) continue;
            ++stats.pixel_count;
            for (int c = 0; c < 3; ++c) sum[c] += image.at(x, y, c);
        }
    if (stats.pixel_count < kMinRegionPixels)
        throw std::runtime_error("region_stats: region has fewer than " +
                                 std::to_string(kMinRegionPixels) + " pixels");

    for (int c = 0; c < 3; ++c) stats.mean[c] = sum[c] / stats.pixel_count;

    std::array<double, 3> sq{};
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            if (region.at(x, y) == 0.0) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = image.at(x, y, c) - stats.mean[c];
                sq[c] += d * d;
            }
        }
    for (int c = 0; c < 3; ++c) stats.std[c] = std::sqrt(sq[c] / stats.pixel_count);
    return stats;
}

DecayParams estimate_decay(const Image& image, const Mask& mask, const MorphConfig& cfg) {
    const CoreRing regions = core_and_ring(mask, cfg);
    const RegionStats core = region_stats(image, regions.core);
    const RegionStats ring = region_stats(image, regions.ring);

    DecayParams params;
    for (int c = 0; c < 3; ++c) {
        if (ring.std[c] <= 1e-6)
            throw std::runtime_error("estimate_decay: flat lit region, unidentifiable scale");
        params.w[c] = core.std[c] / ring.std[c];
        params.b[c] = core.mean[c] - params.w[c] * ring.mean[c];
    }
    return params;
}

bool acceptable_library_entry(const DecayParams& params, std::string* reason) {
    for (int c = 0; c < 3; ++c) {
        if (!std::isfinite(params.w[c]) || !std::isfinite(params.b[c])) {
            if (reason) *reason = "non-finite estimate";
            return false;
        }
        if (params.w[c] <= 0.0 || params.w[c] > 2.0) {
            if (reason)
                *reason = "w[" + std::to_string(c) + "] = " + std::to_string(params.w[c]) +
                          " outside (0, 2]";
            return false;
        }
        if (std::abs(params.b[c]) > 1.0) {
            if (reason)
                *reason = "b[" + std::to_string(c) + "] = " + std::to_string(params.b[c]) +
                          " outside [-1, 1]";
            return false;
        }
    }
    return true;
}

namespace {

void check_entry_invariants(const DecayParams& p, std::size_t index) {
    for (int c = 0; c < 3; ++c) {
        if (!std::isfinite(p.w[c]) || !std::isfinite(p.b[c]) || p.w[c] <= 0.0)
            throw std::runtime_error("param library: entry " + std::to_string(index) +
                                     " violates w > 0 / finiteness");
    }
}

}  // namespace

void save_library(const ParamLibrary& library, const std::string& path) {
    nlohmann::json doc;
    doc["version"] = library.version;
    doc["entries"] = nlohmann::json::array();
    for (const LibraryEntry& e : library.entries) {
        doc["entries"].push_back({{"w", {e.params.w[0], e.params.w[1], e.params.w[2]}},
                                  {"b", {e.params.b[0], e.params.b[1], e.params.b[2]}},
                                  {"source", e.source}});
    }

    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_library: cannot open " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("save_library: write failed for " + path);
}

ParamLibrary load_library(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_library: cannot open " + path);

    ParamLibrary lib;
    try {
        const nlohmann::json doc = nlohmann::json::parse(in);
        const std::string version = doc.at("version").get<std::string>();
        if (version != lib.version)
            throw std::runtime_error("load_library: unsupported version '" + version + "'");
        for (const auto& item : doc.at("entries")) {
            LibraryEntry e;
            for (int c = 0; c < 3; ++c) {
                e.params.w[c] = item.at("w").at(c).get<double>();
                e.params.b[c] = item.at("b").at(c).get<double>();
            }
            e.source = item.at("source").get<std::string>();
            check_entry_invariants(e.params, lib.entries.size());
            lib.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& err) {
        throw std::runtime_error("load_library: malformed library " + path + ": " + err.what());
    }
    return lib;
}

DecayParams sample_params(const ParamLibrary& library, unsigned long long seed) {
    if (library.entries.empty())
        throw std::invalid_argument("sample_params: library is empty");
    const std::uint64_t pick = splitmix64(seed) % library.entries.size();
    return library.entries[static_cast<std::size_t>(pick)].params;
}

Image apply_de_exposure(const Image& free, const Mask& soft_mask, const DecayParams& params) {
    if (!same_size(free, soft_mask))
        throw std::invalid_argument("apply_de_exposure: image/mask dimension mismatch");

    Image out(free.width, free.height);
    for (int y = 0; y < free.height; ++y)
        for (int x = 0; x < free.width; ++x) {
            const double m = soft_mask.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const double v = free.at(x, y, c);
                if (m == 0.0) {
                    out.at(x, y, c) = v;  // untouched background stays bit-identical
                } else {
                    const double shadowed = clip_unit(params.w[c] * v + params.b[c]);
                    out.at(x, y, c) = v * (1.0 - m) + shadowed * m;
                }
            }
        }
    return out;
}

}  // namespace shadowlab
