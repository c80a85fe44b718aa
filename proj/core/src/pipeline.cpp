#include "shadowlab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "shadowlab/png_io.hpp"
#include "shadowlab/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace shadowlab {

namespace {

// Snap to the 8-bit grid with the same rounding save_mask_png uses, so the
// in-memory mask equals the decoded value of the mask file we write.
Mask quantize_mask(const Mask& m) {
    Mask out = m;
    for (double& v : out.data)
        v = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5) / 255.0;
    return out;
}

}  // namespace

SynthesisResult synthesize_triplet(const Image& free, const Mask& pseudo_mask,
                                   const ParamLibrary& library, std::uint64_t seed,
                                   const GuidedFilterConfig& gf_cfg) {
    if (!same_size(free, pseudo_mask))
        throw std::invalid_argument("synthesize_triplet: image/mask size mismatch");
    if (!is_hard(pseudo_mask))
        throw std::invalid_argument("synthesize_triplet: pseudo-mask must be hard");
    if (library.entries.empty())
        throw std::invalid_argument("synthesize_triplet: empty parameter library");

    SynthesisResult result;
    long foreground = 0;
    for (double v : pseudo_mask.data) foreground += v != 0.0;
    if (foreground == 0)
        result.warning = "pseudo-mask has no foreground; output equals input";
    else if (foreground < kMinRegionPixels)
        result.warning = "pseudo-mask under " + std::to_string(kMinRegionPixels) +
                         " px; decay estimation on this triplet will not be possible";

    result.soft_mask = quantize_mask(guided_filter(free, pseudo_mask, gf_cfg));
    result.params = sample_params(library, seed);
    result.shadowed = apply_de_exposure(free, result.soft_mask, result.params);
    return result;
}

namespace {

json params_to_json(const DecayParams& p) {
    return {{"w", p.w}, {"b", p.b}};
}

DecayParams params_from_json(const json& j) {
    DecayParams p;
    for (int c = 0; c < 3; ++c) {
        p.w[c] = j.at("w").at(c).get<double>();
        p.b[c] = j.at("b").at(c).get<double>();
    }
    return p;
}

struct ItemOutcome {
    bool ok = false;
    TripletRecord record;
    std::string reason;
};

ItemOutcome process_item(const fs::path& free_path, const fs::path& mask_path,
                         const fs::path& out_dir, const ParamLibrary& library,
                         std::uint64_t item_seed, const BatchConfig& cfg) {
    ItemOutcome outcome;
    const std::string name = free_path.filename().string();
    outcome.record.id = free_path.stem().string();
    try {
        if (!fs::exists(mask_path))
            throw std::runtime_error("mask not found: " + mask_path.string());
        const Image free = load_image_png(free_path.string());
        const Mask pseudo = load_mask_png(mask_path.string());

        const SynthesisResult syn =
            synthesize_triplet(free, pseudo, library, item_seed, cfg.gf);

        outcome.record.free_path = "free/" + name;
        outcome.record.shadow_path = "shadow/" + name;
        outcome.record.mask_path = "mask/" + name;
        outcome.record.params = syn.params;
        outcome.record.seed = item_seed;
        outcome.record.gf_config = cfg.gf;

        save_image_png(free, (out_dir / "free" / name).string());
        save_image_png(syn.shadowed, (out_dir / "shadow" / name).string());
        save_mask_png(syn.soft_mask, (out_dir / "mask" / name).string());
        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.reason = e.what();
    }
    return outcome;
}

}  // namespace

Manifest run_batch(const std::string& free_dir, const std::string& mask_dir,
                   const std::string& library_path, const std::string& out_dir,
                   std::uint64_t global_seed, const BatchConfig& cfg) {
    if (cfg.jobs < 1) throw std::invalid_argument("run_batch: jobs must be >= 1");

    // An unreadable library aborts before anything is written.
    const ParamLibrary library = load_library(library_path);

    if (!fs::is_directory(free_dir))
        throw std::runtime_error("run_batch: not a directory: " + free_dir);
    std::vector<fs::path> inputs;
    for (const auto& entry : fs::directory_iterator(free_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            inputs.push_back(entry.path());
    std::sort(inputs.begin(), inputs.end(),
              [](const fs::path& a, const fs::path& b) {
                  return a.filename().string() < b.filename().string();
              });

    const fs::path out(out_dir);
    fs::create_directories(out / "free");
    fs::create_directories(out / "shadow");
    fs::create_directories(out / "mask");

    std::vector<ItemOutcome> outcomes(inputs.size());
    const auto work = [&](std::size_t i) {
        const fs::path mask_path = fs::path(mask_dir) / inputs[i].filename();
        outcomes[i] = process_item(inputs[i], mask_path, out, library,
                                   splitmix64_at(global_seed, i), cfg);
    };

    const int jobs = static_cast<int>(
        std::min<std::size_t>(cfg.jobs, std::max<std::size_t>(inputs.size(), 1)));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < inputs.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < inputs.size();
                     i = next.fetch_add(1))
                    work(i);
            });
        for (std::thread& t : pool) t.join();
    }

    Manifest manifest;
    manifest.global_seed = global_seed;
    manifest.library_path = library_path;
    for (ItemOutcome& o : outcomes) {
        if (o.ok)
            manifest.records.push_back(std::move(o.record));
        else
            manifest.failures.push_back({o.record.id, o.reason});
    }
    save_manifest(manifest, (out / "manifest.json").string());
    return manifest;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
    json j;
    j["version"] = manifest.version;
    j["global_seed"] = manifest.global_seed;
    j["library_path"] = manifest.library_path;
    j["records"] = json::array();
    for (const TripletRecord& r : manifest.records)
        j["records"].push_back({{"id", r.id},
                                {"free", r.free_path},
                                {"shadow", r.shadow_path},
                                {"mask", r.mask_path},
                                {"params", params_to_json(r.params)},
                                {"seed", r.seed},
                                {"gf", {{"radius", r.gf_config.radius},
                                        {"epsilon", r.gf_config.epsilon}}}});
    j["failures"] = json::array();
    for (const ManifestFailure& f : manifest.failures)
        j["failures"].push_back({{"id", f.id}, {"reason", f.reason}});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("save_manifest: write failed: " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
    Manifest m;
    try {
        const json j = json::parse(in);
        if (j.at("version").get<std::string>() != m.version)
            throw std::runtime_error("load_manifest: unsupported version");
        m.global_seed = j.at("global_seed").get<std::uint64_t>();
        m.library_path = j.at("library_path").get<std::string>();
        std::set<std::string> seen;
        for (const json& rj : j.at("records")) {
            TripletRecord r;
            r.id = rj.at("id").get<std::string>();
            if (!seen.insert(r.id).second)
                throw std::runtime_error("load_manifest: duplicate record id " + r.id);
            r.free_path = rj.at("free").get<std::string>();
            r.shadow_path = rj.at("shadow").get<std::string>();
            r.mask_path = rj.at("mask").get<std::string>();
            r.params = params_from_json(rj.at("params"));
            r.seed = rj.at("seed").get<std::uint64_t>();
            r.gf_config.radius = rj.at("gf").at("radius").get<int>();
            r.gf_config.epsilon = rj.at("gf").at("epsilon").get<double>();
            m.records.push_back(std::move(r));
        }
        for (const json& fj : j.at("failures"))
            m.failures.push_back({fj.at("id").get<std::string>(),
                                  fj.at("reason").get<std::string>()});
    } catch (const json::exception&) {
        throw std::runtime_error("load_manifest: malformed manifest: " + path);
    }
    return m;
}

}  // namespace shadowlab
