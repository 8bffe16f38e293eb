#include "hansnet/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "hansnet/errors.hpp"
#include "hansnet/rng.hpp"
#include "json.hpp"

namespace hansnet {

namespace {

std::string case_name(const std::string& split, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%03zu", split.c_str(), i);
    return buf;
}

}  // namespace

std::vector<VolumeCase> generate_phantom_cases(const DataConfig& cfg, std::uint64_t seed) {
    cfg.phantom.validate();
    if (cfg.phantom.tumor_max == 0 && (cfg.train_slices + cfg.val_slices + cfg.test_slices) > 0)
        throw ConfigError("tumor slice quotas cannot be met with tumor_max = 0");
    struct Plan {
        const char* split;
        std::size_t quota;
        Stream stream;
    };
    const Plan plans[] = {{"train", cfg.train_slices, Stream::phantom_train},
                          {"val", cfg.val_slices, Stream::phantom_val},
                          {"test", cfg.test_slices, Stream::phantom_test}};
    std::vector<VolumeCase> cases;
    for (const auto& plan : plans) {
        std::size_t have = 0;
        for (std::size_t i = 0; have < plan.quota; ++i) {
            if (i > 100000) throw ConfigError("phantom generator cannot reach the tumor slice quota");
            Phantom p = generate_phantom(cfg.phantom, derive_seed(seed, plan.stream, i));
            auto slices = tumor_slice_filter(p.labels);
            if (slices.empty()) continue;
            if (slices.size() > plan.quota - have) slices.resize(plan.quota - have);
            have += slices.size();
            cases.push_back({case_name(plan.split, i), plan.split, std::move(p.image), std::move(p.labels),
                             std::move(slices)});
        }
    }
    return cases;
}

void save_cases(const std::filesystem::path& dir, const std::vector<VolumeCase>& cases, std::uint64_t seed) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    nlohmann::ordered_json j;
    j["format"] = "hansnet-phantoms";
    j["seed"] = seed;
    nlohmann::ordered_json vols = nlohmann::ordered_json::array();
    for (const auto& c : cases) {
        const std::string img = c.name + "_image.hvol", lab = c.name + "_labels.hvol";
        write_hvol(dir / img, c.image);
        write_hvol(dir / lab, c.labels);
        vols.push_back({{"name", c.name}, {"split", c.split}, {"image", img}, {"labels", lab}, {"tumor_slices", c.selected}});
    }
    j["volumes"] = vols;
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << j.dump(2) << "\n";
}

std::vector<VolumeCase> load_cases(const std::filesystem::path& dir, std::uint64_t seed) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no manifest.json in " + dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw IoError("malformed manifest: " + std::string(e.what()));
    }
    std::vector<VolumeCase> cases;
    bool any_split = false;
    try {
        for (const auto& v : j.at("volumes")) {
            VolumeCase c;
            c.name = v.at("name").get<std::string>();
            c.split = v.value("split", "");
            any_split = any_split || !c.split.empty();
            c.image = read_hvol(dir / v.at("image").get<std::string>());
            c.labels = read_hvol(dir / v.at("labels").get<std::string>());
            if (c.image.dims != c.labels.dims) throw IoError(c.name + ": image and labels differ in size");
            if (v.contains("tumor_slices"))
                c.selected = v.at("tumor_slices").get<std::vector<std::size_t>>();
            else
                c.selected = tumor_slice_filter(c.labels);
            cases.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest: " + std::string(e.what()));
    }
    if (!any_split && !cases.empty()) {
        const Split s = split_dataset(cases.size(), {0.7, 0.15, 0.15}, derive_seed(seed, Stream::split));
        for (auto i : s.train) cases[i].split = "train";
        for (auto i : s.val) cases[i].split = "val";
        for (auto i : s.test) cases[i].split = "test";
    }
    return cases;
}

std::vector<VolumeCase> obtain_cases(const Config& cfg) {
    if (!cfg.data.data_dir.empty()) return load_cases(cfg.data.data_dir, cfg.train.seed);
    return generate_phantom_cases(cfg.data, cfg.train.seed);
}

SliceSet slice_set(const std::vector<VolumeCase>& cases, const std::string& split, std::size_t size) {
    std::vector<SliceRef> refs;
    for (const auto& c : cases)
        if (c.split == split)
            for (auto z : c.selected) refs.push_back({&c.image, &c.labels, z});
    return make_slice_set(refs, size);
}

SliceSet volume_slices(const VolumeCase& c, std::size_t size) {
    std::vector<SliceRef> refs;
    for (std::size_t z = 0; z < c.image.dims[0]; ++z) refs.push_back({&c.image, &c.labels, z});
    return make_slice_set(refs, size);
}

}  // namespace hansnet
