#include "uareg/manifest.hpp"
#include "uareg/audio.hpp"
#include "uareg/common.hpp"
#include "uareg/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace uareg {

namespace {

bool valid_split_name(const std::string& s) { return s == "train" || s == "val" || s == "test"; }

std::vector<std::string> collect_class_names(const std::vector<ManifestEntry>& entries) {
    std::set<std::string> labels;
    for (const auto& e : entries) labels.insert(e.label);
    return {labels.begin(), labels.end()};
}

} // namespace

int Manifest::label_index(const std::string& label) const {
    const auto it = std::find(class_names.begin(), class_names.end(), label);
    if (it == class_names.end()) throw Error("unknown class label: " + label);
    return static_cast<int>(it - class_names.begin());
}

SplitSpec SplitSpec::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable split spec: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("malformed split spec " + path + ": " + e.what());
    }
    if (!j.is_object()) throw Error("split spec must be a JSON object: " + path);

    SplitSpec spec;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_string()) throw Error("split spec values must be strings: " + path);
        const std::string side = value.get<std::string>();
        if (side != "train" && side != "test")
            throw Error("split spec assigns '" + side + "' to " + key + "; expected train or test");
        if (key == "*")
            spec.default_split = side;
        else
            spec.assign[key] = side;
    }
    return spec;
}

std::string SplitSpec::lookup(const std::string& record_id) const {
    const auto it = assign.find(record_id);
    if (it != assign.end()) return it->second;
    return default_split;
}

Manifest build_manifest(const std::vector<std::pair<std::string, std::string>>& labeled_dirs,
                        const SplitSpec& spec, const BuildOptions& opts, BuildReport* report) {
    if (opts.val_fraction < 0.0 || opts.val_fraction >= 1.0)
        throw Error("validation fraction must lie in [0, 1)");

    Manifest manifest;
    std::unordered_map<std::string, std::string> record_label;

    for (const auto& [label, dir] : labeled_dirs) {
        if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
            if (ext == ".wav") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());

        for (const auto& file : files) {
            const std::string record_id = file.stem().string();
            const auto prev = record_label.find(record_id);
            if (prev != record_label.end()) {
                throw Error("record " + record_id + " appears under labels '" + prev->second +
                            "' and '" + label + "'");
            }
            record_label[record_id] = label;

            const std::string split = spec.lookup(record_id);
            if (split.empty()) {
                if (report)
                    report->warnings.push_back("record " + record_id + " (label " + label +
                                               ") not in split spec; skipped");
                continue;
            }

            const WavInfo info = wav_info(file.string());
            const std::int64_t count =
                segment_count(info.frames, info.sample_rate, opts.seg_len_s, opts.overlap_s);
            const std::int64_t hop =
                seconds_to_samples(opts.seg_len_s - opts.overlap_s, info.sample_rate);
            for (std::int64_t k = 0; k < count; ++k) {
                ManifestEntry e;
                e.path = file.string();
                e.offset_s = static_cast<double>(k * hop) / info.sample_rate;
                e.label = label;
                e.record_id = record_id;
                e.split = split;
                manifest.entries.push_back(std::move(e));
            }
        }
    }

    // Promote part of the training side to validation. Candidate order is the
    // deterministic scan order above, so the draw depends only on the corpus
    // listing and the seed.
    Rng rng(opts.seed);
    if (opts.record_level_val) {
        std::vector<std::string> train_records;
        std::unordered_set<std::string> seen;
        for (const auto& e : manifest.entries)
            if (e.split == "train" && seen.insert(e.record_id).second)
                train_records.push_back(e.record_id);
        const auto n_val = static_cast<std::size_t>(
            std::llround(static_cast<double>(train_records.size()) * opts.val_fraction));
        rng.shuffle(train_records);
        const std::unordered_set<std::string> val_records(train_records.begin(),
                                                          train_records.begin() + n_val);
        for (auto& e : manifest.entries)
            if (e.split == "train" && val_records.count(e.record_id)) e.split = "val";
    } else {
        std::vector<std::size_t> train_idx;
        for (std::size_t i = 0; i < manifest.entries.size(); ++i)
            if (manifest.entries[i].split == "train") train_idx.push_back(i);
        const auto n_val = static_cast<std::size_t>(
            std::llround(static_cast<double>(train_idx.size()) * opts.val_fraction));
        rng.shuffle(train_idx);
        for (std::size_t i = 0; i < n_val; ++i) manifest.entries[train_idx[i]].split = "val";
    }

    manifest.class_names = collect_class_names(manifest.entries);
    return manifest;
}

std::vector<std::string> validate_split(const Manifest& manifest) {
    std::set<std::string> dev, test;
    for (const auto& e : manifest.entries) {
        if (e.split == "test")
            test.insert(e.record_id);
        else
            dev.insert(e.record_id);
    }
    std::vector<std::string> leaked;
    for (const auto& id : dev)
        if (test.count(id)) leaked.push_back(id);
    return leaked;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest: " + path);
    for (const auto& e : manifest.entries) {
        json j{{"path", e.path},
               {"offset_s", e.offset_s},
               {"label", e.label},
               {"record_id", e.record_id},
               {"split", e.split}};
        out << j.dump() << '\n';
    }
    if (!out) throw Error("cannot write manifest: " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable manifest: " + path);
    Manifest manifest;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("malformed manifest line " + std::to_string(line_no) + " in " + path +
                        ": " + e.what());
        }
        ManifestEntry e;
        try {
            e.path = j.at("path").get<std::string>();
            e.offset_s = j.at("offset_s").get<double>();
            e.label = j.at("label").get<std::string>();
            e.record_id = j.at("record_id").get<std::string>();
            e.split = j.at("split").get<std::string>();
        } catch (const json::exception& ex) {
            throw Error("manifest line " + std::to_string(line_no) + " in " + path +
                        " missing field: " + ex.what());
        }
        if (!valid_split_name(e.split))
            throw Error("manifest line " + std::to_string(line_no) + " in " + path +
                        " has unknown split '" + e.split + "'");
        manifest.entries.push_back(std::move(e));
    }
    if (manifest.entries.empty()) throw Error("empty manifest: " + path);
    manifest.class_names = collect_class_names(manifest.entries);
    return manifest;
}

} // namespace uareg
