#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uareg {

struct ManifestEntry {
    std::string path;     // audio file, relative to the manifest's directory or absolute
    double offset_s = 0.0;
    std::string label;
    std::string record_id;
    std::string split;    // train | val | test
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names; // sorted, unique

    int label_index(const std::string& label) const;
};

// record_id -> "train"|"test". The key "*" assigns every record not listed
// explicitly, for corpora whose training side is declared as "everything else".
struct SplitSpec {
    std::map<std::string, std::string> assign;
    std::string default_split; // empty when no "*" key

    static SplitSpec from_file(const std::string& path);
    // Returns "train"/"test", or "" when the record is not covered.
    std::string lookup(const std::string& record_id) const;
};

struct BuildOptions {
    double seg_len_s = 30.0;
    double overlap_s = 15.0;
    double val_fraction = 0.15;
    std::uint64_t seed = 0;
    bool record_level_val = false; // default draws validation per segment
};

struct BuildReport {
    std::vector<std::string> warnings; // records present on disk but absent from the split spec
};

// labeled_dirs: (label, directory of WAV files). Scans each directory,
// segments every covered record on the configured grid, assigns splits from
// the spec, then promotes val_fraction of the training side to "val".
Manifest build_manifest(const std::vector<std::pair<std::string, std::string>>& labeled_dirs,
                        const SplitSpec& spec, const BuildOptions& opts, BuildReport* report);

// Record ids that appear in both {train,val} and {test}; empty means the
// split is track-disjoint.
std::vector<std::string> validate_split(const Manifest& manifest);

void save_manifest(const Manifest& manifest, const std::string& path);
Manifest load_manifest(const std::string& path);

} // namespace uareg
