#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ecgt2t/signal.hpp"

namespace ecgt2t {

enum class Split : int { Train = 0, Val = 1, Test = 2 };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
    std::string id;
    std::string path;  // as stored in the manifest file (usually relative)
    Condition label = Condition::Normal;
    std::optional<Split> split;

    std::filesystem::path resolved;  // absolute, filled by load_manifest
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    int fs = 0;  // 0 = unknown; informative only, derived from the records

    void validate() const;  // unique ids
};

// Binary record file: magic "ECGR1\0", u32 fs, u8 label code, u8 lead_count,
// u32 samples_per_lead, then lead_count contiguous blocks of little-endian
// f32 samples ordered by LeadId index. Leads must therefore form a prefix of
// the LeadId order (I, II, ..).
void save_record(const EcgRecord& record, const std::filesystem::path& path);
EcgRecord load_record(const std::filesystem::path& path);

// CSV import: one metadata line "fs=<Hz>,label=<tag>", a header row of lead
// names, then one column per lead.
EcgRecord load_record_csv(const std::filesystem::path& path);

// Manifest file: JSON array of {id, path, label, split?}. Relative paths are
// resolved against the manifest's directory on load.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Deterministic per-class split. Within each label class records are
// shuffled by `seed` and apportioned by `ratios`, remainders going to
// train, then val, then test. Every present class needs >= 10 records.
DatasetManifest stratified_split(const DatasetManifest& manifest,
                                 std::array<int, 3> ratios, uint64_t seed);

EcgRecord load_entry(const ManifestEntry& entry);
std::vector<EcgRecord> load_split(const DatasetManifest& manifest, Split split);

}  // namespace ecgt2t
