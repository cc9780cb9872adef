#include "ecgt2t/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ecgt2t/rng.hpp"

namespace ecgt2t {

namespace {

constexpr char kMagic[6] = {'E', 'C', 'G', 'R', '1', '\0'};

void put_u32_le(std::string& buf, uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32_le(const unsigned char* p) {
    uint32_t bits = get_u32_le(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void put_f32_le(std::string& buf, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32_le(buf, bits);
}

// Fisher-Yates with our portable RNG; std::shuffle's draw sequence is
// implementation-defined.
template <class T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.bounded(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    fail(Err::InvalidArgument, "unknown split '" + name + "'");
}

void DatasetManifest::validate() const {
    std::map<std::string, int> seen;
    for (const auto& e : entries) {
        require(++seen[e.id] == 1, Err::InvalidArgument, "duplicate record id " + e.id);
    }
}

void save_record(const EcgRecord& record, const std::filesystem::path& path) {
    record.validate();
    const int count = record.lead_count();
    for (int i = 0; i < count; ++i) {
        require(record.has(static_cast<LeadId>(i)), Err::InvalidArgument,
                "record leads must form a prefix of the LeadId order");
    }
    const uint32_t samples = static_cast<uint32_t>(record.length());

    std::string buf;
    buf.reserve(16 + static_cast<size_t>(count) * samples * 4);
    buf.append(kMagic, 6);
    put_u32_le(buf, static_cast<uint32_t>(record.fs));
    buf.push_back(static_cast<char>(record.label));
    buf.push_back(static_cast<char>(count));
    put_u32_le(buf, samples);
    for (int i = 0; i < count; ++i) {
        for (float v : record.leads[i]) put_f32_le(buf, v);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Err::IoError, "cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(out.good(), Err::IoError, "short write to " + path.string());
}

EcgRecord load_record(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Err::IoError, "cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());

    require(data.size() >= 16, Err::FormatError, "file too small: " + path.string());
    require(std::memcmp(data.data(), kMagic, 6) == 0, Err::FormatError,
            "bad magic in " + path.string());
    const uint32_t fs = get_u32_le(p + 6);
    const uint8_t label = p[10];
    const uint8_t lead_count = p[11];
    const uint32_t samples = get_u32_le(p + 12);
    require(fs > 0, Err::FormatError, "zero sampling rate in " + path.string());
    require(label <= 2, Err::FormatError, "bad label code in " + path.string());
    require(lead_count >= 1 && lead_count <= kNumLeads, Err::FormatError,
            "bad lead count in " + path.string());
    require(samples >= 1, Err::FormatError, "zero-length leads in " + path.string());
    const size_t expected = 16 + static_cast<size_t>(lead_count) * samples * 4;
    require(data.size() == expected, Err::FormatError,
            "payload size mismatch in " + path.string());

    EcgRecord rec;
    rec.fs = static_cast<int>(fs);
    rec.label = static_cast<Condition>(label);
    rec.record_id = path.stem().string();
    size_t off = 16;
    for (int li = 0; li < lead_count; ++li) {
        auto& lead = rec.leads[li];
        lead.resize(samples);
        for (uint32_t k = 0; k < samples; ++k, off += 4) {
            lead[k] = get_f32_le(p + off);
        }
    }
    return rec;
}

EcgRecord load_record_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Err::IoError, "cannot open " + path.string());

    std::string meta_line;
    require(static_cast<bool>(std::getline(in, meta_line)), Err::FormatError,
            "missing metadata line in " + path.string());
    int fs = 0;
    std::string label_tag;
    {
        std::stringstream ss(meta_line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            auto eq = field.find('=');
            require(eq != std::string::npos, Err::FormatError,
                    "bad metadata field '" + field + "'");
            std::string key = field.substr(0, eq);
            std::string val = field.substr(eq + 1);
            if (key == "fs") {
                fs = std::stoi(val);
            } else if (key == "label") {
                label_tag = val;
            } else {
                fail(Err::FormatError, "unknown metadata key '" + key + "'");
            }
        }
    }
    require(fs > 0, Err::FormatError, "metadata line must set fs");
    require(!label_tag.empty(), Err::FormatError, "metadata line must set label");

    std::string header;
    require(static_cast<bool>(std::getline(in, header)), Err::FormatError,
            "missing header row in " + path.string());
    std::vector<LeadId> order;
    {
        std::stringstream ss(header);
        std::string name;
        while (std::getline(ss, name, ',')) order.push_back(lead_from_name(name));
    }
    require(!order.empty(), Err::FormatError, "empty header row");

    EcgRecord rec;
    rec.fs = fs;
    rec.label = condition_from_name(label_tag);
    rec.record_id = path.stem().string();

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            require(col < order.size(), Err::FormatError, "row wider than header");
            rec[order[col]].push_back(std::stof(cell));
            ++col;
        }
        require(col == order.size(), Err::FormatError, "row narrower than header");
    }
    rec.validate();
    return rec;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    manifest.validate();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : manifest.entries) {
        nlohmann::json obj = {{"id", e.id}, {"path", e.path}, {"label", condition_name(e.label)}};
        if (e.split) obj["split"] = split_name(*e.split);
        arr.push_back(obj);
    }
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), Err::IoError, "cannot open " + path.string() + " for writing");
    out << arr.dump(2) << "\n";
    require(out.good(), Err::IoError, "short write to " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Err::IoError, "cannot open " + path.string());
    nlohmann::json arr;
    try {
        in >> arr;
    } catch (const nlohmann::json::exception& e) {
        fail(Err::FormatError, "manifest parse error: " + std::string(e.what()));
    }
    require(arr.is_array(), Err::FormatError, "manifest must be a JSON array");

    const auto base = std::filesystem::absolute(path).parent_path();
    DatasetManifest m;
    for (const auto& obj : arr) {
        ManifestEntry e;
        e.id = obj.at("id").get<std::string>();
        e.path = obj.at("path").get<std::string>();
        e.label = condition_from_name(obj.at("label").get<std::string>());
        if (obj.contains("split")) e.split = split_from_name(obj.at("split").get<std::string>());
        std::filesystem::path p(e.path);
        e.resolved = p.is_absolute() ? p : base / p;
        require(std::filesystem::exists(e.resolved), Err::IoError,
                "record file not found: " + e.resolved.string());
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

DatasetManifest stratified_split(const DatasetManifest& manifest,
                                 std::array<int, 3> ratios, uint64_t seed) {
    manifest.validate();
    require(!manifest.entries.empty(), Err::EmptyDataset, "manifest has no entries");
    const int total_ratio = ratios[0] + ratios[1] + ratios[2];
    require(ratios[0] >= 0 && ratios[1] >= 0 && ratios[2] >= 0 && total_ratio > 0,
            Err::InvalidArgument, "ratios must be non-negative with a positive sum");

    std::map<Condition, std::vector<size_t>> by_class;
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        by_class[manifest.entries[i].label].push_back(i);
    }
    for (const auto& [label, idx] : by_class) {
        require(idx.size() >= 10, Err::ClassTooSmall,
                std::string("class ") + condition_name(label) + " has fewer than 10 records");
    }

    DatasetManifest out = manifest;
    Rng rng = Rng::fork(seed, 3);
    for (auto& [label, idx] : by_class) {
        shuffle_vec(idx, rng);
        const size_t n = idx.size();
        std::array<size_t, 3> counts;
        size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            counts[s] = n * static_cast<size_t>(ratios[s]) / static_cast<size_t>(total_ratio);
            assigned += counts[s];
        }
        for (int s = 0; assigned < n; s = (s + 1) % 3) {  // remainder: train, val, test
            if (ratios[s] > 0) {
                ++counts[s];
                ++assigned;
            }
        }
        size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (size_t k = 0; k < counts[s]; ++k, ++pos) {
                out.entries[idx[pos]].split = static_cast<Split>(s);
            }
        }
    }
    return out;
}

EcgRecord load_entry(const ManifestEntry& entry) {
    auto p = entry.resolved.empty() ? std::filesystem::path(entry.path) : entry.resolved;
    EcgRecord rec = load_record(p);
    rec.record_id = entry.id;
    require(rec.label == entry.label, Err::FormatError,
            "label mismatch between manifest and record " + entry.id);
    return rec;
}

std::vector<EcgRecord> load_split(const DatasetManifest& manifest, Split split) {
    std::vector<EcgRecord> out;
    for (const auto& e : manifest.entries) {
        if (e.split && *e.split == split) out.push_back(load_entry(e));
    }
    return out;
}

}  // namespace ecgt2t
