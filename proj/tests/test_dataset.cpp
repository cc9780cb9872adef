#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "ecgt2t/dataset.hpp"
#include "ecgt2t/synth.hpp"

using namespace ecgt2t;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("ecgt2t-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

EcgRecord sample_record() {
    return generate_record(BeatTemplate::standard(), Condition::Mi, 75, 5, 500, 77, "r0");
}

}  // namespace

TEST_CASE("binary record round trip is lossless") {
    TempDir tmp;
    auto rec = sample_record();
    const auto path = tmp.path / "r0.ecgr";
    save_record(rec, path);
    auto back = load_record(path);
    CHECK(back.fs == rec.fs);
    CHECK(back.label == rec.label);
    CHECK(back.record_id == "r0");
    for (int li = 0; li < kNumLeads; ++li) CHECK(back.leads[li] == rec.leads[li]);
}

TEST_CASE("payload size follows the format") {
    TempDir tmp;
    EcgRecord rec;
    rec.fs = 500;
    rec.record_id = "size";
    for (auto& l : rec.leads) l.assign(5000, 0.25f);
    const auto path = tmp.path / "size.ecgr";
    save_record(rec, path);
    // magic(6) + fs(4) + label(1) + lead_count(1) + samples(4) = 16 header bytes
    CHECK(fs::file_size(path) == 16 + 12ull * 5000 * 4);
}

TEST_CASE("wrong magic is a FormatError") {
    TempDir tmp;
    const auto path = tmp.path / "bad.ecgr";
    std::ofstream(path) << "NOTECG-this-is-not-a-record-file-at-all";
    try {
        load_record(path);
        FAIL("expected FormatError");
    } catch (const Error& e) {
        CHECK(e.kind() == Err::FormatError);
    }
}

TEST_CASE("truncated payload is a FormatError") {
    TempDir tmp;
    auto rec = sample_record();
    const auto path = tmp.path / "trunc.ecgr";
    save_record(rec, path);
    fs::resize_file(path, fs::file_size(path) - 10);
    try {
        load_record(path);
        FAIL("expected FormatError");
    } catch (const Error& e) {
        CHECK(e.kind() == Err::FormatError);
    }
}

TEST_CASE("csv import") {
    TempDir tmp;
    const auto path = tmp.path / "r.csv";
    std::ofstream out(path);
    out << "fs=250,label=af\n";
    out << "I,II\n";
    out << "0.1,0.2\n0.3,0.4\n";
    out.close();
    auto rec = load_record_csv(path);
    CHECK(rec.fs == 250);
    CHECK(rec.label == Condition::Af);
    CHECK(rec[LeadId::I][1] == doctest::Approx(0.3f));
    CHECK(rec[LeadId::II][0] == doctest::Approx(0.2f));
}

TEST_CASE("manifest round trip resolves relative paths") {
    TempDir tmp;
    fs::create_directories(tmp.path / "records");
    auto rec = sample_record();
    save_record(rec, tmp.path / "records" / "a.ecgr");

    DatasetManifest m;
    m.entries.push_back({"a", "records/a.ecgr", Condition::Mi, Split::Train, {}});
    save_manifest(m, tmp.path / "manifest.json");
    auto back = load_manifest(tmp.path / "manifest.json");
    REQUIRE(back.entries.size() == 1);
    CHECK(back.entries[0].split == Split::Train);
    auto loaded = load_entry(back.entries[0]);
    CHECK(loaded.record_id == "a");
    CHECK(loaded[LeadId::V2] == rec[LeadId::V2]);
}

namespace {

DatasetManifest fake_manifest(int n_normal, int n_mi) {
    DatasetManifest m;
    for (int i = 0; i < n_normal; ++i) {
        m.entries.push_back({"n" + std::to_string(i), "x", Condition::Normal, {}, {}});
    }
    for (int i = 0; i < n_mi; ++i) {
        m.entries.push_back({"m" + std::to_string(i), "x", Condition::Mi, {}, {}});
    }
    return m;
}

std::map<Condition, std::array<int, 3>> split_counts(const DatasetManifest& m) {
    std::map<Condition, std::array<int, 3>> counts;
    for (const auto& e : m.entries) {
        REQUIRE(e.split.has_value());
        counts[e.label][static_cast<int>(*e.split)]++;
    }
    return counts;
}

}  // namespace

TEST_CASE("stratified split apportionment 60/40 at 7:1:2") {
    auto m = stratified_split(fake_manifest(60, 40), {7, 1, 2}, 123);
    auto counts = split_counts(m);
    CHECK(counts[Condition::Normal] == std::array<int, 3>{42, 6, 12});
    CHECK(counts[Condition::Mi] == std::array<int, 3>{28, 4, 8});
}

TEST_CASE("degenerate ratio puts everything in train") {
    auto m = stratified_split(fake_manifest(25, 15), {1, 0, 0}, 5);
    for (const auto& e : m.entries) CHECK(*e.split == Split::Train);
}

TEST_CASE("split determinism and partition property") {
    auto a = stratified_split(fake_manifest(33, 21), {7, 1, 2}, 99);
    auto b = stratified_split(fake_manifest(33, 21), {7, 1, 2}, 99);
    for (size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(*a.entries[i].split == *b.entries[i].split);
    }
    // remainder rule: per class each split count within 1 of the exact share
    auto counts = split_counts(a);
    for (const auto& [cond, c] : counts) {
        const double n = c[0] + c[1] + c[2];
        CHECK(std::abs(c[0] - n * 0.7) <= 1.0);
        CHECK(std::abs(c[1] - n * 0.1) <= 1.0);
        CHECK(std::abs(c[2] - n * 0.2) <= 1.0);
    }
}

TEST_CASE("class below 10 records is rejected") {
    try {
        stratified_split(fake_manifest(30, 9), {7, 1, 2}, 1);
        FAIL("expected ClassTooSmall");
    } catch (const Error& e) {
        CHECK(e.kind() == Err::ClassTooSmall);
    }
}
