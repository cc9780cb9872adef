// Drives the built CLI binary end to end through a tiny pipeline. The
// binary path arrives via the ECGT2T_CLI environment variable set by ctest.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ecgt2t/dataset.hpp"

using namespace ecgt2t;
namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* p = std::getenv("ECGT2T_CLI");
    REQUIRE_MESSAGE(p != nullptr, "ECGT2T_CLI must point at the built binary");
    return p;
}

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("ecgt2t-cli-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("bad flags exit with 2") {
    CHECK(run("") == 2);
    CHECK(run("gen-data --out /tmp/x") == 2);          // missing required flags
    CHECK(run("definitely-not-a-command") == 2);
    CHECK(run("classify --data x --variant bogus --task mi --out o --seed 1") == 2);
}

TEST_CASE("tiny pipeline: gen-data, split ratios, determinism") {
    TempDir tmp;
    const auto d1 = (tmp.path / "d1").string();
    const auto d2 = (tmp.path / "d2").string();
    const std::string flags =
        " --n-normal 10 --n-mi 10 --n-af 0 --fs 500 --duration 6 --seed 9";
    REQUIRE(run("gen-data --out " + d1 + flags) == 0);
    REQUIRE(run("gen-data --out " + d2 + flags) == 0);

    auto manifest = load_manifest(fs::path(d1) / "manifest.json");
    CHECK(manifest.entries.size() == 20);
    int train = 0, val = 0, test = 0;
    for (const auto& e : manifest.entries) {
        REQUIRE(e.split.has_value());
        if (*e.split == Split::Train) ++train;
        if (*e.split == Split::Val) ++val;
        if (*e.split == Split::Test) ++test;
    }
    CHECK(train == 14);
    CHECK(val == 2);
    CHECK(test == 4);

    // byte-identical outputs under the same seed
    CHECK(slurp(fs::path(d1) / "manifest.json") == slurp(fs::path(d2) / "manifest.json"));
    auto first = manifest.entries.front();
    CHECK(slurp(fs::path(d1) / first.path) == slurp(fs::path(d2) / first.path));
}

TEST_CASE("train smoke, synth, assess, plot and exit codes") {
    TempDir tmp;
    const auto data = (tmp.path / "data").string();
    REQUIRE(run("gen-data --out " + data +
                " --n-normal 12 --n-mi 0 --n-af 0 --fs 500 --duration 6 --seed 4") == 0);

    const auto cfg_path = tmp.path / "cfg.json";
    std::ofstream(cfg_path) << R"({"seed": 11, "steps": 2, "batch_size": 2,
        "base_width": 2, "z_dim": 8, "window_len": 64, "eval_every": 1})";
    const auto ckpt = (tmp.path / "model.ckpt").string();
    const auto hist = (tmp.path / "hist.json").string();
    REQUIRE(run("train-gan --data " + data + " --mode t2t --config " + cfg_path.string() +
                " --out " + ckpt + " --history " + hist) == 0);

    // history rows = steps
    nlohmann::json hj = nlohmann::json::parse(slurp(hist));
    CHECK(hj["steps"].size() == 2);
    CHECK(hj["steps"][0].contains("d_loss"));
    CHECK(hj["steps"][0].contains("l_sty"));

    auto manifest = load_manifest(fs::path(data) / "manifest.json");
    const auto rec_path = manifest.entries.front().resolved.string();

    const auto synth_path = (tmp.path / "synth.ecgr").string();
    REQUIRE(run("synth --ckpt " + ckpt + " --record " + rec_path +
                " --t0 0 --delay 0.5 --out " + synth_path) == 0);
    auto synth_rec = load_record(synth_path);
    CHECK(synth_rec.lead_count() == 12);

    // assess ref == gen: zero errors
    const auto report_path = (tmp.path / "q.json").string();
    REQUIRE(run("assess --ref " + rec_path + " --gen " + rec_path +
                " --leads V1,V5 --out " + report_path) == 0);
    auto rj = nlohmann::json::parse(slurp(report_path));
    CHECK(rj["amp_pct"].get<double>() == 0.0);
    CHECK(rj["pos_ms"].get<double>() == 0.0);

    // missing lead in one record -> exit 6
    {
        auto rec = load_record(rec_path);
        EcgRecord two;
        two.fs = rec.fs;
        two.label = rec.label;
        two.record_id = "two";
        two[LeadId::I] = rec[LeadId::I];
        two[LeadId::II] = rec[LeadId::II];
        save_record(two, tmp.path / "two.ecgr");
        CHECK(run("assess --ref " + rec_path + " --gen " + (tmp.path / "two.ecgr").string() +
                  " --leads V1 --out " + (tmp.path / "nope.json").string()) == 6);
    }

    // plot: valid SVG with 12 panels and the right polyline density
    const auto svg_path = tmp.path / "fig.svg";
    REQUIRE(run("plot --ref " + rec_path + " --t2t " + synth_path + " --window 0.1 --out " +
                svg_path.string()) == 0);
    const std::string svg = slurp(svg_path);
    CHECK(svg.find("<svg") != std::string::npos);
    size_t panels = 0, pos = 0;
    while ((pos = svg.find("<g id=\"lead-", pos)) != std::string::npos) {
        ++panels;
        pos += 1;
    }
    CHECK(panels == 12);

    // s2e checkpoint passed to a t2t record still works; but synth with a
    // t2t checkpoint used as s2e must fail with exit 5 via classify below
    const auto s2e_ckpt = (tmp.path / "s2e.ckpt").string();
    REQUIRE(run("train-gan --data " + data + " --mode s2e --config " + cfg_path.string() +
                " --out " + s2e_ckpt) == 0);

    // classify without checkpoint on a generated variant -> exit 7
    CHECK(run("classify --data " + data + " --variant t2t --task mi --out " +
              (tmp.path / "c.json").string() + " --seed 3") == 7);
}

TEST_CASE("classify runs end to end on a single-lead variant") {
    TempDir tmp;
    const auto data = (tmp.path / "data").string();
    REQUIRE(run("gen-data --out " + data +
                " --n-normal 50 --n-mi 50 --n-af 0 --fs 500 --duration 6 --seed 31") == 0);
    const auto report_path = tmp.path / "clf.json";
    REQUIRE(run("classify --data " + data +
                " --variant single --task mi --out " + report_path.string() +
                " --seed 5 --epochs 1 --window 256") == 0);
    auto report = nlohmann::json::parse(slurp(report_path));
    const double point = report["auroc"].get<double>();
    CHECK(point >= 0.0);
    CHECK(point <= 1.0);
    CHECK(report["auroc_ci"][0].get<double>() <= point);
    CHECK(point <= report["auroc_ci"][1].get<double>());
    CHECK(report["n_test"].get<int>() == 20);
    CHECK(report["variant"] == "single");
}
