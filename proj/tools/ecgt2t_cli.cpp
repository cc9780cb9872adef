// Command-line front end: data generation, GAN training, synthesis, quality
// assessment, downstream classification and overlay plots. Every command is
// deterministic given its flags; seeds are always explicit.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecgt2t/classifier.hpp"
#include "ecgt2t/dataset.hpp"
#include "ecgt2t/model.hpp"
#include "ecgt2t/quality.hpp"
#include "ecgt2t/svg_plot.hpp"
#include "ecgt2t/synth.hpp"

namespace fs = std::filesystem;
using namespace ecgt2t;

namespace {

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case Err::IoError: return 3;
        case Err::NonFiniteLoss: return 4;
        case Err::ModeMismatch: return 5;
        case Err::MissingLead: return 6;
        case Err::MissingCheckpoint: return 7;
        case Err::InvalidArgument:
        case Err::FormatError: return 2;
        default: return 1;
    }
}

nlohmann::json load_json(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), Err::IoError, "cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        fail(Err::FormatError, "JSON parse error in " + path.string() + ": " + e.what());
    }
    return doc;
}

void reject_unknown_keys(const nlohmann::json& doc, const std::set<std::string>& allowed,
                         const std::string& what) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        require(allowed.count(it.key()) > 0, Err::FormatError,
                "unknown key '" + it.key() + "' in " + what);
    }
}

TrainConfig parse_train_config(const fs::path& path) {
    const auto doc = load_json(path);
    reject_unknown_keys(doc,
                        {"lambda_adv", "lambda_rec", "lambda_con", "lambda_sty", "lr_s",
                         "lr_m", "lr_g", "lr_d", "weight_decay", "z_dim", "batch_size",
                         "steps", "seed", "window_len", "delay_s", "base_width",
                         "eval_every"},
                        "train config");
    require(doc.contains("seed"), Err::FormatError,
            "train config must set an explicit seed");
    TrainConfig cfg;
    cfg.lambda_adv = doc.value("lambda_adv", cfg.lambda_adv);
    cfg.lambda_rec = doc.value("lambda_rec", cfg.lambda_rec);
    cfg.lambda_con = doc.value("lambda_con", cfg.lambda_con);
    cfg.lambda_sty = doc.value("lambda_sty", cfg.lambda_sty);
    cfg.lr_s = doc.value("lr_s", cfg.lr_s);
    cfg.lr_m = doc.value("lr_m", cfg.lr_m);
    cfg.lr_g = doc.value("lr_g", cfg.lr_g);
    cfg.lr_d = doc.value("lr_d", cfg.lr_d);
    cfg.weight_decay = doc.value("weight_decay", cfg.weight_decay);
    cfg.z_dim = doc.value("z_dim", cfg.z_dim);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.steps = doc.value("steps", cfg.steps);
    cfg.seed = doc.at("seed").get<uint64_t>();
    cfg.window_len = doc.value("window_len", cfg.window_len);
    cfg.delay_s = doc.value("delay_s", cfg.delay_s);
    cfg.base_width = doc.value("base_width", cfg.base_width);
    cfg.eval_every = doc.value("eval_every", cfg.eval_every);
    return cfg;
}

ArtifactConfig parse_artifact_config(const fs::path& path) {
    const auto doc = load_json(path);
    reject_unknown_keys(doc,
                        {"baseline_wander_amp", "baseline_wander_hz", "powerline_amp",
                         "powerline_hz", "white_noise_std"},
                        "artifact config");
    ArtifactConfig cfg;
    cfg.baseline_wander_amp = doc.value("baseline_wander_amp", 0.0);
    cfg.baseline_wander_hz = doc.value("baseline_wander_hz", 0.0);
    cfg.powerline_amp = doc.value("powerline_amp", 0.0);
    cfg.powerline_hz = doc.value("powerline_hz", 0.0);
    cfg.white_noise_std = doc.value("white_noise_std", 0.0);
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    require(out.good(), Err::IoError, "cannot open " + path.string() + " for writing");
    out << text;
    require(out.good(), Err::IoError, "short write to " + path.string());
}

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
    std::string out_dir;
    int n_normal = 0, n_mi = 0, n_af = 0;
    int fs = 500;
    double duration = 10.0;
    uint64_t seed = 0;
    std::string artifacts_path;
};

int cmd_gen_data(const GenDataArgs& a) {
    fs::create_directories(fs::path(a.out_dir) / "records");
    ArtifactConfig artifacts;
    if (!a.artifacts_path.empty()) artifacts = parse_artifact_config(a.artifacts_path);
    const bool with_artifacts = !a.artifacts_path.empty();

    DatasetManifest manifest;
    manifest.fs = a.fs;
    Rng rng = Rng::fork(a.seed, 20);
    const BeatTemplate base = BeatTemplate::standard();

    int serial = 0;
    auto emit = [&](Condition cond, int count) {
        for (int i = 0; i < count; ++i, ++serial) {
            const double hr = rng.uniform(55.0, 95.0);
            BeatTemplate tpl = base;
            const double gain = rng.uniform(0.85, 1.15);  // per-record R-amplitude spread
            tpl.waves[kR].amp *= gain;
            const uint64_t rec_seed = rng.u64();

            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "rec-%04d-%s", serial, condition_name(cond));
            EcgRecord rec =
                generate_record(tpl, cond, hr, a.duration, a.fs, rec_seed, idbuf);
            if (with_artifacts) rec = inject_artifacts(rec, artifacts, rec_seed + 1);

            const std::string rel = std::string("records/") + idbuf + ".ecgr";
            save_record(rec, fs::path(a.out_dir) / rel);
            manifest.entries.push_back({idbuf, rel, cond, std::nullopt, {}});
        }
    };
    emit(Condition::Normal, a.n_normal);
    emit(Condition::Mi, a.n_mi);
    emit(Condition::Af, a.n_af);

    require(!manifest.entries.empty(), Err::InvalidArgument,
            "nothing to generate: all counts are zero");
    manifest = stratified_split(manifest, {7, 1, 2}, a.seed);
    save_manifest(manifest, fs::path(a.out_dir) / "manifest.json");
    std::cout << "wrote " << manifest.entries.size() << " records to " << a.out_dir << "\n";
    return 0;
}

// ---- train-gan -------------------------------------------------------------

int cmd_train_gan(const std::string& data_dir, const std::string& mode_str,
                  const std::string& config_path, const std::string& out_path,
                  const std::string& history_path, const std::string& resume_path,
                  int threads) {
    nn::set_threads(threads);
    TrainConfig cfg = parse_train_config(config_path);
    cfg.mode = mode_str == "t2t" ? Mode::T2T : Mode::S2E;

    auto manifest = load_manifest(fs::path(data_dir) / "manifest.json");
    auto train_recs = load_split(manifest, Split::Train);
    auto val_recs = load_split(manifest, Split::Val);

    NetworkBundle resume;
    const NetworkBundle* resume_ptr = nullptr;
    if (!resume_path.empty()) {
        resume = load_gan_checkpoint(resume_path);
        resume_ptr = &resume;
    }

    auto result = train(train_recs, val_recs, cfg, resume_ptr);
    save_gan_checkpoint(out_path, result.bundle);
    if (!history_path.empty()) {
        save_history_json(history_path, result.history, result.val_history);
    }
    std::cout << "trained " << cfg.steps << " steps; best validation total "
              << result.best_val_total << " at step " << result.best_step << "\n";
    return 0;
}

// ---- synth ------------------------------------------------------------------

int cmd_synth(const std::string& ckpt_path, const std::string& record_path, double t0,
              double delay, int window, const std::string& out_path) {
    auto bundle = load_gan_checkpoint(ckpt_path);
    auto rec = load_record(record_path);
    const int W = window > 0 ? window : bundle.cfg.window_len;

    EcgRecord out;
    if (bundle.mode() == Mode::T2T) {
        auto pair = extract_async_pair(rec, t0, delay, W);
        out = synthesize_twelve(pair, bundle);
    } else {
        require(rec.has(LeadId::I), Err::MissingLead, "record lacks lead I");
        const long long i0 = std::llround(t0 * rec.fs);
        require(i0 >= 0 && i0 + W <= static_cast<long long>(rec.length()), Err::OutOfBounds,
                "window exceeds record length");
        std::span<const float> win(rec[LeadId::I].data() + i0, static_cast<size_t>(W));
        out = synthesize_from_one(win, rec.fs, bundle);
    }
    out.label = rec.label;
    out.record_id = rec.record_id + "-" + mode_name(bundle.mode());
    save_record(out, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// ---- assess -----------------------------------------------------------------

int cmd_assess(const std::string& ref_path, const std::string& gen_path,
               const std::string& leads_csv, const std::string& out_path) {
    auto ref = load_record(ref_path);
    auto gen = load_record(gen_path);

    std::vector<LeadId> leads;
    std::stringstream ss(leads_csv);
    std::string name;
    while (std::getline(ss, name, ',')) leads.push_back(lead_from_name(name));
    require(!leads.empty(), Err::InvalidArgument, "no leads requested");

    auto report = assess_leads(ref, gen, leads);
    write_text(out_path, report.to_json().dump(2) + "\n");
    std::cout << "amp " << report.pooled.amp_pct << "% pos " << report.pooled.pos_ms
              << " ms over " << report.pooled.matched << " matched peaks\n";
    return 0;
}

// ---- classify ---------------------------------------------------------------

int cmd_classify(const std::string& data_dir, const std::string& variant_str,
                 const std::string& ckpt_path, const std::string& task_str,
                 const std::string& out_path, int epochs, int window, uint64_t seed,
                 int threads) {
    nn::set_threads(threads);
    const LeadVariant variant = variant_from_name(variant_str);
    const Condition positive = condition_from_name(task_str);
    require(positive != Condition::Normal, Err::InvalidArgument,
            "task must be mi or af");

    NetworkBundle bundle;
    const NetworkBundle* gan = nullptr;
    if (variant == LeadVariant::T2T || variant == LeadVariant::S2E) {
        require(!ckpt_path.empty(), Err::MissingCheckpoint,
                "variant needs --ckpt with a trained model");
        bundle = load_gan_checkpoint(ckpt_path);
        gan = &bundle;
    }

    auto manifest = load_manifest(fs::path(data_dir) / "manifest.json");
    std::vector<EcgRecord> records;
    std::vector<std::pair<const EcgRecord*, Split>> tagged;
    for (const auto& e : manifest.entries) {
        if (!e.split) continue;
        if (e.label != Condition::Normal && e.label != positive) continue;
        records.push_back(load_entry(e));
    }
    size_t k = 0;
    for (const auto& e : manifest.entries) {
        if (!e.split) continue;
        if (e.label != Condition::Normal && e.label != positive) continue;
        tagged.emplace_back(&records[k++], *e.split);
    }

    ClassifierConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.window_len = window;

    auto ds = build_variant_dataset(tagged, variant, gan, cfg.window_len, cfg.delay_s);
    auto trained = train_classifier(ds, cfg);

    std::vector<int> labels;
    auto scores = classifier_scores(trained.model, ds, Split::Test, &labels);
    require(!scores.empty(), Err::EmptyDataset, "test split is empty");

    ClassifierReport report;
    report.variant = variant_str;
    report.task = task_str;
    report.n_test = static_cast<int>(scores.size());
    report.auroc_value = auroc(scores, labels);
    report.auprc_value = auprc(scores, labels);
    report.auroc_ci = bootstrap_ci(scores, labels, auroc, 1000, 0.95, seed + 1);
    report.auprc_ci = bootstrap_ci(scores, labels, auprc, 1000, 0.95, seed + 2);
    write_text(out_path, report.to_json().dump(2) + "\n");
    std::cout << "test AUROC " << report.auroc_value << " AUPRC " << report.auprc_value
              << " (n=" << report.n_test << ")\n";
    return 0;
}

// ---- plot -------------------------------------------------------------------

int cmd_plot(const std::string& ref_path, const std::string& t2t_path,
             const std::string& s2e_path, double t0, double window,
             const std::string& out_path) {
    auto ref = load_record(ref_path);
    EcgRecord t2t, s2e;
    const EcgRecord* t2t_ptr = nullptr;
    const EcgRecord* s2e_ptr = nullptr;
    if (!t2t_path.empty()) {
        t2t = load_record(t2t_path);
        t2t_ptr = &t2t;
    }
    if (!s2e_path.empty()) {
        s2e = load_record(s2e_path);
        s2e_ptr = &s2e;
    }
    write_text(out_path, plot_overlay_svg(ref, t2t_ptr, s2e_ptr, t0, window));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECG lead synthesis toolkit"};
    app.require_subcommand(1);

    // gen-data
    GenDataArgs gd;
    auto* gen = app.add_subcommand("gen-data", "generate a labeled synthetic corpus");
    gen->add_option("--out", gd.out_dir, "output directory")->required();
    gen->add_option("--n-normal", gd.n_normal, "normal record count")->required();
    gen->add_option("--n-mi", gd.n_mi, "MI record count")->required();
    gen->add_option("--n-af", gd.n_af, "AF record count")->required();
    gen->add_option("--fs", gd.fs, "sampling rate Hz");
    gen->add_option("--duration", gd.duration, "record duration seconds");
    gen->add_option("--seed", gd.seed, "corpus seed")->required();
    gen->add_option("--artifacts", gd.artifacts_path, "artifact config JSON");

    // train-gan
    std::string tg_data, tg_mode = "t2t", tg_config, tg_out, tg_history, tg_resume;
    int tg_threads = 1;
    auto* tg = app.add_subcommand("train-gan", "train the generative model");
    tg->add_option("--data", tg_data, "dataset directory with manifest.json")->required();
    tg->add_option("--mode", tg_mode, "t2t or s2e")
        ->check(CLI::IsMember({"t2t", "s2e"}))
        ->required();
    tg->add_option("--config", tg_config, "training config JSON")->required();
    tg->add_option("--out", tg_out, "checkpoint output path")->required();
    tg->add_option("--history", tg_history, "training history JSON output");
    tg->add_option("--resume", tg_resume, "checkpoint to resume from");
    tg->add_option("--threads", tg_threads, "worker threads");

    // synth
    std::string sy_ckpt, sy_record, sy_out;
    double sy_t0 = 0.0, sy_delay = kDefaultDelaySeconds;
    int sy_window = 0;
    auto* sy = app.add_subcommand("synth", "synthesize the missing leads");
    sy->add_option("--ckpt", sy_ckpt, "trained checkpoint")->required();
    sy->add_option("--record", sy_record, "source record file")->required();
    sy->add_option("--t0", sy_t0, "window start seconds");
    sy->add_option("--delay", sy_delay, "lead II delay seconds");
    sy->add_option("--window", sy_window, "window length samples (default: trained)");
    sy->add_option("--out", sy_out, "output record file")->required();

    // assess
    std::string as_ref, as_gen, as_leads = "V1,V5", as_out;
    auto* as = app.add_subcommand("assess", "R-peak quality metrics");
    as->add_option("--ref", as_ref, "reference record")->required();
    as->add_option("--gen", as_gen, "generated record")->required();
    as->add_option("--leads", as_leads, "comma-separated lead names");
    as->add_option("--out", as_out, "report JSON output")->required();

    // classify
    std::string cl_data, cl_variant, cl_ckpt, cl_task, cl_out;
    int cl_epochs = 40, cl_window = 1024, cl_threads = 1;
    uint64_t cl_seed = 0;
    bool cl_seed_set = false;
    auto* cl = app.add_subcommand("classify", "train and evaluate a lead-variant classifier");
    cl->add_option("--data", cl_data, "dataset directory")->required();
    cl->add_option("--variant", cl_variant, "original|t2t|s2e|two|single")
        ->check(CLI::IsMember({"original", "t2t", "s2e", "two", "single"}))
        ->required();
    cl->add_option("--ckpt", cl_ckpt, "GAN checkpoint for t2t/s2e variants");
    cl->add_option("--task", cl_task, "mi or af")
        ->check(CLI::IsMember({"mi", "af"}))
        ->required();
    cl->add_option("--out", cl_out, "report JSON output")->required();
    cl->add_option("--epochs", cl_epochs, "training epochs");
    cl->add_option("--window", cl_window, "classification window samples");
    cl->add_option("--seed", cl_seed, "training seed")
        ->required()
        ->each([&](const std::string&) { cl_seed_set = true; });
    cl->add_option("--threads", cl_threads, "worker threads");

    // plot
    std::string pl_ref, pl_t2t, pl_s2e, pl_out;
    double pl_t0 = 0.0, pl_window = 2.0;
    auto* pl = app.add_subcommand("plot", "12-panel SVG overlay");
    pl->add_option("--ref", pl_ref, "reference record")->required();
    pl->add_option("--t2t", pl_t2t, "t2t synthesis record");
    pl->add_option("--s2e", pl_s2e, "s2e synthesis record");
    pl->add_option("--t0", pl_t0, "window start seconds");
    pl->add_option("--window", pl_window, "window length seconds");
    pl->add_option("--out", pl_out, "SVG output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gd);
        if (tg->parsed()) {
            return cmd_train_gan(tg_data, tg_mode, tg_config, tg_out, tg_history,
                                 tg_resume, tg_threads);
        }
        if (sy->parsed()) {
            return cmd_synth(sy_ckpt, sy_record, sy_t0, sy_delay, sy_window, sy_out);
        }
        if (as->parsed()) return cmd_assess(as_ref, as_gen, as_leads, as_out);
        if (cl->parsed()) {
            return cmd_classify(cl_data, cl_variant, cl_ckpt, cl_task, cl_out, cl_epochs,
                                cl_window, cl_seed, cl_threads);
        }
        if (pl->parsed()) return cmd_plot(pl_ref, pl_t2t, pl_s2e, pl_t0, pl_window, pl_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
