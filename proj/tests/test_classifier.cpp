#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ecgt2t/classifier.hpp"
#include "ecgt2t/synth.hpp"

using namespace ecgt2t;

namespace {

// O(n^2) pairwise oracle: ties count one half.
double auroc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    size_t n_pos = 0, n_neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0) {
            ++n_pos;
            for (size_t j = 0; j < scores.size(); ++j) {
                if (labels[j] != 0) continue;
                if (scores[i] > scores[j]) wins += 1.0;
                else if (scores[i] == scores[j]) wins += 0.5;
            }
        } else {
            ++n_neg;
        }
    }
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// step-integration oracle for average precision: recompute TP/FP from
// scratch at every distinct threshold, descending.
double auprc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<double> thresholds(scores.begin(), scores.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0 ? 1 : 0;

    double ap = 0;
    size_t prev_tp = 0;
    for (double t : thresholds) {
        size_t tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) (labels[i] != 0 ? tp : fp) += 1;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += static_cast<double>(tp - prev_tp) * precision;
        prev_tp = tp;
    }
    return ap / static_cast<double>(n_pos);
}

}  // namespace

TEST_CASE("auroc and auprc trivial cases") {
    std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
    std::vector<int> lab{1, 1, 0, 0};
    CHECK(auroc(sep, lab) == 1.0);
    CHECK(auprc(sep, lab) == 1.0);

    std::vector<double> ties{0.5, 0.5, 0.5, 0.5};
    CHECK(auroc(ties, lab) == 0.5);

    std::vector<int> single{1, 1, 1, 1};
    try {
        auroc(sep, single);
        FAIL("expected SingleClass");
    } catch (const Error& e) {
        CHECK(e.kind() == Err::SingleClass);
    }
}

TEST_CASE("auroc matches the pairwise oracle on 100 random tied cases") {
    Rng rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 10 + static_cast<int>(rng.bounded(191));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            // quantized scores force plenty of exact ties
            scores[i] = std::floor(rng.uniform() * 8) / 8.0;
            labels[i] = rng.uniform() < 0.4 ? 1 : 0;
            (labels[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) {
            labels[0] = 0;
            labels[1] = 1;
        }
        CHECK(std::abs(auroc(scores, labels) - auroc_oracle(scores, labels)) <= 1e-12);
    }
}

TEST_CASE("auprc matches the step-integration oracle") {
    Rng rng(405);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 10 + static_cast<int>(rng.bounded(120));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            scores[i] = std::floor(rng.uniform() * 6) / 6.0;
            labels[i] = rng.uniform() < 0.35 ? 1 : 0;
            (labels[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) {
            labels[0] = 0;
            labels[1] = 1;
        }
        CHECK(std::abs(auprc(scores, labels) - auprc_oracle(scores, labels)) <= 1e-9);
    }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
    Rng rng(406);
    std::vector<double> scores(80);
    std::vector<int> labels(80);
    for (int i = 0; i < 80; ++i) {
        scores[i] = rng.normal();
        labels[i] = i % 3 == 0 ? 1 : 0;
    }
    const double base = auroc(scores, labels);
    std::vector<double> exp_scores(80), affine_scores(80);
    for (int i = 0; i < 80; ++i) {
        exp_scores[i] = std::exp(scores[i]);
        affine_scores[i] = 3.5 * scores[i] + 11.0;
    }
    CHECK(auroc(exp_scores, labels) == doctest::Approx(base).epsilon(1e-12));
    CHECK(auroc(affine_scores, labels) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("bootstrap confidence intervals") {
    Rng rng(407);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 120; ++i) {
        const int label = i % 2;
        scores.push_back(label ? 0.6 + 0.4 * rng.uniform() : 0.4 * rng.uniform());
        labels.push_back(label);
    }

    auto [lo, hi] = bootstrap_ci(scores, labels, auroc, 300, 0.95, 5);
    const double point = auroc(scores, labels);
    CHECK(lo <= point);
    CHECK(point <= hi);
    CHECK(hi == doctest::Approx(1.0));  // perfectly separated scores

    auto [lo2, hi2] = bootstrap_ci(scores, labels, auroc, 300, 0.95, 5);
    CHECK(lo == lo2);
    CHECK(hi == hi2);

    auto [lo3, hi3] = bootstrap_ci(scores, labels, auroc, 300, 0.95, 6);
    (void)lo3;
    (void)hi3;
}

namespace {

std::vector<std::pair<const EcgRecord*, Split>> tag_all(const std::vector<EcgRecord>& recs,
                                                        Split split) {
    std::vector<std::pair<const EcgRecord*, Split>> out;
    for (const auto& r : recs) out.emplace_back(&r, split);
    return out;
}

}  // namespace

TEST_CASE("build_variant_dataset channel layouts") {
    const auto tpl = BeatTemplate::standard();
    std::vector<EcgRecord> recs;
    recs.push_back(generate_record(tpl, Condition::Normal, 70, 5, 500, 1, "a"));
    recs.push_back(generate_record(tpl, Condition::Mi, 80, 5, 500, 2, "b"));
    auto tagged = tag_all(recs, Split::Train);

    SUBCASE("single lead is lead I") {
        auto ds = build_variant_dataset(tagged, LeadVariant::SingleLead, nullptr, 1024, 0.5);
        CHECK(variant_channels(LeadVariant::SingleLead) == 1);
        REQUIRE(ds.samples.size() == 2);
        CHECK(ds.samples[0].channels.size() == 1);
        for (int k = 0; k < 1024; ++k) {
            CHECK(ds.samples[0].channels[0][k] == recs[0][LeadId::I][k]);
        }
        CHECK(ds.samples[0].label == 0);
        CHECK(ds.samples[1].label == 1);
    }

    SUBCASE("two leads are async I and II") {
        auto ds = build_variant_dataset(tagged, LeadVariant::TwoLeads, nullptr, 1024, 0.5);
        REQUIRE(ds.samples[0].channels.size() == 2);
        for (int k = 0; k < 1024; ++k) {
            CHECK(ds.samples[0].channels[0][k] == recs[0][LeadId::I][k]);
            CHECK(ds.samples[0].channels[1][k] == recs[0][LeadId::II][k + 250]);
        }
    }

    SUBCASE("original is all 12 true leads") {
        auto ds = build_variant_dataset(tagged, LeadVariant::Original, nullptr, 1024, 0.5);
        REQUIRE(ds.samples[0].channels.size() == 12);
        for (int c = 0; c < 12; ++c) {
            for (int k = 0; k < 64; ++k) {
                CHECK(ds.samples[0].channels[c][k] == recs[0].leads[c][k]);
            }
        }
    }

    SUBCASE("generated variants demand a checkpoint") {
        try {
            build_variant_dataset(tagged, LeadVariant::T2T, nullptr, 1024, 0.5);
            FAIL("expected MissingCheckpoint");
        } catch (const Error& e) {
            CHECK(e.kind() == Err::MissingCheckpoint);
        }
    }

    SUBCASE("t2t channels 0-1 are the true async windows, 2-11 generated") {
        TrainConfig gcfg;
        gcfg.base_width = 2;
        gcfg.z_dim = 8;
        gcfg.batch_size = 2;
        gcfg.window_len = 64;
        gcfg.steps = 1;
        gcfg.seed = 3;
        auto trained = train(recs, recs, gcfg);
        auto ds = build_variant_dataset(tagged, LeadVariant::T2T, &trained.bundle, 1024, 0.5);
        REQUIRE(ds.samples[0].channels.size() == 12);
        for (int k = 0; k < 1024; ++k) {
            CHECK(ds.samples[0].channels[0][k] == recs[0][LeadId::I][k]);
            CHECK(ds.samples[0].channels[1][k] == recs[0][LeadId::II][k + 250]);
        }
        // generated channels differ from the true leads, pass-throughs equal
        auto orig = build_variant_dataset(tagged, LeadVariant::Original, nullptr, 1024, 0.5);
        bool any_diff = false;
        for (int c = 2; c < 12; ++c) {
            if (ds.samples[0].channels[c] != orig.samples[0].channels[c]) any_diff = true;
        }
        CHECK(any_diff);

        // mode mismatch rejected
        try {
            build_variant_dataset(tagged, LeadVariant::S2E, &trained.bundle, 1024, 0.5);
            FAIL("expected ModeMismatch");
        } catch (const Error& e) {
            CHECK(e.kind() == Err::ModeMismatch);
        }
    }
}

TEST_CASE("classifier training: determinism, epochs=0 and single-class guard") {
    const auto tpl = BeatTemplate::standard();
    std::vector<EcgRecord> recs;
    for (int i = 0; i < 12; ++i) {
        const Condition cond = i % 2 ? Condition::Mi : Condition::Normal;
        recs.push_back(generate_record(tpl, cond, 60 + 5 * (i % 4), 5, 500, 60 + i,
                                       "c" + std::to_string(i)));
    }
    std::vector<std::pair<const EcgRecord*, Split>> tagged;
    for (size_t i = 0; i < recs.size(); ++i) {
        tagged.emplace_back(&recs[i], i < 8 ? Split::Train : Split::Val);
    }
    auto ds = build_variant_dataset(tagged, LeadVariant::SingleLead, nullptr, 512, 0.5);

    ClassifierConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 9;
    cfg.base_width = 4;
    cfg.window_len = 512;

    SUBCASE("epochs=0 returns an initialized model with empty history") {
        auto r = train_classifier(ds, cfg);
        CHECK(r.history.empty());
        CHECK(r.model.trained);
    }

    SUBCASE("fixed seed gives identical loss histories") {
        auto cfg2 = cfg;
        cfg2.epochs = 2;
        auto r1 = train_classifier(ds, cfg2);
        auto r2 = train_classifier(ds, cfg2);
        REQUIRE(r1.history.size() == 2);
        for (size_t i = 0; i < r1.history.size(); ++i) {
            CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
            CHECK(r1.history[i].val_loss == r2.history[i].val_loss);
        }
    }

    SUBCASE("single-class training split is rejected") {
        std::vector<std::pair<const EcgRecord*, Split>> mono;
        for (size_t i = 0; i < recs.size(); i += 2) {
            mono.emplace_back(&recs[i], Split::Train);  // all normal
        }
        auto ds2 = build_variant_dataset(mono, LeadVariant::SingleLead, nullptr, 512, 0.5);
        try {
            train_classifier(ds2, cfg);
            FAIL("expected SingleClassDataset");
        } catch (const Error& e) {
            CHECK(e.kind() == Err::SingleClassDataset);
        }
    }
}

TEST_CASE("classifier checkpoint round trip") {
    namespace fs = std::filesystem;
    const auto tpl = BeatTemplate::standard();
    std::vector<EcgRecord> recs;
    for (int i = 0; i < 8; ++i) {
        const Condition cond = i % 2 ? Condition::Af : Condition::Normal;
        recs.push_back(generate_record(tpl, cond, 65, 5, 500, 80 + i, "k" + std::to_string(i)));
    }
    std::vector<std::pair<const EcgRecord*, Split>> tagged;
    for (auto& r : recs) tagged.emplace_back(&r, Split::Train);
    auto ds = build_variant_dataset(tagged, LeadVariant::TwoLeads, nullptr, 512, 0.5);

    ClassifierConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 4;
    cfg.base_width = 4;
    cfg.window_len = 512;
    auto trained = train_classifier(ds, cfg);

    const auto path = fs::temp_directory_path() / "ecgt2t-clf-test.ckpt";
    save_classifier_checkpoint(path, trained.model);
    auto loaded = load_classifier_checkpoint(path);
    auto a = trained.model.net.named_params();
    auto b = loaded.net.named_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].second->v == b[i].second->v);

    auto s1 = classifier_scores(trained.model, ds, Split::Train);
    auto s2 = classifier_scores(loaded, ds, Split::Train);
    CHECK(s1 == s2);
    fs::remove(path);
}
