#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ecgt2t/synth.hpp"

using namespace ecgt2t;

namespace {

const BeatTemplate kTpl = BeatTemplate::standard();

double wave_energy(const std::vector<float>& x) {
    double acc = 0;
    for (float v : x) acc += static_cast<double>(v) * v;
    return acc;
}

}  // namespace

TEST_CASE("af records carry no P wave anywhere") {
    auto af = generate_record(kTpl, Condition::Af, 70, 10, 500, 42);
    // Regenerate with a P-only template: under AF its amplitude is forced to
    // zero, so the whole record must be flat.
    BeatTemplate p_only = kTpl;
    p_only.waves[kQ].amp = 0;
    p_only.waves[kR].amp = 0;
    p_only.waves[kS].amp = 0;
    p_only.waves[kT].amp = 0;
    auto p_af = generate_record(p_only, Condition::Af, 70, 10, 500, 42);
    for (int li = 0; li < kNumLeads; ++li) {
        CHECK(wave_energy(p_af.leads[li]) == 0.0);
    }
    CHECK(af.label == Condition::Af);
}

TEST_CASE("normal 60 bpm 10 s has 10 +- 1 beats with equal RR") {
    const auto beats = beat_times(Condition::Normal, 60, 10, 9);
    CHECK(beats.size() >= 9);
    CHECK(beats.size() <= 11);
    for (size_t k = 2; k < beats.size(); ++k) {
        const double rr1 = beats[k] - beats[k - 1];
        const double rr0 = beats[k - 1] - beats[k - 2];
        CHECK(std::abs(rr1 - rr0) <= 1.0 / 500.0);  // within one sample at 500 Hz
    }
}

TEST_CASE("generation is deterministic") {
    auto a = generate_record(kTpl, Condition::Af, 80, 8, 500, 1234);
    auto b = generate_record(kTpl, Condition::Af, 80, 8, 500, 1234);
    for (int li = 0; li < kNumLeads; ++li) CHECK(a.leads[li] == b.leads[li]);
}

TEST_CASE("einthoven and goldberger identities hold on clean records") {
    auto rec = generate_record(kTpl, Condition::Normal, 72, 6, 500, 5);
    auto limb = derive_limb_leads(rec[LeadId::I], rec[LeadId::II]);
    for (size_t k = 0; k < rec.length(); ++k) {
        CHECK(std::abs(rec[LeadId::III][k] - limb.iii[k]) <= 1e-9);
        CHECK(std::abs(rec[LeadId::aVR][k] - limb.avr[k]) <= 1e-9);
        CHECK(std::abs(rec[LeadId::aVL][k] - limb.avl[k]) <= 1e-9);
        CHECK(std::abs(rec[LeadId::aVF][k] - limb.avf[k]) <= 1e-9);
    }
}

TEST_CASE("mi morphology flips the lead II T-wave integral") {
    auto normal = generate_record(kTpl, Condition::Normal, 60, 8, 500, 3);
    auto mi = generate_record(kTpl, Condition::Mi, 60, 8, 500, 3);
    // Integrate a window around each beat's T wave.
    const auto beats = beat_times(Condition::Normal, 60, 8, 3);
    double t_normal = 0, t_mi = 0;
    for (double r : beats) {
        const int a = static_cast<int>((r + 0.15) * 500);
        const int b = static_cast<int>((r + 0.35) * 500);
        for (int k = a; k < b && k < static_cast<int>(normal.length()); ++k) {
            t_normal += normal[LeadId::II][k];
            t_mi += mi[LeadId::II][k];
        }
    }
    CHECK(t_normal > 0);
    CHECK(t_mi < 0);
}

TEST_CASE("mi ST elevation raises V2/V3 between QRS and T") {
    auto normal = generate_record(kTpl, Condition::Normal, 60, 8, 500, 3);
    auto mi = generate_record(kTpl, Condition::Mi, 60, 8, 500, 3);
    const auto beats = beat_times(Condition::Normal, 60, 8, 3);
    const int k = static_cast<int>((beats[1] + 0.145) * 500);
    CHECK(mi[LeadId::V2][k] - normal[LeadId::V2][k] > 0.10f);
    CHECK(mi[LeadId::V3][k] - normal[LeadId::V3][k] > 0.10f);
    // Lead I T wave is untouched by the MI rule.
    const int kt = static_cast<int>((beats[1] + 0.25) * 500);
    CHECK(mi[LeadId::I][kt] == doctest::Approx(normal[LeadId::I][kt]).epsilon(1e-6));
}

TEST_CASE("rate and duration preconditions") {
    try {
        generate_record(kTpl, Condition::Normal, 20, 10, 500, 1);
        FAIL("expected InvalidRate");
    } catch (const Error& e) {
        CHECK(e.kind() == Err::InvalidRate);
    }
    try {
        generate_record(kTpl, Condition::Normal, 60, 1.0, 500, 1);
        FAIL("expected DurationTooShort");
    } catch (const Error& e) {
        CHECK(e.kind() == Err::DurationTooShort);
    }
}

TEST_CASE("inject_artifacts") {
    auto rec = generate_record(kTpl, Condition::Normal, 64, 6, 500, 21);

    SUBCASE("all-zero config is the identity") {
        ArtifactConfig cfg;
        auto out = inject_artifacts(rec, cfg, 99);
        for (int li = 0; li < kNumLeads; ++li) CHECK(out.leads[li] == rec.leads[li]);
        CHECK(out.label == rec.label);
    }

    SUBCASE("powerline on a zero record is a pure sinusoid") {
        EcgRecord zero = rec;
        for (auto& l : zero.leads) std::fill(l.begin(), l.end(), 0.0f);
        ArtifactConfig cfg;
        cfg.powerline_amp = 0.05;
        cfg.powerline_hz = 50;
        auto out = inject_artifacts(zero, cfg, 99);
        for (size_t k = 0; k < out.length(); ++k) {
            const double expect = 0.05 * std::sin(2 * M_PI * 50 * (k / 500.0));
            CHECK(out[LeadId::V5][k] == doctest::Approx(expect).epsilon(1e-5));
        }
    }

    SUBCASE("baseline wander magnitude matches the injected component") {
        ArtifactConfig cfg;
        cfg.baseline_wander_amp = 0.1;
        cfg.baseline_wander_hz = 0.3;
        auto out = inject_artifacts(rec, cfg, 99);
        double mad = 0, expected = 0;
        for (size_t k = 0; k < rec.length(); ++k) {
            mad += std::abs(out[LeadId::II][k] - rec[LeadId::II][k]);
            expected += std::abs(0.1 * std::sin(2 * M_PI * 0.3 * (k / 500.0)));
        }
        mad /= rec.length();
        expected /= rec.length();
        CHECK(mad == doctest::Approx(expected).epsilon(0.05));
    }

    SUBCASE("white noise is deterministic per seed and differs across leads") {
        ArtifactConfig cfg;
        cfg.white_noise_std = 0.02;
        auto a = inject_artifacts(rec, cfg, 7);
        auto b = inject_artifacts(rec, cfg, 7);
        auto c = inject_artifacts(rec, cfg, 8);
        CHECK(a[LeadId::I] == b[LeadId::I]);
        CHECK(a[LeadId::I] != c[LeadId::I]);
        CHECK(a[LeadId::I][0] - rec[LeadId::I][0] !=
              a[LeadId::II][0] - rec[LeadId::II][0]);
    }

    SUBCASE("invalid config rejected") {
        ArtifactConfig cfg;
        cfg.powerline_amp = 0.1;  // no frequency
        CHECK_THROWS_AS(inject_artifacts(rec, cfg, 1), Error);
    }
}
