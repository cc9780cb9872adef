#include "ecgt2t/synth.hpp"

#include <cmath>

#include "ecgt2t/rng.hpp"

namespace ecgt2t {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// MI morphology constants
constexpr double kMiQScale = 3.0;
constexpr double kMiStElevationMv = 0.15;

// AF RR jitter band: Uniform(0.7*RRbar, 1.3*RRbar)
constexpr double kAfRrLo = 0.7;
constexpr double kAfRrHi = 1.3;

struct BeatShape {
    // Effective per-wave (amplitude, mu, sigma) for one lead, plus an
    // optional extra ST bump.
    std::array<WaveParams, kWaveCount> waves;
    double st_amp = 0.0;
    double st_mu = 0.0;
    double st_sigma = 0.0;
};

BeatShape shape_for(const BeatTemplate& tpl, const std::array<double, kWaveCount>& scale,
                    Condition condition, bool negate_t, bool st_elevation) {
    BeatShape s;
    for (int w = 0; w < kWaveCount; ++w) {
        s.waves[w] = tpl.waves[w];
        s.waves[w].amp *= scale[w];
    }
    if (condition == Condition::Af) {
        s.waves[kP].amp = 0.0;
    }
    if (condition == Condition::Mi) {
        s.waves[kQ].amp *= kMiQScale;
        if (negate_t) s.waves[kT].amp = -s.waves[kT].amp;
        if (st_elevation) {
            s.st_amp = kMiStElevationMv;
            s.st_mu = 0.5 * (tpl.waves[kS].mu + tpl.waves[kT].mu);
            s.st_sigma = 0.05;
        }
    }
    return s;
}

void render_lead(std::vector<float>& out, const BeatShape& shape,
                 const std::vector<double>& beats, int fs) {
    const size_t n = out.size();
    std::vector<double> acc(n, 0.0);
    for (double r : beats) {
        for (int w = 0; w < kWaveCount; ++w) {
            const auto& wp = shape.waves[w];
            if (wp.amp == 0.0) continue;
            const double c = r + wp.mu;
            const double half = 5.0 * wp.sigma;
            long long k0 = std::llround((c - half) * fs);
            long long k1 = std::llround((c + half) * fs);
            if (k0 < 0) k0 = 0;
            if (k1 >= static_cast<long long>(n)) k1 = static_cast<long long>(n) - 1;
            const double inv2s2 = 1.0 / (2.0 * wp.sigma * wp.sigma);
            for (long long k = k0; k <= k1; ++k) {
                const double dt = static_cast<double>(k) / fs - c;
                acc[k] += wp.amp * std::exp(-dt * dt * inv2s2);
            }
        }
        if (shape.st_amp != 0.0) {
            const double c = r + shape.st_mu;
            const double half = 5.0 * shape.st_sigma;
            long long k0 = std::llround((c - half) * fs);
            long long k1 = std::llround((c + half) * fs);
            if (k0 < 0) k0 = 0;
            if (k1 >= static_cast<long long>(n)) k1 = static_cast<long long>(n) - 1;
            const double inv2s2 = 1.0 / (2.0 * shape.st_sigma * shape.st_sigma);
            for (long long k = k0; k <= k1; ++k) {
                const double dt = static_cast<double>(k) / fs - c;
                acc[k] += shape.st_amp * std::exp(-dt * dt * inv2s2);
            }
        }
    }
    for (size_t k = 0; k < n; ++k) out[k] = static_cast<float>(acc[k]);
}

}  // namespace

BeatTemplate BeatTemplate::standard() {
    BeatTemplate t;
    //            amp      mu      sigma
    t.waves[kP] = {0.15, -0.20, 0.030};
    t.waves[kQ] = {-0.10, -0.04, 0.010};
    t.waves[kR] = {1.00, 0.00, 0.012};
    t.waves[kS] = {-0.20, 0.04, 0.012};
    t.waves[kT] = {0.30, 0.25, 0.050};

    // Lead I shares the reference morphology at reduced, wave-dependent
    // gain; lead II is the reference itself.
    t.lead_i_scale = {0.60, 0.60, 0.70, 0.80, 0.60};
    t.lead_ii_scale = {1.00, 1.00, 1.00, 1.00, 1.00};

    //                 P     Q      R     S     T
    t.precordial[0] = {0.30, 0.00, -0.50, 1.50, -0.50};  // V1
    t.precordial[1] = {0.40, 0.20, 0.60, 2.50, 0.80};    // V2
    t.precordial[2] = {0.50, 0.40, 0.90, 2.00, 1.10};    // V3
    t.precordial[3] = {0.60, 0.80, 1.40, 1.20, 1.10};    // V4
    t.precordial[4] = {0.70, 1.00, 1.30, 0.70, 1.00};    // V5
    t.precordial[5] = {0.70, 1.00, 1.00, 0.50, 0.90};    // V6
    return t;
}

void ArtifactConfig::validate() const {
    require(baseline_wander_amp >= 0 && powerline_amp >= 0 && white_noise_std >= 0,
            Err::InvalidArgument, "artifact amplitudes must be non-negative");
    require(baseline_wander_amp == 0 || baseline_wander_hz > 0, Err::InvalidArgument,
            "baseline wander frequency must be positive when its amplitude is");
    require(powerline_amp == 0 || powerline_hz > 0, Err::InvalidArgument,
            "powerline frequency must be positive when its amplitude is");
}

std::vector<double> beat_times(Condition condition, double heart_rate_bpm,
                               double duration_s, uint64_t seed) {
    require(heart_rate_bpm >= 30.0 && heart_rate_bpm <= 220.0, Err::InvalidRate,
            "heart rate outside [30, 220] bpm");
    const double rr = 60.0 / heart_rate_bpm;
    Rng rng = Rng::fork(seed, 1);
    double t = (0.3 + 0.2 * rng.uniform()) * rr;  // start-phase jitter
    std::vector<double> beats;
    while (t <= duration_s - 0.2) {
        beats.push_back(t);
        if (condition == Condition::Af) {
            t += rng.uniform(kAfRrLo * rr, kAfRrHi * rr);
        } else {
            t += rr;
        }
    }
    return beats;
}

EcgRecord generate_record(const BeatTemplate& tpl, Condition condition,
                          double heart_rate_bpm, double duration_s, int fs,
                          uint64_t seed, const std::string& record_id) {
    require(heart_rate_bpm >= 30.0 && heart_rate_bpm <= 220.0, Err::InvalidRate,
            "heart rate outside [30, 220] bpm");
    require(fs > 0, Err::InvalidArgument, "fs must be positive");
    const long long n = std::llround(duration_s * fs);
    require(n >= kDefaultWindowLen, Err::DurationTooShort,
            "duration*fs must cover at least one analysis window");

    const auto beats = beat_times(condition, heart_rate_bpm, duration_s, seed);

    EcgRecord rec;
    rec.fs = fs;
    rec.label = condition;
    rec.record_id = record_id;
    for (auto& l : rec.leads) l.assign(static_cast<size_t>(n), 0.0f);

    // T inversion lives in lead II; lead III inherits it through III = II - I.
    render_lead(rec[LeadId::I], shape_for(tpl, tpl.lead_i_scale, condition, false, false),
                beats, fs);
    render_lead(rec[LeadId::II], shape_for(tpl, tpl.lead_ii_scale, condition, true, false),
                beats, fs);

    LimbLeads limb = derive_limb_leads(rec[LeadId::I], rec[LeadId::II]);
    rec[LeadId::III] = std::move(limb.iii);
    rec[LeadId::aVR] = std::move(limb.avr);
    rec[LeadId::aVL] = std::move(limb.avl);
    rec[LeadId::aVF] = std::move(limb.avf);

    for (int p = 0; p < 6; ++p) {
        const bool st = condition == Condition::Mi && (p == 1 || p == 2);  // V2, V3
        const LeadId lead = static_cast<LeadId>(static_cast<int>(LeadId::V1) + p);
        render_lead(rec[lead], shape_for(tpl, tpl.precordial[p], condition, false, st),
                    beats, fs);
    }
    return rec;
}

EcgRecord inject_artifacts(const EcgRecord& record, const ArtifactConfig& cfg,
                           uint64_t seed) {
    record.validate();
    cfg.validate();
    EcgRecord out = record;
    Rng rng = Rng::fork(seed, 2);
    const size_t n = record.length();
    const int fs = record.fs;
    for (int li = 0; li < kNumLeads; ++li) {
        auto& lead = out.leads[li];
        if (lead.empty()) continue;
        for (size_t k = 0; k < n; ++k) {
            const double t = static_cast<double>(k) / fs;
            double v = static_cast<double>(lead[k]);
            if (cfg.baseline_wander_amp > 0) {
                v += cfg.baseline_wander_amp * std::sin(kTwoPi * cfg.baseline_wander_hz * t);
            }
            if (cfg.powerline_amp > 0) {
                v += cfg.powerline_amp * std::sin(kTwoPi * cfg.powerline_hz * t);
            }
            if (cfg.white_noise_std > 0) {
                v += cfg.white_noise_std * rng.normal();
            }
            lead[k] = static_cast<float>(v);
        }
    }
    return out;
}

}  // namespace ecgt2t
