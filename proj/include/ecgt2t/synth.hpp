#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ecgt2t/signal.hpp"

namespace ecgt2t {

// Wave index within a beat template.
enum Wave : int { kP = 0, kQ, kR, kS, kT, kWaveCount };

struct WaveParams {
    double amp;    // mV, lead II reference amplitude
    double mu;     // s, center offset relative to the R peak
    double sigma;  // s, Gaussian width (> 0)
};

// Sum-of-Gaussians beat model. Lead II is the reference shape; the limb
// inputs and each precordial lead apply per-wave amplitude multipliers so
// the leads are not mutually collinear. R-peak times and amplitudes are
// analytically known, which the quality metrics rely on.
struct BeatTemplate {
    std::array<WaveParams, kWaveCount> waves;
    std::array<double, kWaveCount> lead_i_scale;
    std::array<double, kWaveCount> lead_ii_scale;
    // Rows V1..V6, columns P,Q,R,S,T. V1's R multiplier is negative: its
    // dominant QRS deflection points down.
    std::array<std::array<double, kWaveCount>, 6> precordial;

    static BeatTemplate standard();
};

struct ArtifactConfig {
    double baseline_wander_amp = 0.0;  // mV
    double baseline_wander_hz = 0.0;
    double powerline_amp = 0.0;  // mV
    double powerline_hz = 0.0;
    double white_noise_std = 0.0;  // mV

    void validate() const;  // amps >= 0; f > 0 wherever amp > 0
};

// R-peak schedule for a record: constant RR for normal/MI beats, RR drawn
// i.i.d. from Uniform(0.7*RRbar, 1.3*RRbar) for AF. The small start-phase
// jitter keeps corpora from being phase-locked across records.
std::vector<double> beat_times(Condition condition, double heart_rate_bpm,
                               double duration_s, uint64_t seed);

// Deterministic synthetic 12-lead record. MI morphology: tripled Q, negated
// T in lead II (and hence III), ST elevation +0.15 mV in V2/V3. AF: zero P
// everywhere, irregular RR.
EcgRecord generate_record(const BeatTemplate& tpl, Condition condition,
                          double heart_rate_bpm, double duration_s, int fs,
                          uint64_t seed, const std::string& record_id = "");

// Adds baseline-wander and powerline sinusoids plus white Gaussian noise to
// every lead. Label and id are preserved.
EcgRecord inject_artifacts(const EcgRecord& record, const ArtifactConfig& cfg,
                           uint64_t seed);

}  // namespace ecgt2t
