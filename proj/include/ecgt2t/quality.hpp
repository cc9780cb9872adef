#pragma once

#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "ecgt2t/signal.hpp"

namespace ecgt2t {

struct PeakSet {
    std::vector<int> indices;      // strictly increasing sample positions
    std::vector<float> amplitudes;  // signed mV at those positions
    int fs = 0;

    size_t size() const { return indices.size(); }
};

// Derivative-energy R-peak detector: two cascaded difference + moving-average
// stages approximate a 5-15 Hz band-pass, then squaring, 150 ms window
// integration, an adaptive threshold at half the running mean of accepted
// envelope peaks with a 200 ms refractory, and refinement to the local |x|
// maximum within +-50 ms.
PeakSet detect_rpeaks(std::span<const float> x, int fs);

struct MatchedPair {
    int ref_index = 0, gen_index = 0;
    float ref_amp = 0, gen_amp = 0;
};

struct MatchResult {
    std::vector<MatchedPair> pairs;
    int missed_ref = 0;
    int spurious_gen = 0;
    int fs = 0;
};

// Greedy nearest-neighbour pairing within the tolerance, reference peaks
// processed in ascending time order, each peak used at most once.
MatchResult match_peaks(const PeakSet& ref, const PeakSet& gen, double tolerance_ms = 100.0);

// Mean over matched pairs of |a_gen - a_ref| / |a_ref| * 100. Pairs with a
// zero reference amplitude are skipped and counted.
double amplitude_gap_pct(const MatchResult& match, int* zero_ref_skipped = nullptr);

// Mean |index difference| / fs * 1000 over matched pairs.
double position_error_ms(const MatchResult& match, int fs);

struct LeadQuality {
    double amp_pct = 0.0;
    double pos_ms = 0.0;
    int matched = 0;
    int missed_ref = 0;
    int spurious_gen = 0;
    int zero_ref_skipped = 0;
};

struct QualityReport {
    LeadQuality pooled;  // per-peak averages pooled across the requested leads
    std::map<LeadId, LeadQuality> per_lead;

    nlohmann::json to_json() const;
};

QualityReport assess_leads(const EcgRecord& ref, const EcgRecord& gen,
                           const std::vector<LeadId>& leads, double tolerance_ms = 100.0);

}  // namespace ecgt2t
