#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "ecgt2t/errors.hpp"

namespace ecgt2t {

// The 12 standard leads in their fixed order. This order defines channel
// layouts, file layouts and head indices throughout.
enum class LeadId : int { I = 0, II, III, aVR, aVL, aVF, V1, V2, V3, V4, V5, V6 };

inline constexpr int kNumLeads = 12;

// Default analysis window: 2048 samples at 500 Hz (~4.1 s), long enough for
// at least two beats at 40 bpm and divisible by 16 for the generator's four
// halving stages.
inline constexpr int kDefaultWindowLen = 2048;
inline constexpr double kDefaultDelaySeconds = 0.5;

const char* lead_name(LeadId id);
LeadId lead_from_name(const std::string& name);  // throws InvalidArgument

enum class Mode { T2T, S2E };

const char* mode_name(Mode m);

// Leads the model synthesizes: III..V6 for T2T (10), II..V6 for S2E (11).
const std::vector<LeadId>& generated_leads(Mode mode);
int generated_index(Mode mode, LeadId target);  // throws InvalidTarget

enum class Condition : int { Normal = 0, Mi = 1, Af = 2 };

const char* condition_name(Condition c);
Condition condition_from_name(const std::string& name);  // throws InvalidArgument

// Multi-lead signal container. Samples are millivolts. Absent leads are
// empty vectors; all present leads must share one length.
struct EcgRecord {
    int fs = 0;
    Condition label = Condition::Normal;
    std::string record_id;
    std::array<std::vector<float>, kNumLeads> leads;

    bool has(LeadId id) const { return !leads[static_cast<int>(id)].empty(); }
    std::vector<float>& operator[](LeadId id) { return leads[static_cast<int>(id)]; }
    const std::vector<float>& operator[](LeadId id) const {
        return leads[static_cast<int>(id)];
    }

    int lead_count() const;
    size_t length() const;  // samples per present lead, 0 when no leads
    double duration() const { return fs > 0 ? static_cast<double>(length()) / fs : 0.0; }

    // Checks the container invariants: fs > 0, at least one lead, equal
    // lengths, all samples finite. Throws on violation.
    void validate() const;
};

// Model input: a Lead I window and a Lead II window recorded `delay`
// seconds later, as a single-sensor wearable would produce them.
struct AsyncLeadPair {
    std::vector<float> lead_i;
    std::vector<float> lead_ii;
    int window_len = 0;
    double delay = 0.0;  // seconds
    double t0 = 0.0;     // seconds, window start of lead I in the source record
    int fs = 0;
};

AsyncLeadPair extract_async_pair(const EcgRecord& record, double t0_s, double delay_s,
                                 int window_len);

struct LimbLeads {
    std::vector<float> iii, avr, avl, avf;
};

// Einthoven/Goldberger identities for synchronous lead I / lead II arrays:
// III = II - I, aVR = -(I+II)/2, aVL = I - II/2, aVF = II - I/2.
LimbLeads derive_limb_leads(std::span<const float> lead_i, std::span<const float> lead_ii);

struct WindowStats {
    double mean = 0.0;
    double std = 0.0;  // population std; 0 marks a degenerate (flat) window
};

// Z-scores a window to mean 0 / population std 1. Flat windows (std < 1e-8)
// map to all zeros instead of erroring so artifact-heavy corpora survive.
std::vector<double> normalize_window(std::span<const double> x, WindowStats* stats = nullptr);
std::vector<double> normalize_window(std::span<const float> x, WindowStats* stats = nullptr);

// Applies previously computed stats: (x - mean) / std, zeros when degenerate.
std::vector<double> normalize_with(std::span<const float> x, const WindowStats& stats);

// Inverse map back to millivolts: x * std + mean.
std::vector<float> denormalize_with(std::span<const float> x, const WindowStats& stats);

}  // namespace ecgt2t
