#include "ecgt2t/signal.hpp"

#include <cmath>
#include <cstdlib>

namespace ecgt2t {

namespace {

constexpr const char* kLeadNames[kNumLeads] = {"I",  "II", "III", "aVR", "aVL", "aVF",
                                               "V1", "V2", "V3",  "V4",  "V5",  "V6"};

}  // namespace

const char* err_name(Err k) {
    switch (k) {
        case Err::OutOfBounds: return "OutOfBounds";
        case Err::MissingLead: return "MissingLead";
        case Err::LengthMismatch: return "LengthMismatch";
        case Err::IoError: return "IoError";
        case Err::FormatError: return "FormatError";
        case Err::ClassTooSmall: return "ClassTooSmall";
        case Err::ShapeMismatch: return "ShapeMismatch";
        case Err::InvalidProbability: return "InvalidProbability";
        case Err::InvalidTarget: return "InvalidTarget";
        case Err::InvalidRate: return "InvalidRate";
        case Err::DurationTooShort: return "DurationTooShort";
        case Err::EmptyDataset: return "EmptyDataset";
        case Err::NonFiniteLoss: return "NonFiniteLoss";
        case Err::UntrainedModel: return "UntrainedModel";
        case Err::ModeMismatch: return "ModeMismatch";
        case Err::SignalTooShort: return "SignalTooShort";
        case Err::RateMismatch: return "RateMismatch";
        case Err::NoMatches: return "NoMatches";
        case Err::SingleClass: return "SingleClass";
        case Err::SingleClassDataset: return "SingleClassDataset";
        case Err::MissingCheckpoint: return "MissingCheckpoint";
        case Err::DegenerateResampling: return "DegenerateResampling";
        case Err::WindowTooLong: return "WindowTooLong";
        case Err::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

const char* lead_name(LeadId id) { return kLeadNames[static_cast<int>(id)]; }

LeadId lead_from_name(const std::string& name) {
    for (int i = 0; i < kNumLeads; ++i) {
        if (name == kLeadNames[i]) return static_cast<LeadId>(i);
    }
    fail(Err::InvalidArgument, "unknown lead name '" + name + "'");
}

const char* mode_name(Mode m) { return m == Mode::T2T ? "t2t" : "s2e"; }

const std::vector<LeadId>& generated_leads(Mode mode) {
    static const std::vector<LeadId> t2t = {LeadId::III, LeadId::aVR, LeadId::aVL,
                                            LeadId::aVF, LeadId::V1,  LeadId::V2,
                                            LeadId::V3,  LeadId::V4,  LeadId::V5,
                                            LeadId::V6};
    static const std::vector<LeadId> s2e = {LeadId::II,  LeadId::III, LeadId::aVR,
                                            LeadId::aVL, LeadId::aVF, LeadId::V1,
                                            LeadId::V2,  LeadId::V3,  LeadId::V4,
                                            LeadId::V5,  LeadId::V6};
    return mode == Mode::T2T ? t2t : s2e;
}

int generated_index(Mode mode, LeadId target) {
    const auto& set = generated_leads(mode);
    for (size_t i = 0; i < set.size(); ++i) {
        if (set[i] == target) return static_cast<int>(i);
    }
    fail(Err::InvalidTarget,
         std::string(lead_name(target)) + " is not generated in " + mode_name(mode) + " mode");
}

const char* condition_name(Condition c) {
    switch (c) {
        case Condition::Normal: return "normal";
        case Condition::Mi: return "mi";
        case Condition::Af: return "af";
    }
    return "?";
}

Condition condition_from_name(const std::string& name) {
    if (name == "normal") return Condition::Normal;
    if (name == "mi") return Condition::Mi;
    if (name == "af") return Condition::Af;
    fail(Err::InvalidArgument, "unknown condition '" + name + "'");
}

int EcgRecord::lead_count() const {
    int n = 0;
    for (const auto& l : leads) n += l.empty() ? 0 : 1;
    return n;
}

size_t EcgRecord::length() const {
    for (const auto& l : leads) {
        if (!l.empty()) return l.size();
    }
    return 0;
}

void EcgRecord::validate() const {
    require(fs > 0, Err::InvalidArgument, "sampling rate must be positive");
    size_t len = length();
    require(len >= 1, Err::InvalidArgument, "record has no leads");
    for (int i = 0; i < kNumLeads; ++i) {
        const auto& l = leads[i];
        if (l.empty()) continue;
        require(l.size() == len, Err::LengthMismatch,
                std::string("lead ") + kLeadNames[i] + " length differs");
        for (float s : l) {
            require(std::isfinite(s), Err::InvalidArgument,
                    std::string("non-finite sample in lead ") + kLeadNames[i]);
        }
    }
}

AsyncLeadPair extract_async_pair(const EcgRecord& record, double t0_s, double delay_s,
                                 int window_len) {
    require(record.has(LeadId::I) && record.has(LeadId::II), Err::MissingLead,
            "record must contain leads I and II");
    require(record.fs > 0, Err::InvalidArgument, "record has no sampling rate");
    require(t0_s >= 0.0, Err::OutOfBounds, "t0 must be non-negative");
    require(window_len >= 1, Err::InvalidArgument, "window_len must be positive");

    const long long len = static_cast<long long>(record.length());
    const long long i0 = std::llround(t0_s * record.fs);
    const long long i1 = std::llround((t0_s + delay_s) * record.fs);
    require(i1 >= 0, Err::OutOfBounds, "delayed window starts before the record");
    require(i0 + window_len <= len && i1 + window_len <= len, Err::OutOfBounds,
            "window exceeds record length");

    const auto& li = record[LeadId::I];
    const auto& lii = record[LeadId::II];

    AsyncLeadPair pair;
    pair.window_len = window_len;
    pair.delay = delay_s;
    pair.t0 = t0_s;
    pair.fs = record.fs;
    pair.lead_i.assign(li.begin() + i0, li.begin() + i0 + window_len);
    pair.lead_ii.assign(lii.begin() + i1, lii.begin() + i1 + window_len);
    return pair;
}

LimbLeads derive_limb_leads(std::span<const float> lead_i, std::span<const float> lead_ii) {
    require(lead_i.size() == lead_ii.size(), Err::LengthMismatch,
            "lead I and lead II lengths differ");
    const size_t n = lead_i.size();
    LimbLeads out;
    out.iii.resize(n);
    out.avr.resize(n);
    out.avl.resize(n);
    out.avf.resize(n);
    for (size_t k = 0; k < n; ++k) {
        const double a = lead_i[k];
        const double b = lead_ii[k];
        out.iii[k] = static_cast<float>(b - a);
        out.avr[k] = static_cast<float>(-(a + b) / 2.0);
        out.avl[k] = static_cast<float>(a - b / 2.0);
        out.avf[k] = static_cast<float>(b - a / 2.0);
    }
    return out;
}

namespace {

template <class S>
std::vector<double> normalize_impl(std::span<const S> x, WindowStats* stats) {
    require(x.size() >= 2, Err::InvalidArgument, "normalize_window needs length >= 2");
    const size_t n = x.size();
    double mean = 0.0;
    for (S v : x) mean += static_cast<double>(v);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (S v : x) {
        double d = static_cast<double>(v) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    double sd = std::sqrt(var);

    std::vector<double> out(n, 0.0);
    if (sd < 1e-8) {
        if (stats) *stats = {mean, 0.0};
        return out;  // degenerate flat window
    }
    for (size_t k = 0; k < n; ++k) out[k] = (static_cast<double>(x[k]) - mean) / sd;
    if (stats) *stats = {mean, sd};
    return out;
}

}  // namespace

std::vector<double> normalize_window(std::span<const double> x, WindowStats* stats) {
    return normalize_impl(x, stats);
}

std::vector<double> normalize_window(std::span<const float> x, WindowStats* stats) {
    return normalize_impl(x, stats);
}

std::vector<double> normalize_with(std::span<const float> x, const WindowStats& stats) {
    std::vector<double> out(x.size(), 0.0);
    if (stats.std < 1e-8) return out;
    for (size_t k = 0; k < x.size(); ++k) {
        out[k] = (static_cast<double>(x[k]) - stats.mean) / stats.std;
    }
    return out;
}

std::vector<float> denormalize_with(std::span<const float> x, const WindowStats& stats) {
    std::vector<float> out(x.size());
    const double sd = stats.std < 1e-8 ? 0.0 : stats.std;
    for (size_t k = 0; k < x.size(); ++k) {
        out[k] = static_cast<float>(static_cast<double>(x[k]) * sd + stats.mean);
    }
    return out;
}

}  // namespace ecgt2t
