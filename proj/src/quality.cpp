#include "ecgt2t/quality.hpp"

#include <algorithm>
#include <cmath>

namespace ecgt2t {

namespace {

// Centered moving average with zero padding at the edges; width forced odd.
std::vector<double> moving_average(const std::vector<double>& x, int width) {
    if (width < 1) width = 1;
    if (width % 2 == 0) ++width;
    const int half = width / 2;
    const int n = static_cast<int>(x.size());
    std::vector<double> prefix(n + 1, 0.0);
    for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        const int a = std::max(0, i - half);
        const int b = std::min(n - 1, i + half);
        out[i] = (prefix[b + 1] - prefix[a]) / width;
    }
    return out;
}

std::vector<double> first_difference(const std::vector<double>& x) {
    std::vector<double> out(x.size(), 0.0);
    for (size_t i = 1; i < x.size(); ++i) out[i] = x[i] - x[i - 1];
    return out;
}

}  // namespace

PeakSet detect_rpeaks(std::span<const float> x, int fs) {
    require(fs >= 100, Err::InvalidArgument, "detector needs fs >= 100");
    require(static_cast<int>(x.size()) >= fs / 2, Err::SignalTooShort,
            "signal shorter than half a second");

    const int n = static_cast<int>(x.size());
    std::vector<double> sig(x.begin(), x.end());

    // Band-pass: two cascaded difference + moving-average stages. The MA
    // width of ~30 ms keeps QRS energy and suppresses powerline noise; the
    // differences kill baseline wander.
    const int w_bp = std::max(3, static_cast<int>(std::lround(0.03 * fs)));
    std::vector<double> f = moving_average(first_difference(sig), w_bp);
    f = moving_average(first_difference(f), w_bp);

    for (auto& v : f) v = v * v;

    // 150 ms moving-window integration
    const int w_mwi = std::max(3, static_cast<int>(std::lround(0.150 * fs)));
    std::vector<double> env = moving_average(f, w_mwi);

    // Envelope local maxima (plateaus contribute their first sample).
    std::vector<int> cand;
    for (int i = 1; i + 1 < n; ++i) {
        if (env[i] > 0 && env[i] > env[i - 1] && env[i] >= env[i + 1]) cand.push_back(i);
    }

    // Adaptive threshold: half the running mean of accepted envelope peaks,
    // seeded from the largest envelope value in the first two seconds.
    const int warmup = std::min(n - 1, 2 * fs);
    double running = 0.0;
    for (int i = 0; i <= warmup; ++i) running = std::max(running, env[i]);
    if (running <= 0.0) {
        for (int i = 0; i < n; ++i) running = std::max(running, env[i]);
    }

    const int refractory = static_cast<int>(std::lround(0.200 * fs));
    const int refine = static_cast<int>(std::lround(0.050 * fs));

    PeakSet peaks;
    peaks.fs = fs;
    int last = -refractory - 1;
    for (int c : cand) {
        if (env[c] < 0.5 * running) continue;
        if (c - last < refractory) continue;
        last = c;
        running = 0.875 * running + 0.125 * env[c];

        int best = std::max(0, c - refine);
        const int hi = std::min(n - 1, c + refine);
        for (int i = best + 1; i <= hi; ++i) {
            if (std::abs(sig[i]) > std::abs(sig[best])) best = i;
        }
        if (!peaks.indices.empty() && best <= peaks.indices.back()) continue;
        peaks.indices.push_back(best);
        peaks.amplitudes.push_back(x[best]);
    }
    return peaks;
}

MatchResult match_peaks(const PeakSet& ref, const PeakSet& gen, double tolerance_ms) {
    require(ref.fs == gen.fs, Err::RateMismatch, "peak sets have different sampling rates");
    require(ref.fs > 0, Err::InvalidArgument, "peak sets need a sampling rate");
    const double tol_samples = tolerance_ms * ref.fs / 1000.0;

    MatchResult out;
    out.fs = ref.fs;
    std::vector<bool> used(gen.size(), false);
    for (size_t r = 0; r < ref.size(); ++r) {
        int best = -1;
        double best_d = tol_samples;
        for (size_t g = 0; g < gen.size(); ++g) {
            if (used[g]) continue;
            const double d = std::abs(static_cast<double>(gen.indices[g]) - ref.indices[r]);
            if (d <= best_d) {
                best_d = d;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            used[best] = true;
            out.pairs.push_back({ref.indices[r], gen.indices[best], ref.amplitudes[r],
                                 gen.amplitudes[best]});
        } else {
            ++out.missed_ref;
        }
    }
    for (bool u : used) {
        if (!u) ++out.spurious_gen;
    }
    return out;
}

double amplitude_gap_pct(const MatchResult& match, int* zero_ref_skipped) {
    require(!match.pairs.empty(), Err::NoMatches, "no matched peaks");
    double acc = 0.0;
    int used = 0, skipped = 0;
    for (const auto& p : match.pairs) {
        if (p.ref_amp == 0.0f) {
            ++skipped;
            continue;
        }
        acc += std::abs(static_cast<double>(p.gen_amp) - p.ref_amp) / std::abs(p.ref_amp);
        ++used;
    }
    if (zero_ref_skipped) *zero_ref_skipped = skipped;
    require(used > 0, Err::NoMatches, "all matched pairs had zero reference amplitude");
    return acc / used * 100.0;
}

double position_error_ms(const MatchResult& match, int fs) {
    require(!match.pairs.empty(), Err::NoMatches, "no matched peaks");
    require(fs > 0, Err::InvalidArgument, "fs must be positive");
    double acc = 0.0;
    for (const auto& p : match.pairs) {
        acc += std::abs(static_cast<double>(p.gen_index) - p.ref_index);
    }
    return acc / match.pairs.size() / fs * 1000.0;
}

nlohmann::json QualityReport::to_json() const {
    auto lead_json = [](const LeadQuality& q) {
        return nlohmann::json{{"amp_pct", q.amp_pct},
                              {"pos_ms", q.pos_ms},
                              {"matched", q.matched},
                              {"missed_ref", q.missed_ref},
                              {"spurious_gen", q.spurious_gen},
                              {"zero_ref_skipped", q.zero_ref_skipped}};
    };
    nlohmann::json doc = lead_json(pooled);
    doc["per_lead"] = nlohmann::json::object();
    for (const auto& [lead, q] : per_lead) doc["per_lead"][lead_name(lead)] = lead_json(q);
    return doc;
}

QualityReport assess_leads(const EcgRecord& ref, const EcgRecord& gen,
                           const std::vector<LeadId>& leads, double tolerance_ms) {
    require(ref.fs == gen.fs, Err::RateMismatch, "records have different sampling rates");
    QualityReport report;

    double pooled_amp = 0.0, pooled_pos = 0.0;
    int pooled_amp_n = 0, pooled_pos_n = 0;

    for (LeadId lead : leads) {
        require(ref.has(lead), Err::MissingLead,
                std::string("reference record lacks lead ") + lead_name(lead));
        require(gen.has(lead), Err::MissingLead,
                std::string("generated record lacks lead ") + lead_name(lead));
        auto pr = detect_rpeaks(ref[lead], ref.fs);
        auto pg = detect_rpeaks(gen[lead], gen.fs);
        auto match = match_peaks(pr, pg, tolerance_ms);

        LeadQuality q;
        q.matched = static_cast<int>(match.pairs.size());
        q.missed_ref = match.missed_ref;
        q.spurious_gen = match.spurious_gen;
        if (!match.pairs.empty()) {
            q.pos_ms = position_error_ms(match, ref.fs);
            pooled_pos += q.pos_ms * match.pairs.size();
            pooled_pos_n += static_cast<int>(match.pairs.size());
            try {
                q.amp_pct = amplitude_gap_pct(match, &q.zero_ref_skipped);
                const int amp_n = q.matched - q.zero_ref_skipped;
                pooled_amp += q.amp_pct * amp_n;
                pooled_amp_n += amp_n;
            } catch (const Error& e) {
                if (e.kind() != Err::NoMatches) throw;
                q.zero_ref_skipped = q.matched;
            }
        }
        report.per_lead[lead] = q;
        report.pooled.matched += q.matched;
        report.pooled.missed_ref += q.missed_ref;
        report.pooled.spurious_gen += q.spurious_gen;
        report.pooled.zero_ref_skipped += q.zero_ref_skipped;
    }
    report.pooled.amp_pct = pooled_amp_n > 0 ? pooled_amp / pooled_amp_n : 0.0;
    report.pooled.pos_ms = pooled_pos_n > 0 ? pooled_pos / pooled_pos_n : 0.0;
    return report;
}

}  // namespace ecgt2t
