#include "ecgt2t/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ecgt2t {

namespace {

constexpr int kCols = 3;
constexpr int kRows = 4;
constexpr double kPanelW = 240.0;
constexpr double kPanelH = 120.0;
constexpr double kMargin = 16.0;
constexpr double kLabelH = 14.0;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void append_polyline(std::string& out, const std::vector<float>& lead, long long start,
                     long long count, double x0, double y0, double lo, double hi,
                     const char* color) {
    out += "    <polyline fill=\"none\" stroke=\"";
    out += color;
    out += "\" stroke-width=\"1\" points=\"";
    const double span = hi - lo;
    for (long long k = 0; k < count; ++k) {
        const double frac = count > 1 ? static_cast<double>(k) / (count - 1) : 0.0;
        const double x = x0 + frac * kPanelW;
        const double v = lead[static_cast<size_t>(start + k)];
        const double y = y0 + kLabelH + (kPanelH - kLabelH) * (1.0 - (v - lo) / span);
        if (k) out += ' ';
        out += fmt(x);
        out += ',';
        out += fmt(y);
    }
    out += "\"/>\n";
}

}  // namespace

std::string plot_overlay_svg(const EcgRecord& ref, const EcgRecord* t2t,
                             const EcgRecord* s2e, double t0_s, double window_s) {
    ref.validate();
    const int fs = ref.fs;
    if (t2t) require(t2t->fs == fs, Err::RateMismatch, "t2t record fs differs");
    if (s2e) require(s2e->fs == fs, Err::RateMismatch, "s2e record fs differs");

    const long long start = std::llround(t0_s * fs);
    const long long count = std::llround(window_s * fs);
    require(count >= 2, Err::InvalidArgument, "window too short to plot");
    auto fits = [&](const EcgRecord& r) {
        return start >= 0 && start + count <= static_cast<long long>(r.length());
    };
    require(fits(ref) && (!t2t || fits(*t2t)) && (!s2e || fits(*s2e)), Err::WindowTooLong,
            "plot window exceeds a record");

    const double width = kCols * kPanelW + (kCols + 1) * kMargin;
    const double height = kRows * kPanelH + (kRows + 1) * kMargin;

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
           "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " +
           fmt(height) + "\">\n";
    out += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (int li = 0; li < kNumLeads; ++li) {
        const LeadId lead = static_cast<LeadId>(li);
        const int row = li / kCols;
        const int col = li % kCols;
        const double x0 = kMargin + col * (kPanelW + kMargin);
        const double y0 = kMargin + row * (kPanelH + kMargin);

        double lo = 1e30, hi = -1e30;
        auto widen = [&](const EcgRecord& r) {
            if (!r.has(lead)) return;
            const auto& v = r[lead];
            for (long long k = 0; k < count; ++k) {
                lo = std::min(lo, static_cast<double>(v[static_cast<size_t>(start + k)]));
                hi = std::max(hi, static_cast<double>(v[static_cast<size_t>(start + k)]));
            }
        };
        widen(ref);
        if (t2t) widen(*t2t);
        if (s2e) widen(*s2e);
        if (lo > hi) {
            lo = -1.0;
            hi = 1.0;
        }
        const double pad = std::max(0.05 * (hi - lo), 1e-6);
        lo -= pad;
        hi += pad;

        out += "  <g id=\"lead-" + std::string(lead_name(lead)) + "\">\n";
        out += "    <rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y0) + "\" width=\"" +
               fmt(kPanelW) + "\" height=\"" + fmt(kPanelH) +
               "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
        out += "    <text x=\"" + fmt(x0 + 4) + "\" y=\"" + fmt(y0 + kLabelH - 3) +
               "\" font-family=\"sans-serif\" font-size=\"10\">" + lead_name(lead) +
               "</text>\n";
        if (ref.has(lead)) {
            append_polyline(out, ref[lead], start, count, x0, y0, lo, hi, "black");
        }
        if (t2t && t2t->has(lead)) {
            append_polyline(out, (*t2t)[lead], start, count, x0, y0, lo, hi, "blue");
        }
        if (s2e && s2e->has(lead)) {
            append_polyline(out, (*s2e)[lead], start, count, x0, y0, lo, hi, "red");
        }
        out += "  </g>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace ecgt2t
