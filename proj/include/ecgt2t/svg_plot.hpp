#pragma once

#include <optional>
#include <string>

#include "ecgt2t/signal.hpp"

namespace ecgt2t {

// 12-panel overlay figure: reference signal in black, t2t synthesis in
// blue, s2e synthesis in red, one panel per lead in display order
// (I II III / aVR aVL aVF / V1 V2 V3 / V4 V5 V6). Returns the SVG document.
std::string plot_overlay_svg(const EcgRecord& ref, const EcgRecord* t2t,
                             const EcgRecord* s2e, double t0_s, double window_s);

}  // namespace ecgt2t
