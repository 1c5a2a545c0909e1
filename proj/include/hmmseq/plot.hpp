#pragma once

#include <string>
#include <vector>

#include "hmmseq/eval.hpp"

namespace hmmseq {

// Fixed 480x480 monochrome SVG renderings.
std::string roc_svg(const RocCurve& roc, const std::string& title);
std::string calibration_svg(const std::vector<CalibrationPoint>& points, const std::string& title);

} // namespace hmmseq
