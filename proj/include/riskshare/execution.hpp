#pragma once

namespace riskshare {

// serial is the reference path; parallel uses OpenMP over independent outputs
// and produces bit-identical results.
enum class Exec { serial, parallel };

} // namespace riskshare
