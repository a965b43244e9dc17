#pragma once

namespace csr {

// Data-parallel loops take an explicit mode so the serial reference path
// stays available for equivalence tests and benchmarks.
enum class ExecMode : unsigned char { serial, parallel };

}  // namespace csr
