#pragma once

namespace sce {

// Selects between the OpenMP kernels and the serial reference loops. Both
// produce bit-identical results; the serial path exists for testing and
// for callers that already parallelize at a coarser grain.
enum class Exec { kSerial, kParallel };

}  // namespace sce
