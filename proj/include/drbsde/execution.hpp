#pragma once

namespace drbsde {

// Every data-parallel kernel has a serial reference path and an OpenMP path.
// Both produce bit-identical results; the serial path exists for testing and
// for callers that already parallelize at a coarser level.
enum class Execution { serial, parallel };

// Thread count for OpenMP regions. `requested` <= 0 falls back to the
// DRBSDE_THREADS environment variable, then to the OpenMP default.
void configure_threads(int requested);
int active_threads();

}  // namespace drbsde
