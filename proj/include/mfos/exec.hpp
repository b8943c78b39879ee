#pragma once

namespace mfos {

// Selects the OpenMP kernel or its serial reference. Both produce identical
// results; the serial path exists for testing and benchmarking.
enum class Exec { serial, parallel };

// Caps OpenMP parallelism; n <= 0 restores the runtime default.
void set_num_threads(int n);
int max_threads();

}  // namespace mfos
