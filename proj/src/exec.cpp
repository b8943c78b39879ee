#include "mfos/exec.hpp"

#include <omp.h>

namespace mfos {

namespace {
int g_default_threads = 0;
}

void set_num_threads(int n) {
  if (g_default_threads == 0) g_default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : g_default_threads);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace mfos
