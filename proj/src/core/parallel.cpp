#include "splicedet/core/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace splicedet::par {

namespace {
#ifdef _OPENMP
bool g_enabled = true;
#else
bool g_enabled = false;
#endif
}  // namespace

bool enabled() { return g_enabled; }

void set_enabled(bool on) {
#ifdef _OPENMP
    g_enabled = on;
#else
    (void)on;
    g_enabled = false;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_max_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

}  // namespace splicedet::par
