#pragma once

#include <cstdint>

namespace splicedet::par {

/// Global switch between the OpenMP kernels and the serial reference
/// kernels. Defaults to parallel when the build has OpenMP. Every kernel
/// comes in both flavors and the pair is bitwise-equivalent; the switch
/// exists so the trainer, the tests, and the benchmark can pick either.
bool enabled();
void set_enabled(bool on);

/// Number of worker threads the OpenMP kernels will use.
int max_threads();
void set_max_threads(int n);

}  // namespace splicedet::par
