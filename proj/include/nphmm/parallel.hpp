#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace nphmm {

// Worker count used by parallel_for. 0 selects the hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

//! Runs body(i) for i in [0, n). Calls made from inside a worker run serially,
//! so nested loops never oversubscribe. The first exception (by index) is
//! rethrown after all tasks finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

//! splitmix64-based stream derivation: independent seeds from (base, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

} // namespace nphmm
