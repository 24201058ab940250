#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace tscl {

// Worker cap from TSCL_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_threads();

// Runs body(i) for i in [0, n) on up to worker_threads() threads. Results
// must not depend on scheduling; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

// Keep large freed blocks in the heap instead of returning them to the OS;
// training reallocates the same activation sizes every step.
void tune_allocator();

}  // namespace tscl
