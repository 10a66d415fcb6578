#include "vseg/parallel.hpp"

namespace vseg {

namespace {
std::atomic<std::size_t> configured_threads{1};
}

void set_thread_count(std::size_t count) { configured_threads = count == 0 ? 1 : count; }

std::size_t thread_count() { return configured_threads; }

}  // namespace vseg
