#include "atdl/parallel.hpp"

#include <cstdlib>

namespace atdl {

std::size_t default_workers() {
    if (const char* env = std::getenv("ATDL_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

} // namespace atdl
