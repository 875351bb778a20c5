#include "gfmmr/parallel.hpp"

#include <cstdlib>
#include <string>

namespace gfmmr {

int workers_from_env(int fallback) {
    const char* raw = std::getenv("GFMMR_WORKERS");
    if (raw == nullptr || *raw == '\0') return fallback;
    try {
        std::size_t used = 0;
        const int v = std::stoi(raw, &used);
        if (used != std::string(raw).size() || v < 1) return fallback;
        return v;
    } catch (const std::exception&) {
        return fallback;
    }
}

}  // namespace gfmmr
