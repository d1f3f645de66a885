#include "lymphnet/kernels.hpp"

#include <stdexcept>

namespace lymphnet::kernels {

namespace {

const Backend* g_selected = nullptr;

const Backend* pick_auto() {
    if (const Backend* avx2 = avx2_backend()) return avx2;
    return &scalar_backend();
}

}  // namespace

const Backend& active_backend() {
    if (!g_selected) g_selected = pick_auto();
    return *g_selected;
}

void set_backend(const std::string& name) {
    if (name == "auto") {
        g_selected = pick_auto();
    } else if (name == "scalar") {
        g_selected = &scalar_backend();
    } else if (name == "avx2") {
        const Backend* avx2 = avx2_backend();
        if (!avx2) throw std::runtime_error("avx2 backend not available on this CPU/build");
        g_selected = avx2;
    } else {
        throw std::runtime_error("unknown kernel backend '" + name +
                                 "' (expected auto, scalar or avx2)");
    }
}

}  // namespace lymphnet::kernels
