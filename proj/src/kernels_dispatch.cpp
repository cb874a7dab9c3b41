#include <atomic>
#include <cstdlib>
#include <stdexcept>

#include "planter/kernels.hpp"

namespace planter::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

std::atomic<int> forced{-1};  // -1 unset, else int(Backend)
std::atomic<bool> resolved{false};

const KernelTable* resolve() {
    int f = forced.load();
    if (f < 0) {
        if (const char* env = std::getenv("PLANTER_BACKEND")) {
            std::string s(env);
            if (s == "scalar")
                f = int(Backend::scalar);
            else if (s == "avx2")
                f = int(Backend::avx2);
            else if (!s.empty())
                throw std::runtime_error("unknown PLANTER_BACKEND '" + s + "'");
        }
    }
    if (f == int(Backend::scalar)) return &scalar_table();
    if (f == int(Backend::avx2)) {
        if (!avx2_available()) throw std::runtime_error("AVX2 backend requested but unavailable");
        return avx2_table();
    }
    return avx2_available() ? avx2_table() : &scalar_table();
}

}  // namespace

bool avx2_available() { return avx2_table() != nullptr && cpu_has_avx2(); }

const KernelTable& active_table() {
    static const KernelTable* table = [] {
        resolved.store(true);
        return resolve();
    }();
    return *table;
}

Backend active_backend() {
    return &active_table() == &scalar_table() ? Backend::scalar : Backend::avx2;
}

void force_backend(Backend b) {
    if (resolved.load() && active_backend() != b)
        throw std::runtime_error("kernel backend already resolved; set it before first use");
    forced.store(int(b));
    active_table();  // resolve now so a bad choice fails here
}

std::string backend_name(Backend b) { return b == Backend::scalar ? "scalar" : "avx2"; }

}  // namespace planter::kernels
