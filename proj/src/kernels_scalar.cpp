#include "lymphnet/kernels.hpp"

// Float instantiations of the reference kernels, wrapped as the scalar
// backend. This translation unit is built without any -m arch flags.

namespace lymphnet::kernels {

namespace {

void gemm_nn_f32(std::size_t M, std::size_t N, std::size_t K,
                 const float* A, const float* B, float* C, bool acc) {
    gemm_nn_ref<float>(M, N, K, A, B, C, acc);
}

void gemm_nt_f32(std::size_t M, std::size_t N, std::size_t K,
                 const float* A, const float* B, float* C, bool acc) {
    gemm_nt_ref<float>(M, N, K, A, B, C, acc);
}

void gemm_tn_f32(std::size_t M, std::size_t N, std::size_t K,
                 const float* A, const float* B, float* C, bool acc) {
    gemm_tn_ref<float>(M, N, K, A, B, C, acc);
}

void sgd_momentum_f32(float* w, float* v, const float* g, std::size_t n,
                      float lr, float mu) {
    sgd_momentum_ref<float>(w, v, g, n, lr, mu);
}

}  // namespace

const Backend& scalar_backend() {
    static const Backend backend{
        "scalar", gemm_nn_f32, gemm_nt_f32, gemm_tn_f32, sgd_momentum_f32,
    };
    return backend;
}

}  // namespace lymphnet::kernels
