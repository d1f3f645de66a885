#ifndef LYMPHNET_KERNELS_HPP
#define LYMPHNET_KERNELS_HPP

#include <cstddef>
#include <string>

namespace lymphnet::kernels {

// ---------------------------------------------------------------------------
// Scalar reference kernels.
//
// All matrices are row-major. Accumulation over k runs in ascending order;
// these definitions are the semantic reference the SIMD variants are tested
// against. Instantiated for float and double.
// ---------------------------------------------------------------------------

// C[MxN] = A[MxK] * B[KxN], += if accumulate.
template <typename T>
void gemm_nn_ref(std::size_t M, std::size_t N, std::size_t K,
                 const T* A, const T* B, T* C, bool accumulate) {
    for (std::size_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        if (!accumulate) {
            for (std::size_t j = 0; j < N; ++j) c[j] = T(0);
        }
        const T* a = A + i * K;
        for (std::size_t k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[MxN] = A[MxK] * B^T, B stored [NxK].
template <typename T>
void gemm_nt_ref(std::size_t M, std::size_t N, std::size_t K,
                 const T* A, const T* B, T* C, bool accumulate) {
    for (std::size_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        for (std::size_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            T acc = T(0);
            for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
            if (accumulate)
                C[i * N + j] += acc;
            else
                C[i * N + j] = acc;
        }
    }
}

// C[MxN] = A^T * B, A stored [KxM], B stored [KxN].
template <typename T>
void gemm_tn_ref(std::size_t M, std::size_t N, std::size_t K,
                 const T* A, const T* B, T* C, bool accumulate) {
    for (std::size_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        if (!accumulate) {
            for (std::size_t j = 0; j < N; ++j) c[j] = T(0);
        }
        for (std::size_t k = 0; k < K; ++k) {
            const T av = A[k * M + i];
            const T* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// v = mu*v - lr*g; w += v. Kept as separate mul/mul/sub so the vector
// variants round identically to this scalar form.
template <typename T>
void sgd_momentum_ref(T* w, T* v, const T* g, std::size_t n, T lr, T mu) {
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = mu * v[i] - lr * g[i];
        w[i] += v[i];
    }
}

// ---------------------------------------------------------------------------
// Runtime-dispatched float kernels. The scalar backend wraps the reference
// templates above; the avx2 backend is compiled separately with -mavx2 -mfma
// and selected at runtime when the CPU supports it.
// ---------------------------------------------------------------------------

struct Backend {
    const char* name;
    void (*gemm_nn)(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
    void (*gemm_nt)(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
    void (*gemm_tn)(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
    void (*sgd_momentum)(float*, float*, const float*, std::size_t, float, float);
};

const Backend& scalar_backend();

// Null when not compiled in or the CPU lacks avx2/fma.
const Backend* avx2_backend();

// Currently selected backend (avx2 when available unless overridden).
const Backend& active_backend();

// Select "auto", "scalar" or "avx2". Throws std::runtime_error if unavailable.
void set_backend(const std::string& name);

}  // namespace lymphnet::kernels

#endif
