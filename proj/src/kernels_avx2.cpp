#include "lymphnet/kernels.hpp"

// AVX2/FMA variants of the float kernels. This translation unit is the only
// one built with -mavx2 -mfma; everything else stays at the baseline ISA so
// the scalar reference keeps plain IEEE semantics.

#if defined(LYMPHNET_COMPILE_AVX2)

#include <immintrin.h>

namespace lymphnet::kernels {

namespace {

inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
    return _mm_cvtss_f32(s);
}

// 4 rows x 16 columns, k-inner with broadcast+FMA.
inline void block_4x16(std::size_t K, std::size_t N,
                       const float* a0, const float* a1, const float* a2, const float* a3,
                       std::size_t a_stride,
                       const float* B, float* c0, float* c1, float* c2, float* c3,
                       bool acc) {
    __m256 r00, r01, r10, r11, r20, r21, r30, r31;
    if (acc) {
        r00 = _mm256_loadu_ps(c0); r01 = _mm256_loadu_ps(c0 + 8);
        r10 = _mm256_loadu_ps(c1); r11 = _mm256_loadu_ps(c1 + 8);
        r20 = _mm256_loadu_ps(c2); r21 = _mm256_loadu_ps(c2 + 8);
        r30 = _mm256_loadu_ps(c3); r31 = _mm256_loadu_ps(c3 + 8);
    } else {
        r00 = r01 = r10 = r11 = r20 = r21 = r30 = r31 = _mm256_setzero_ps();
    }
    for (std::size_t k = 0; k < K; ++k) {
        const __m256 b0 = _mm256_loadu_ps(B + k * N);
        const __m256 b1 = _mm256_loadu_ps(B + k * N + 8);
        __m256 a;
        a = _mm256_broadcast_ss(a0 + k * a_stride);
        r00 = _mm256_fmadd_ps(a, b0, r00); r01 = _mm256_fmadd_ps(a, b1, r01);
        a = _mm256_broadcast_ss(a1 + k * a_stride);
        r10 = _mm256_fmadd_ps(a, b0, r10); r11 = _mm256_fmadd_ps(a, b1, r11);
        a = _mm256_broadcast_ss(a2 + k * a_stride);
        r20 = _mm256_fmadd_ps(a, b0, r20); r21 = _mm256_fmadd_ps(a, b1, r21);
        a = _mm256_broadcast_ss(a3 + k * a_stride);
        r30 = _mm256_fmadd_ps(a, b0, r30); r31 = _mm256_fmadd_ps(a, b1, r31);
    }
    _mm256_storeu_ps(c0, r00); _mm256_storeu_ps(c0 + 8, r01);
    _mm256_storeu_ps(c1, r10); _mm256_storeu_ps(c1 + 8, r11);
    _mm256_storeu_ps(c2, r20); _mm256_storeu_ps(c2 + 8, r21);
    _mm256_storeu_ps(c3, r30); _mm256_storeu_ps(c3 + 8, r31);
}

// 1 row x 8 columns.
inline void block_1x8(std::size_t K, std::size_t N, const float* a, std::size_t a_stride,
                      const float* B, float* c, bool acc) {
    __m256 r = acc ? _mm256_loadu_ps(c) : _mm256_setzero_ps();
    for (std::size_t k = 0; k < K; ++k) {
        const __m256 b = _mm256_loadu_ps(B + k * N);
        r = _mm256_fmadd_ps(_mm256_broadcast_ss(a + k * a_stride), b, r);
    }
    _mm256_storeu_ps(c, r);
}

inline void scalar_cell(std::size_t K, std::size_t N, const float* a, std::size_t a_stride,
                        const float* b_col, float* c, bool acc) {
    float s = 0.0f;
    for (std::size_t k = 0; k < K; ++k) s += a[k * a_stride] * b_col[k * N];
    *c = acc ? *c + s : s;
}

// Shared core for nn (a_stride=1, row i at A+i*K) and tn (a_stride=M, row i at A+i).
inline void gemm_rowmajor_bpanel(std::size_t M, std::size_t N, std::size_t K,
                                 const float* A, std::size_t row_step, std::size_t a_stride,
                                 const float* B, float* C, bool acc) {
    std::size_t i = 0;
    for (; i + 4 <= M; i += 4) {
        const float* a0 = A + (i + 0) * row_step;
        const float* a1 = A + (i + 1) * row_step;
        const float* a2 = A + (i + 2) * row_step;
        const float* a3 = A + (i + 3) * row_step;
        float* c0 = C + (i + 0) * N;
        float* c1 = C + (i + 1) * N;
        float* c2 = C + (i + 2) * N;
        float* c3 = C + (i + 3) * N;
        std::size_t j = 0;
        for (; j + 16 <= N; j += 16)
            block_4x16(K, N, a0, a1, a2, a3, a_stride, B + j, c0 + j, c1 + j, c2 + j, c3 + j, acc);
        for (; j + 8 <= N; j += 8) {
            block_1x8(K, N, a0, a_stride, B + j, c0 + j, acc);
            block_1x8(K, N, a1, a_stride, B + j, c1 + j, acc);
            block_1x8(K, N, a2, a_stride, B + j, c2 + j, acc);
            block_1x8(K, N, a3, a_stride, B + j, c3 + j, acc);
        }
        for (; j < N; ++j) {
            scalar_cell(K, N, a0, a_stride, B + j, c0 + j, acc);
            scalar_cell(K, N, a1, a_stride, B + j, c1 + j, acc);
            scalar_cell(K, N, a2, a_stride, B + j, c2 + j, acc);
            scalar_cell(K, N, a3, a_stride, B + j, c3 + j, acc);
        }
    }
    for (; i < M; ++i) {
        const float* a = A + i * row_step;
        float* c = C + i * N;
        std::size_t j = 0;
        for (; j + 8 <= N; j += 8) block_1x8(K, N, a, a_stride, B + j, c + j, acc);
        for (; j < N; ++j) scalar_cell(K, N, a, a_stride, B + j, c + j, acc);
    }
}

void gemm_nn_avx2(std::size_t M, std::size_t N, std::size_t K,
                  const float* A, const float* B, float* C, bool acc) {
    gemm_rowmajor_bpanel(M, N, K, A, /*row_step=*/K, /*a_stride=*/1, B, C, acc);
}

void gemm_tn_avx2(std::size_t M, std::size_t N, std::size_t K,
                  const float* A, const float* B, float* C, bool acc) {
    // A is KxM; row i of the logical A^T starts at A+i with stride M.
    gemm_rowmajor_bpanel(M, N, K, A, /*row_step=*/1, /*a_stride=*/M, B, C, acc);
}

void gemm_nt_avx2(std::size_t M, std::size_t N, std::size_t K,
                  const float* A, const float* B, float* C, bool acc) {
    const std::size_t kv = K & ~std::size_t(7);
    for (std::size_t i = 0; i < M; ++i) {
        const float* a = A + i * K;
        std::size_t j = 0;
        for (; j + 4 <= N; j += 4) {
            const float* b0 = B + (j + 0) * K;
            const float* b1 = B + (j + 1) * K;
            const float* b2 = B + (j + 2) * K;
            const float* b3 = B + (j + 3) * K;
            __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
            __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
            for (std::size_t k = 0; k < kv; k += 8) {
                const __m256 av = _mm256_loadu_ps(a + k);
                s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + k), s0);
                s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + k), s1);
                s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + k), s2);
                s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + k), s3);
            }
            float r0 = hsum256(s0), r1 = hsum256(s1), r2 = hsum256(s2), r3 = hsum256(s3);
            for (std::size_t k = kv; k < K; ++k) {
                r0 += a[k] * b0[k];
                r1 += a[k] * b1[k];
                r2 += a[k] * b2[k];
                r3 += a[k] * b3[k];
            }
            float* c = C + i * N + j;
            if (acc) {
                c[0] += r0; c[1] += r1; c[2] += r2; c[3] += r3;
            } else {
                c[0] = r0; c[1] = r1; c[2] = r2; c[3] = r3;
            }
        }
        for (; j < N; ++j) {
            const float* b = B + j * K;
            __m256 s = _mm256_setzero_ps();
            for (std::size_t k = 0; k < kv; k += 8)
                s = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s);
            float r = hsum256(s);
            for (std::size_t k = kv; k < K; ++k) r += a[k] * b[k];
            float* c = C + i * N + j;
            *c = acc ? *c + r : r;
        }
    }
}

// Deliberately mul/mul/sub (no FMA) so every lane rounds exactly like the
// scalar reference; the equivalence test asserts bit equality.
void sgd_momentum_avx2(float* w, float* v, const float* g, std::size_t n,
                       float lr, float mu) {
    const __m256 vmu = _mm256_set1_ps(mu);
    const __m256 vlr = _mm256_set1_ps(lr);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 vv = _mm256_loadu_ps(v + i);
        const __m256 vg = _mm256_loadu_ps(g + i);
        const __m256 nv = _mm256_sub_ps(_mm256_mul_ps(vmu, vv), _mm256_mul_ps(vlr, vg));
        _mm256_storeu_ps(v + i, nv);
        _mm256_storeu_ps(w + i, _mm256_add_ps(_mm256_loadu_ps(w + i), nv));
    }
    for (; i < n; ++i) {
        v[i] = mu * v[i] - lr * g[i];
        w[i] += v[i];
    }
}

}  // namespace

const Backend* avx2_backend() {
#if defined(__GNUC__)
    static const bool supported =
        __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    static const bool supported = false;
#endif
    static const Backend backend{
        "avx2", gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2, sgd_momentum_avx2,
    };
    return supported ? &backend : nullptr;
}

}  // namespace lymphnet::kernels

#else  // !LYMPHNET_COMPILE_AVX2

namespace lymphnet::kernels {

const Backend* avx2_backend() { return nullptr; }

}  // namespace lymphnet::kernels

#endif
