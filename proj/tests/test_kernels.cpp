#include "lymphnet/kernels.hpp"

#include <cstring>
#include <vector>

#include "doctest.h"
#include "lymphnet/rng.hpp"
#include "support.hpp"

using namespace lymphnet;

TEST_CASE("gemm_nn_ref on a hand-checked 2x2 product") {
    const std::vector<double> A{1, 2, 3, 4};
    const std::vector<double> B{5, 6, 7, 8};
    std::vector<double> C(4, 100.0);
    kernels::gemm_nn_ref<double>(2, 2, 2, A.data(), B.data(), C.data(), false);
    CHECK(C == std::vector<double>{19, 22, 43, 50});

    kernels::gemm_nn_ref<double>(2, 2, 2, A.data(), B.data(), C.data(), true);
    CHECK(C == std::vector<double>{38, 44, 86, 100});
}

TEST_CASE("gemm_nt_ref and gemm_tn_ref agree with explicit transposition") {
    auto eng = rng::make_engine(11);
    const std::size_t M = 5, N = 7, K = 4;
    std::vector<double> A(M * K), B(K * N);
    for (auto& v : A) v = rng::uniform(eng, -2, 2);
    for (auto& v : B) v = rng::uniform(eng, -2, 2);

    std::vector<double> want(M * N);
    kernels::gemm_nn_ref<double>(M, N, K, A.data(), B.data(), want.data(), false);

    // nt: feed B transposed, stored [NxK].
    std::vector<double> Bt(N * K);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < N; ++j) Bt[j * K + k] = B[k * N + j];
    std::vector<double> got(M * N);
    kernels::gemm_nt_ref<double>(M, N, K, A.data(), Bt.data(), got.data(), false);
    for (std::size_t i = 0; i < M * N; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // tn: feed A transposed, stored [KxM].
    std::vector<double> At(K * M);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) At[k * M + i] = A[i * K + k];
    std::fill(got.begin(), got.end(), 0.0);
    kernels::gemm_tn_ref<double>(M, N, K, At.data(), B.data(), got.data(), false);
    for (std::size_t i = 0; i < M * N; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("sgd_momentum_ref hand example") {
    // v' = 0.9*1 - 0.1*2 = 0.7 ; w' = 10.7
    double w = 10, v = 1, g = 2;
    kernels::sgd_momentum_ref<double>(&w, &v, &g, 1, 0.1, 0.9);
    CHECK(v == doctest::Approx(0.7));
    CHECK(w == doctest::Approx(10.7));
}

namespace {

// Per-element accumulated-magnitude bound: two different summation orders of
// the same products can differ by a few ulps of sum(|a_k*b_k|), never of the
// possibly-cancelled result.
void check_gemm_close(const std::vector<float>& got, const std::vector<float>& want,
                      const std::vector<double>& magnitude) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double diff = std::fabs(static_cast<double>(got[i]) - want[i]);
        const double scale = std::max(1e-30, magnitude[i]);
        CHECK(diff <= 1e-6 * scale);
    }
}

std::vector<double> nn_magnitude(std::size_t M, std::size_t N, std::size_t K,
                                 const std::vector<float>& A, const std::vector<float>& B) {
    std::vector<double> mag(M * N, 0.0);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < N; ++j)
                mag[i * N + j] += std::fabs(static_cast<double>(A[i * K + k]) * B[k * N + j]);
    return mag;
}

}  // namespace

TEST_CASE("avx2 gemm variants match the scalar reference") {
    const kernels::Backend* simd = kernels::avx2_backend();
    if (!simd) {
        MESSAGE("avx2 backend unavailable on this host; equivalence checked elsewhere");
        return;
    }
    const kernels::Backend& ref = kernels::scalar_backend();
    auto eng = rng::make_engine(99);

    // Sizes straddle every microkernel edge: unit dims, sub-block tails,
    // multiple full blocks, and the network's own dense/conv shapes.
    const std::size_t sizes[][3] = {{1, 1, 1},   {2, 3, 4},    {4, 16, 8},  {5, 17, 9},
                                    {8, 33, 21}, {3, 64, 500}, {13, 7, 129}, {20, 1296, 25},
                                    {500, 1, 200}, {1, 500, 200}};
    for (const auto& s : sizes) {
        const std::size_t M = s[0], N = s[1], K = s[2];
        std::vector<float> A(M * K), B(K * N);
        for (auto& v : A) v = static_cast<float>(rng::uniform(eng, -1, 1));
        for (auto& v : B) v = static_cast<float>(rng::uniform(eng, -1, 1));

        CAPTURE(M);
        CAPTURE(N);
        CAPTURE(K);

        // nn
        std::vector<float> want(M * N, 0.5f), got(M * N, 0.5f);
        ref.gemm_nn(M, N, K, A.data(), B.data(), want.data(), false);
        simd->gemm_nn(M, N, K, A.data(), B.data(), got.data(), false);
        auto mag = nn_magnitude(M, N, K, A, B);
        check_gemm_close(got, want, mag);

        // nn accumulate
        std::fill(want.begin(), want.end(), 0.25f);
        std::fill(got.begin(), got.end(), 0.25f);
        ref.gemm_nn(M, N, K, A.data(), B.data(), want.data(), true);
        simd->gemm_nn(M, N, K, A.data(), B.data(), got.data(), true);
        check_gemm_close(got, want, mag);

        // nt with B stored [NxK]
        std::vector<float> Bt(N * K);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < N; ++j) Bt[j * K + k] = B[k * N + j];
        ref.gemm_nt(M, N, K, A.data(), Bt.data(), want.data(), false);
        simd->gemm_nt(M, N, K, A.data(), Bt.data(), got.data(), false);
        check_gemm_close(got, want, mag);

        // tn with A stored [KxM]
        std::vector<float> At(K * M);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) At[k * M + i] = A[i * K + k];
        ref.gemm_tn(M, N, K, At.data(), B.data(), want.data(), false);
        simd->gemm_tn(M, N, K, At.data(), B.data(), got.data(), false);
        check_gemm_close(got, want, mag);
    }
}

TEST_CASE("avx2 sgd step is bit-identical to scalar") {
    const kernels::Backend* simd = kernels::avx2_backend();
    if (!simd) {
        MESSAGE("avx2 backend unavailable on this host");
        return;
    }
    auto eng = rng::make_engine(7);
    for (const std::size_t n : {1u, 7u, 8u, 9u, 31u, 64u, 1000u}) {
        std::vector<float> w(n), v(n), g(n);
        for (auto& x : w) x = static_cast<float>(rng::uniform(eng, -1, 1));
        for (auto& x : v) x = static_cast<float>(rng::uniform(eng, -1, 1));
        for (auto& x : g) x = static_cast<float>(rng::uniform(eng, -1, 1));
        auto w2 = w;
        auto v2 = v;
        kernels::scalar_backend().sgd_momentum(w.data(), v.data(), g.data(), n, 0.01f, 0.9f);
        simd->sgd_momentum(w2.data(), v2.data(), g.data(), n, 0.01f, 0.9f);
        CHECK(std::memcmp(w.data(), w2.data(), n * sizeof(float)) == 0);
        CHECK(std::memcmp(v.data(), v2.data(), n * sizeof(float)) == 0);
    }
}

TEST_CASE("backend selection") {
    CHECK_THROWS_AS(kernels::set_backend("neon"), std::runtime_error);
    kernels::set_backend("scalar");
    CHECK(std::string(kernels::active_backend().name) == "scalar");
    kernels::set_backend("auto");
    if (kernels::avx2_backend())
        CHECK(std::string(kernels::active_backend().name) == "avx2");
    else
        CHECK(std::string(kernels::active_backend().name) == "scalar");
}
