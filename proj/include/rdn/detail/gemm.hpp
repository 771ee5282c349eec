// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>

// Small dense matrix kernels behind conv2d. Fixed loop order, no threading:
// results are bitwise reproducible for a given build.
namespace rdn::detail {

template <typename T>
struct Lanes {
    typedef T type __attribute__((vector_size(32)));
    static constexpr std::size_t width = 32 / sizeof(T);
};

template <typename T>
typename Lanes<T>::type load_lanes(const T* p) {
    typename Lanes<T>::type v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

template <typename T>
void store_lanes(T* p, const typename Lanes<T>::type& v) {
    std::memcpy(p, &v, sizeof v);
}

// R rows by two lane-vectors of C, accumulated over all of K in registers.
template <std::size_t R, typename T>
void gemm_block(std::size_t K, const T* a, std::size_t a_rs, std::size_t a_cs, const T* b, std::size_t ldb, T* c,
                std::size_t ldc) {
    using V = typename Lanes<T>::type;
    constexpr std::size_t W = Lanes<T>::width;
    V acc[R][2];
    for (std::size_t r = 0; r < R; ++r) {
        acc[r][0] = load_lanes(c + r * ldc);
        acc[r][1] = load_lanes(c + r * ldc + W);
    }
    for (std::size_t k = 0; k < K; ++k) {
        const V b0 = load_lanes(b + k * ldb);
        const V b1 = load_lanes(b + k * ldb + W);
#pragma GCC unroll 4
        for (std::size_t r = 0; r < R; ++r) {
            const T av = a[r * a_rs + k * a_cs];
            acc[r][0] += av * b0;
            acc[r][1] += av * b1;
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        store_lanes(c + r * ldc, acc[r][0]);
        store_lanes(c + r * ldc + W, acc[r][1]);
    }
}

// C[M,N] += A[M,K] * B[K,N]. A is addressed as a[i*a_rs + k*a_cs] so the
// same kernel serves A and A^T. B and C are row-major with leading dims ldb/ldc.
template <typename T>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const T* a, std::size_t a_rs, std::size_t a_cs,
              const T* b, std::size_t ldb, T* c, std::size_t ldc) {
    constexpr std::size_t NB = 2 * Lanes<T>::width;
    std::size_t j = 0;
    for (; j + NB <= N; j += NB) {
        std::size_t i = 0;
        for (; i + 4 <= M; i += 4) gemm_block<4>(K, a + i * a_rs, a_rs, a_cs, b + j, ldb, c + i * ldc + j, ldc);
        const T* ai = a + i * a_rs;
        T* ci = c + i * ldc + j;
        switch (M - i) {
            case 3: gemm_block<3>(K, ai, a_rs, a_cs, b + j, ldb, ci, ldc); break;
            case 2: gemm_block<2>(K, ai, a_rs, a_cs, b + j, ldb, ci, ldc); break;
            case 1: gemm_block<1>(K, ai, a_rs, a_cs, b + j, ldb, ci, ldc); break;
            default: break;
        }
    }
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t jj = j; jj < N; ++jj) {
            T s = c[i * ldc + jj];
            for (std::size_t k = 0; k < K; ++k) s += a[i * a_rs + k * a_cs] * b[k * ldb + jj];
            c[i * ldc + jj] = s;
        }
    }
}

// R rows of A dotted with one row of B, lanes reduced in a fixed order.
template <std::size_t R, typename T>
void gemm_nt_rows(std::size_t N, std::size_t L, const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
                  std::size_t ldc) {
    using V = typename Lanes<T>::type;
    constexpr std::size_t W = Lanes<T>::width;
    for (std::size_t j = 0; j < N; ++j) {
        const T* bj = b + j * ldb;
        V s[R][2] = {};
        std::size_t l = 0;
        for (; l + 2 * W <= L; l += 2 * W) {
            const V b0 = load_lanes(bj + l);
            const V b1 = load_lanes(bj + l + W);
#pragma GCC unroll 4
            for (std::size_t r = 0; r < R; ++r) {
                s[r][0] += load_lanes(a + r * lda + l) * b0;
                s[r][1] += load_lanes(a + r * lda + l + W) * b1;
            }
        }
        for (std::size_t r = 0; r < R; ++r) {
            const T* ar = a + r * lda;
            T t = 0;
            for (std::size_t q = l; q < L; ++q) t += ar[q] * bj[q];
            for (std::size_t q = 0; q < W; ++q) t += s[r][0][q] + s[r][1][q];
            c[r * ldc + j] += t;
        }
    }
}

// C[M,N] += A[M,L] * B[N,L]^T, all row-major.
template <typename T>
void gemm_nt_acc(std::size_t M, std::size_t N, std::size_t L, const T* a, std::size_t lda, const T* b,
                 std::size_t ldb, T* c, std::size_t ldc) {
    std::size_t i = 0;
    for (; i + 4 <= M; i += 4) gemm_nt_rows<4>(N, L, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
    switch (M - i) {
        case 3: gemm_nt_rows<3>(N, L, a + i * lda, lda, b, ldb, c + i * ldc, ldc); break;
        case 2: gemm_nt_rows<2>(N, L, a + i * lda, lda, b, ldb, c + i * ldc, ldc); break;
        case 1: gemm_nt_rows<1>(N, L, a + i * lda, lda, b, ldb, c + i * ldc, ldc); break;
        default: break;
    }
}

}  // namespace rdn::detail
