#include "ccodec/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace ccodec::nn {

namespace {

template <class T>
struct Layout {
    const T* p;
    int ld;
    bool trans;
    T at(int r, int c) const { return trans ? p[static_cast<std::size_t>(c) * ld + r] : p[static_cast<std::size_t>(r) * ld + c]; }
};

template <class T>
void gemm_generic(int m, int n, int k, Layout<T> a, Layout<T> b, T* c, int ldc) {
    constexpr int kc = 128;
    std::vector<T> brow(static_cast<std::size_t>(n));
    for (int p0 = 0; p0 < k; p0 += kc) {
        const int p1 = std::min(k, p0 + kc);
        for (int i = 0; i < m; ++i) {
            T* crow = c + static_cast<std::size_t>(i) * ldc;
            for (int p = p0; p < p1; ++p) {
                const T av = a.at(i, p);
                if (!b.trans) {
                    const T* bp = b.p + static_cast<std::size_t>(p) * b.ld;
                    for (int j = 0; j < n; ++j) crow[j] = std::fma(av, bp[j], crow[j]);
                } else {
                    for (int j = 0; j < n; ++j) crow[j] = std::fma(av, b.at(p, j), crow[j]);
                }
            }
        }
    }
}

#if defined(__AVX512F__)

constexpr int MR = 6;
constexpr int NR = 64;
constexpr int KC = 128;
constexpr int MC = 96;
constexpr int NC = 512;

// a: MR x kc packed column-by-column; b: kc x NR packed row-by-row.
inline void micro_kernel(int kc, const float* a, const float* b, float* c, int ldc, int rows,
                         __mmask16 m0, __mmask16 m1, __mmask16 m2, __mmask16 m3) {
    __m512 acc[MR][4];
    for (int r = 0; r < MR; ++r) {
        if (r < rows) {
            float* cr = c + static_cast<std::size_t>(r) * ldc;
            acc[r][0] = _mm512_maskz_loadu_ps(m0, cr);
            acc[r][1] = _mm512_maskz_loadu_ps(m1, cr + 16);
            acc[r][2] = _mm512_maskz_loadu_ps(m2, cr + 32);
            acc[r][3] = _mm512_maskz_loadu_ps(m3, cr + 48);
        } else {
            acc[r][0] = acc[r][1] = acc[r][2] = acc[r][3] = _mm512_setzero_ps();
        }
    }
    for (int p = 0; p < kc; ++p) {
        const float* bp = b + static_cast<std::size_t>(p) * NR;
        const __m512 b0 = _mm512_load_ps(bp);
        const __m512 b1 = _mm512_load_ps(bp + 16);
        const __m512 b2 = _mm512_load_ps(bp + 32);
        const __m512 b3 = _mm512_load_ps(bp + 48);
        const float* ap = a + static_cast<std::size_t>(p) * MR;
        for (int r = 0; r < MR; ++r) {
            const __m512 av = _mm512_set1_ps(ap[r]);
            acc[r][0] = _mm512_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm512_fmadd_ps(av, b1, acc[r][1]);
            acc[r][2] = _mm512_fmadd_ps(av, b2, acc[r][2]);
            acc[r][3] = _mm512_fmadd_ps(av, b3, acc[r][3]);
        }
    }
    for (int r = 0; r < rows; ++r) {
        float* cr = c + static_cast<std::size_t>(r) * ldc;
        _mm512_mask_storeu_ps(cr, m0, acc[r][0]);
        _mm512_mask_storeu_ps(cr + 16, m1, acc[r][1]);
        _mm512_mask_storeu_ps(cr + 32, m2, acc[r][2]);
        _mm512_mask_storeu_ps(cr + 48, m3, acc[r][3]);
    }
}

inline __mmask16 lane_mask(int valid) {
    if (valid >= 16) return 0xFFFF;
    if (valid <= 0) return 0;
    return static_cast<__mmask16>((1u << valid) - 1u);
}

struct AlignedBuffer {
    float* data = nullptr;
    std::size_t size = 0;
    void reserve(std::size_t n) {
        if (n <= size) return;
        std::free(data);
        data = static_cast<float*>(std::aligned_alloc(64, ((n * sizeof(float) + 63) / 64) * 64));
        size = n;
    }
    ~AlignedBuffer() { std::free(data); }
};

void gemm_avx512(int m, int n, int k, Layout<float> a, Layout<float> b, float* c, int ldc) {
    thread_local AlignedBuffer apack, bpack;
    apack.reserve(static_cast<std::size_t>(MC) * KC);
    bpack.reserve(static_cast<std::size_t>(NC) * KC);

    for (int jc = 0; jc < n; jc += NC) {
        const int nc = std::min(NC, n - jc);
        const int npanels = (nc + NR - 1) / NR;
        for (int pc = 0; pc < k; pc += KC) {
            const int kc = std::min(KC, k - pc);
            for (int jp = 0; jp < npanels; ++jp) {
                float* dst = bpack.data + static_cast<std::size_t>(jp) * KC * NR;
                const int j0 = jc + jp * NR;
                const int cols = std::min(NR, n - j0);
                for (int p = 0; p < kc; ++p) {
                    float* row = dst + static_cast<std::size_t>(p) * NR;
                    if (!b.trans) {
                        std::memcpy(row, b.p + static_cast<std::size_t>(pc + p) * b.ld + j0, sizeof(float) * cols);
                    } else {
                        for (int j = 0; j < cols; ++j) row[j] = b.at(pc + p, j0 + j);
                    }
                    for (int j = cols; j < NR; ++j) row[j] = 0.0f;
                }
            }
            for (int ic = 0; ic < m; ic += MC) {
                const int mc = std::min(MC, m - ic);
                const int mpanels = (mc + MR - 1) / MR;
                for (int ip = 0; ip < mpanels; ++ip) {
                    float* dst = apack.data + static_cast<std::size_t>(ip) * KC * MR;
                    const int i0 = ic + ip * MR;
                    const int rows = std::min(MR, m - i0);
                    for (int p = 0; p < kc; ++p) {
                        float* col = dst + static_cast<std::size_t>(p) * MR;
                        for (int r = 0; r < rows; ++r) col[r] = a.at(i0 + r, pc + p);
                        for (int r = rows; r < MR; ++r) col[r] = 0.0f;
                    }
                }
                for (int jp = 0; jp < npanels; ++jp) {
                    const int j0 = jc + jp * NR;
                    const int cols = std::min(NR, n - j0);
                    const __mmask16 m0 = lane_mask(cols), m1 = lane_mask(cols - 16), m2 = lane_mask(cols - 32),
                                    m3 = lane_mask(cols - 48);
                    const float* bp = bpack.data + static_cast<std::size_t>(jp) * KC * NR;
                    for (int ip = 0; ip < mpanels; ++ip) {
                        const int i0 = ic + ip * MR;
                        const int rows = std::min(MR, m - i0);
                        micro_kernel(kc, apack.data + static_cast<std::size_t>(ip) * KC * MR, bp,
                                     c + static_cast<std::size_t>(i0) * ldc + j0, ldc, rows, m0, m1, m2, m3);
                    }
                }
            }
        }
    }
}

#endif

template <class T>
void dispatch(int m, int n, int k, Layout<T> a, Layout<T> b, T* c, int ldc) {
    if (m <= 0 || n <= 0 || k <= 0) return;
#if defined(__AVX512F__)
    if constexpr (std::is_same_v<T, float>) {
        gemm_avx512(m, n, k, a, b, c, ldc);
        return;
    }
#endif
    gemm_generic(m, n, k, a, b, c, ldc);
}

} // namespace

template <class T>
void gemm_acc(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
    dispatch<T>(m, n, k, {a, lda, false}, {b, ldb, false}, c, ldc);
}

template <class T>
void gemm_acc_at(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
    dispatch<T>(m, n, k, {a, lda, true}, {b, ldb, false}, c, ldc);
}

template <class T>
void gemm_acc_bt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
    dispatch<T>(m, n, k, {a, lda, false}, {b, ldb, true}, c, ldc);
}

template void gemm_acc<float>(int, int, int, const float*, int, const float*, int, float*, int);
template void gemm_acc<double>(int, int, int, const double*, int, const double*, int, double*, int);
template void gemm_acc_at<float>(int, int, int, const float*, int, const float*, int, float*, int);
template void gemm_acc_at<double>(int, int, int, const double*, int, const double*, int, double*, int);
template void gemm_acc_bt<float>(int, int, int, const float*, int, const float*, int, float*, int);
template void gemm_acc_bt<double>(int, int, int, const double*, int, const double*, int, double*, int);

} // namespace ccodec::nn
