// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace ctkd::ad::kernels {

// All matrices row-major. Each routine accumulates into c (c += ...).
// Row i of c depends only on row i of a for gemm_nn and gemm_nt.

/// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
/// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
/// c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);

}  // namespace ctkd::ad::kernels
