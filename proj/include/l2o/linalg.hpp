#ifndef L2O_LINALG_HPP
#define L2O_LINALG_HPP

#include <complex>
#include <vector>

#include "l2o/tensor.hpp"

namespace l2o {

// Thin singular value decomposition X = U * diag(sigma) * V^T restricted to
// the singular values kept by the rank threshold.
struct ThinSvd {
  Tensor u;                   // n x r, column-orthonormal
  std::vector<double> sigma;  // r values, nonincreasing, all > 0
  Tensor v;                   // m x r, column-orthonormal
  int rank = 0;
};

// Eigenvalues of a real matrix, sorted by modulus nonincreasing with ties
// broken by (re, im) lexicographic descending. Conjugate pairs of a real
// matrix appear as exact conjugates.
struct ComplexSpectrum {
  std::vector<std::complex<double>> values;
};

// Relative threshold used when `tol < 0` is passed to thin_svd.
double default_svd_tol(int n, int m);

// Symmetric eigendecomposition by cyclic Jacobi rotations. `a` is rank-2 and
// symmetric; returns eigenvalues sorted nonincreasing and the matching
// eigenvectors as columns of `vectors`.
struct SymEig {
  std::vector<double> values;
  Tensor vectors;
};
SymEig jacobi_sym_eig(const Tensor& a);

// Thin SVD via the m x m Gram matrix X^T X. Singular values below
// tol * max(sigma) are dropped; an all-zero X yields rank 0.
ThinSvd thin_svd(const Tensor& x, double tol = -1.0);

// All eigenvalues of a small real square matrix. Closed form for sizes 1 and
// 2, balanced Hessenberg reduction plus Francis double-shift QR otherwise.
ComplexSpectrum eig_small(const Tensor& a);

// Eigenvalues plus (unit, phase-fixed) eigenvectors, for DMD mode
// reconstruction. Vectors are the columns of `vectors`, stored row-major
// (rows x values.size()).
struct EigPairs {
  ComplexSpectrum spectrum;
  std::vector<std::complex<double>> vectors;
  int rows = 0;
};
EigPairs eig_small_with_vectors(const Tensor& a);

// Moore-Penrose pseudoinverse through the thin SVD.
Tensor pseudoinverse(const Tensor& x, double tol = -1.0);

// Plain dense helpers used around the small-matrix code.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Smallest achievable max-distance when matching two spectra one-to-one
// (exact assignment over all permutations via bitmask DP; sizes <= ~16).
double spectrum_match_distance(const std::vector<std::complex<double>>& a,
                               const std::vector<std::complex<double>>& b);

// Sort in the canonical feature order (modulus desc, re desc, im desc).
void sort_spectrum(std::vector<std::complex<double>>& values);

}  // namespace l2o

#endif  // L2O_LINALG_HPP
