#include "l2o/dmd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <cstring>

#include "l2o/errors.hpp"

namespace l2o {

DmdConfig::DmdConfig(int r, int m) : rank(r), snapshots(m) {
  if (m < 1 || r < 1 || r > m)
    throw contract_error("dmd: config requires 1 <= R <= m, got R=" + std::to_string(r) +
                         ", m=" + std::to_string(m));
}

SnapshotWindow::SnapshotWindow(int state_dim, int snapshots_m) : dim_(state_dim), m_(snapshots_m) {
  if (state_dim < 2) throw contract_error("snapshot window: state dimension must be >= 2");
  if (snapshots_m < 1) throw contract_error("snapshot window: m must be >= 1");
  states_.assign(static_cast<size_t>(m_ + 1) * dim_, 0.0);
  dots_.assign(static_cast<size_t>(m_ + 1) * (m_ + 1), 0.0);
}

void SnapshotWindow::push(std::span<const double> theta, double loss) {
  if (static_cast<int>(theta.size()) + 1 != dim_)
    throw contract_error("snapshot window: state dimension changed from " +
                         std::to_string(dim_) + " to " + std::to_string(theta.size() + 1));
  if (!std::isfinite(loss)) throw contract_error("snapshot window: non-finite loss");
  for (double v : theta)
    if (!std::isfinite(v)) throw contract_error("snapshot window: non-finite parameter");

  const int slots = m_ + 1;
  int ring;
  if (pushed_ < slots) {
    ring = (head_ + static_cast<int>(pushed_)) % slots;
  } else {
    ring = head_;  // overwrite the oldest slot, then advance the head
    head_ = (head_ + 1) % slots;
  }
  double* dst = &states_[static_cast<size_t>(ring) * dim_];
  std::memcpy(dst, theta.data(), sizeof(double) * theta.size());
  dst[dim_ - 1] = loss;
  ++pushed_;

  const int kept = retained();
  for (int i = 0; i < kept; ++i) {
    const int ri = ring_of(i);
    const double* a = &states_[static_cast<size_t>(ri) * dim_];
    double s = 0.0;
    for (int k = 0; k < dim_; ++k) s += a[k] * dst[k];
    dot_slot(ri, ring) = s;
    dot_slot(ring, ri) = s;
  }
}

std::span<const double> SnapshotWindow::state(int i) const {
  if (i < 0 || i >= retained()) throw contract_error("snapshot window: state index out of range");
  return {&states_[static_cast<size_t>(ring_of(i)) * dim_], static_cast<size_t>(dim_)};
}

double SnapshotWindow::dot(int i, int j) const {
  if (i < 0 || j < 0 || i >= retained() || j >= retained())
    throw contract_error("snapshot window: dot index out of range");
  return dots_[static_cast<size_t>(ring_of(i)) * (m_ + 1) + ring_of(j)];
}

namespace {

struct ReducedOperator {
  Tensor a_tilde;          // r_use x r_use
  Tensor v;                // m x r_use right singular vectors of X
  std::vector<double> sigma;
  int r_use = 0;
};

// Shared reduction: SVD of X from the Gram matrix, truncation to
// min(R, effective rank), and the projected operator
// A~ = Sigma^-1 V^T (X^T Y) V Sigma^-1. U is never formed.
ReducedOperator reduce(const SnapshotWindow& w, const DmdConfig& cfg) {
  const int m = cfg.snapshots;
  Tensor gxx({m, m});
  Tensor gxy({m, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      gxx.at(i, j) = w.dot(i, j);
      gxy.at(i, j) = w.dot(i, j + 1);
    }

  ReducedOperator out;
  SymEig eig = jacobi_sym_eig(gxx);
  const double smax = eig.values[0] > 0.0 ? std::sqrt(eig.values[0]) : 0.0;
  if (smax == 0.0) return out;
  const double tol = default_svd_tol(w.state_dim(), m);
  // Same rank rule as thin_svd, including the Gram noise floor.
  const double noise_floor =
      64.0 * m * std::numeric_limits<double>::epsilon() * eig.values[0];
  int r_eff = 0;
  for (int i = 0; i < m; ++i) {
    if (eig.values[i] <= noise_floor) break;
    if (std::sqrt(eig.values[i]) >= tol * smax)
      ++r_eff;
    else
      break;
  }
  out.r_use = std::min(cfg.rank, r_eff);
  if (out.r_use == 0) return out;

  out.sigma.resize(out.r_use);
  for (int i = 0; i < out.r_use; ++i)
    out.sigma[i] = std::sqrt(eig.values[i]);
  out.v = Tensor({m, out.r_use});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < out.r_use; ++j) out.v.at(i, j) = eig.vectors.at(i, j);

  // T1 = (X^T Y) V, then A~ = Sigma^-1 V^T T1 Sigma^-1.
  Tensor t1 = matmul(gxy, out.v);
  out.a_tilde = Tensor({out.r_use, out.r_use});
  for (int i = 0; i < out.r_use; ++i)
    for (int j = 0; j < out.r_use; ++j) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += out.v.at(k, i) * t1.at(k, j);
      out.a_tilde.at(i, j) = s / (out.sigma[i] * out.sigma[j]);
    }
  return out;
}

}  // namespace

DmdFeatures dmd_eigenvalues(const SnapshotWindow& window, const DmdConfig& config) {
  DmdFeatures out;
  out.values.assign(static_cast<size_t>(2) * config.rank, 0.0);
  if (!window.ready()) return out;

  try {
    ReducedOperator red = reduce(window, config);
    if (red.r_use == 0) return out;
    ComplexSpectrum spec = eig_small(red.a_tilde);
    for (int i = 0; i < red.r_use; ++i) {
      out.values[2 * i] = spec.values[i].real();
      out.values[2 * i + 1] = spec.values[i].imag();
    }
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "warning: dmd eigenvalue computation failed (%s); emitting zero features\n",
                 e.what());
    std::fill(out.values.begin(), out.values.end(), 0.0);
  }
  return out;
}

DmdModes dmd_modes(const SnapshotWindow& window, const DmdConfig& config) {
  if (!window.ready())
    throw contract_error("dmd_modes: window holds " + std::to_string(window.count()) +
                         " snapshots, needs " + std::to_string(config.snapshots + 1));

  const int m = config.snapshots;
  const int dim = window.state_dim();
  DmdModes out;
  out.rows = dim;
  out.cols = config.rank;
  out.columns.assign(static_cast<size_t>(dim) * config.rank, {0.0, 0.0});

  ReducedOperator red = reduce(window, config);
  if (red.r_use == 0) return out;
  EigPairs pairs = eig_small_with_vectors(red.a_tilde);
  out.eigenvalues = pairs.spectrum;

  // Phi = Y V Sigma^-1 W, assembled column by column.
  using cd = std::complex<double>;
  std::vector<cd> coeff(static_cast<size_t>(m) * red.r_use);  // V Sigma^-1 W
  for (int i = 0; i < m; ++i)
    for (int e = 0; e < red.r_use; ++e) {
      cd s(0.0, 0.0);
      for (int k = 0; k < red.r_use; ++k)
        s += (red.v.at(i, k) / red.sigma[k]) *
             pairs.vectors[static_cast<size_t>(k) * red.r_use + e];
      coeff[static_cast<size_t>(i) * red.r_use + e] = s;
    }
  for (int e = 0; e < red.r_use; ++e)
    for (int i = 0; i < m; ++i) {
      const cd c = coeff[static_cast<size_t>(i) * red.r_use + e];
      if (c == cd(0.0, 0.0)) continue;
      std::span<const double> y_col = window.state(i + 1);
      for (int r = 0; r < dim; ++r)
        out.columns[static_cast<size_t>(r) * config.rank + e] += c * y_col[r];
    }
  return out;
}

}  // namespace l2o
