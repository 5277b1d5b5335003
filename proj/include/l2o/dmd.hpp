#ifndef L2O_DMD_HPP
#define L2O_DMD_HPP

#include <algorithm>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "l2o/linalg.hpp"
#include "l2o/tensor.hpp"

namespace l2o {

struct DmdConfig {
  int rank;       // R, number of retained SVD components / emitted eigenvalues
  int snapshots;  // m, number of columns of the data matrices
  DmdConfig(int r, int m);
};

// Eigenvalue features: 2R reals laid out (re_1, im_1, re_2, im_2, ...) in
// canonical spectrum order, zero-padded when the effective rank falls short.
struct DmdFeatures {
  std::vector<double> values;
  bool all_zero() const {
    for (double v : values)
      if (v != 0.0) return false;
    return true;
  }
};

// Trailing window of optimizee states [theta; loss]. Keeps the last m+1
// states (enough for both data matrices) plus the pairwise dot products of
// the retained states, updated incrementally so a sliding evaluation does not
// recompute the Gram matrix from scratch every step.
class SnapshotWindow {
 public:
  // `state_dim` is n+1: optimizee parameter count plus one loss entry.
  SnapshotWindow(int state_dim, int snapshots_m);

  void push(std::span<const double> theta, double loss);

  int64_t count() const { return pushed_; }  // snapshots stored so far
  int capacity() const { return m_; }
  int state_dim() const { return dim_; }
  int retained() const { return static_cast<int>(std::min<int64_t>(pushed_, m_ + 1)); }
  bool ready() const { return pushed_ >= m_ + 1; }

  // State i (0 = oldest retained) as a contiguous vector.
  std::span<const double> state(int i) const;
  // Dot product of retained states i and j.
  double dot(int i, int j) const;

 private:
  int dim_;
  int m_;
  int64_t pushed_ = 0;
  int head_ = 0;  // ring index of the oldest retained state
  std::vector<double> states_;  // (m+1) x dim ring storage
  std::vector<double> dots_;    // (m+1) x (m+1), ring-indexed
  double& dot_slot(int ri, int rj) { return dots_[static_cast<size_t>(ri) * (m_ + 1) + rj]; }
  int ring_of(int logical) const { return (head_ + logical) % (m_ + 1); }
};

// Rank-R DMD eigenvalues of the window dynamics. Under-filled or all-zero
// windows produce the all-zero feature vector; numerical failures degrade to
// zero features with a warning on stderr instead of aborting the caller.
DmdFeatures dmd_eigenvalues(const SnapshotWindow& window, const DmdConfig& config);

// Exact DMD modes (columns, one per retained eigenvalue; columns beyond the
// effective rank are zero). Offline diagnostic; requires a full window.
struct DmdModes {
  ComplexSpectrum eigenvalues;
  std::vector<std::complex<double>> columns;  // row-major (state_dim x rank)
  int rows = 0;
  int cols = 0;
  std::complex<double> at(int r, int c) const {
    return columns[static_cast<size_t>(r) * cols + c];
  }
};
DmdModes dmd_modes(const SnapshotWindow& window, const DmdConfig& config);

}  // namespace l2o

#endif  // L2O_DMD_HPP
