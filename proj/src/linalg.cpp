#include "l2o/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "l2o/errors.hpp"
#include "l2o/tape.hpp"

namespace l2o {

namespace {

void require_square(const Tensor& a, const char* op) {
  if (a.rank() != 2 || a.shape[0] != a.shape[1])
    throw dim_error(std::string(op) + ": expected a square matrix, got " + a.shape_str());
}

bool spectrum_less(const std::complex<double>& a, const std::complex<double>& b) {
  const double ma = std::abs(a), mb = std::abs(b);
  if (ma != mb) return ma > mb;
  if (a.real() != b.real()) return a.real() > b.real();
  return a.imag() > b.imag();
}

// Eigenvalues of a real 2x2 block in closed form.
void eig2x2(double a, double b, double c, double d, std::vector<std::complex<double>>& out) {
  const double tr = 0.5 * (a + d);
  const double det = a * d - b * c;
  const double disc = tr * tr - det;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    out.emplace_back(tr + s, 0.0);
    out.emplace_back(tr - s, 0.0);
  } else {
    const double s = std::sqrt(-disc);
    out.emplace_back(tr, s);
    out.emplace_back(tr, -s);
  }
}

// Parlett-Reinsch balancing (diagonal similarity scaling, radix 2).
void balance(std::vector<double>& h, int n) {
  const double radix = 2.0;
  bool again = true;
  int guard = 0;
  while (again && guard++ < 100) {
    again = false;
    for (int i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(h[static_cast<size_t>(j) * n + i]);
        r += std::abs(h[static_cast<size_t>(i) * n + j]);
      }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix, f = 1.0, s = c + r;
      while (c < g) {
        f *= radix;
        c *= radix * radix;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= radix * radix;
      }
      if ((c + r) / f < 0.95 * s) {
        again = true;
        const double ginv = 1.0 / f;
        for (int j = 0; j < n; ++j) h[static_cast<size_t>(i) * n + j] *= ginv;
        for (int j = 0; j < n; ++j) h[static_cast<size_t>(j) * n + i] *= f;
      }
    }
  }
}

// Householder reduction to upper Hessenberg form, in place.
void hessenberg(std::vector<double>& h, int n) {
  std::vector<double> v(n), w(n);
  for (int k = 0; k < n - 2; ++k) {
    double norm2 = 0.0;
    for (int i = k + 1; i < n; ++i) {
      v[i] = h[static_cast<size_t>(i) * n + k];
      norm2 += v[i] * v[i];
    }
    const double alpha0 = v[k + 1];
    double norm = std::sqrt(norm2);
    if (norm == 0.0) continue;
    if (alpha0 > 0.0) norm = -norm;
    v[k + 1] -= norm;
    double vnorm2 = norm2 - alpha0 * alpha0 + v[k + 1] * v[k + 1];
    if (vnorm2 <= 0.0) continue;
    const double beta = 2.0 / vnorm2;
    // H <- P H P with P = I - beta v v^T (v supported on rows k+1..n-1).
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = k + 1; i < n; ++i) s += v[i] * h[static_cast<size_t>(i) * n + j];
      s *= beta;
      for (int i = k + 1; i < n; ++i) h[static_cast<size_t>(i) * n + j] -= s * v[i];
    }
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = k + 1; j < n; ++j) s += h[static_cast<size_t>(i) * n + j] * v[j];
      s *= beta;
      for (int j = k + 1; j < n; ++j) h[static_cast<size_t>(i) * n + j] -= s * v[j];
    }
    h[static_cast<size_t>(k + 1) * n + k] = norm;
    for (int i = k + 2; i < n; ++i) h[static_cast<size_t>(i) * n + k] = 0.0;
  }
}

// Francis double-shift QR on an upper Hessenberg matrix; eigenvalues only.
// Follows the classic EISPACK hqr organization with a global sweep budget.
void hqr_eigenvalues(std::vector<double>& h, int n, std::vector<std::complex<double>>& out) {
  auto at = [&](int i, int j) -> double& { return h[static_cast<size_t>(i) * n + j]; };
  const double eps = std::numeric_limits<double>::epsilon();
  const int max_total = 100 * n;
  int total_iters = 0;

  int high = n - 1;
  while (high >= 0) {
    int its = 0;
    while (true) {
      // Look for a negligible subdiagonal element.
      int l = high;
      while (l > 0) {
        const double s = std::abs(at(l - 1, l - 1)) + std::abs(at(l, l));
        const double bound = eps * (s == 0.0 ? 1.0 : s);
        if (std::abs(at(l, l - 1)) <= bound) {
          at(l, l - 1) = 0.0;
          break;
        }
        --l;
      }
      if (l == high) {
        out.emplace_back(at(high, high), 0.0);
        high -= 1;
        break;
      }
      if (l == high - 1) {
        eig2x2(at(high - 1, high - 1), at(high - 1, high), at(high, high - 1), at(high, high),
               out);
        high -= 2;
        break;
      }

      if (++total_iters > max_total) {
        double resid = 0.0;
        for (int i = 1; i <= high; ++i) resid += std::abs(at(i, i - 1));
        throw numeric_error("eig_small: QR iteration exceeded " + std::to_string(max_total) +
                                " sweeps (residual subdiagonal norm " + std::to_string(resid) +
                                ")",
                            resid);
      }

      // Double shift from the trailing 2x2; occasional ad-hoc shift when stuck.
      double shift_tr, shift_det;
      if (its > 0 && its % 10 == 0) {
        const double s = std::abs(at(high, high - 1)) + std::abs(at(high - 1, high - 2));
        shift_tr = 2.0 * (at(high, high) + 0.75 * s);
        const double t = at(high, high) + 0.4375 * s;
        shift_det = t * t;
      } else {
        shift_tr = at(high - 1, high - 1) + at(high, high);
        shift_det =
            at(high - 1, high - 1) * at(high, high) - at(high - 1, high) * at(high, high - 1);
      }
      ++its;

      // First column of (H - s1)(H - s2) restricted to rows l..l+2.
      double x = at(l, l) * at(l, l) + at(l, l + 1) * at(l + 1, l) - shift_tr * at(l, l) +
                 shift_det;
      double y = at(l + 1, l) * (at(l, l) + at(l + 1, l + 1) - shift_tr);
      double z = (l + 2 <= high) ? at(l + 2, l + 1) * at(l + 1, l) : 0.0;

      for (int k = l; k <= high - 1; ++k) {
        // Householder on (x, y, z) to chase the bulge one step down.
        const bool last = (k == high - 1);
        double vx = x, vy = y, vz = last ? 0.0 : z;
        double scale = std::abs(vx) + std::abs(vy) + std::abs(vz);
        if (scale == 0.0) {
          if (last) break;
          x = at(k + 1, k);
          y = at(k + 2, k);
          z = (k + 3 <= high) ? at(k + 3, k) : 0.0;
          continue;
        }
        vx /= scale;
        vy /= scale;
        vz /= scale;
        double norm = std::sqrt(vx * vx + vy * vy + vz * vz);
        if (vx < 0.0) norm = -norm;
        vx += norm;
        const double vnorm2 = vx * vx + vy * vy + vz * vz;
        const double beta = (vnorm2 == 0.0) ? 0.0 : 2.0 / vnorm2;

        const int row_lo = std::max(l, k - 1);
        // Apply P from the left to rows k..k+2.
        for (int j = row_lo; j <= high; ++j) {
          double s = vx * at(k, j) + vy * at(k + 1, j);
          if (!last) s += vz * at(k + 2, j);
          s *= beta;
          at(k, j) -= s * vx;
          at(k + 1, j) -= s * vy;
          if (!last) at(k + 2, j) -= s * vz;
        }
        const int col_hi = std::min(high, k + 3);
        // Apply P from the right to columns k..k+2.
        for (int i = l; i <= col_hi; ++i) {
          double s = vx * at(i, k) + vy * at(i, k + 1);
          if (!last) s += vz * at(i, k + 2);
          s *= beta;
          at(i, k) -= s * vx;
          at(i, k + 1) -= s * vy;
          if (!last) at(i, k + 2) -= s * vz;
        }
        if (k > l) {
          at(k, k - 1) = -norm * scale;
          at(k + 1, k - 1) = 0.0;
          if (!last) at(k + 2, k - 1) = 0.0;
        }
        if (!last) {
          x = at(k + 1, k);
          y = at(k + 2, k);
          z = (k + 3 <= high) ? at(k + 3, k) : 0.0;
        }
      }
    }
  }
}

}  // namespace

double default_svd_tol(int n, int m) { return 1e-12 * static_cast<double>(std::max(n, m)); }

SymEig jacobi_sym_eig(const Tensor& a) {
  require_square(a, "jacobi_sym_eig");
  const int n = a.shape[0];
  std::vector<double> m(a.data);
  Tensor vecs({n, n});
  for (int i = 0; i < n; ++i) vecs.at(i, i) = 1.0;
  auto at = [&](int i, int j) -> double& { return m[static_cast<size_t>(i) * n + j]; };

  double fro = 0.0;
  for (double v : a.data) fro += v * v;
  fro = std::sqrt(fro);
  const double stop = (fro == 0.0) ? 0.0 : 1e-15 * fro;

  const int max_sweeps = 64;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += 2.0 * at(p, q) * at(p, q);
    off = std::sqrt(off);
    if (off <= stop) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double app = at(p, p), aqq = at(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = vecs.at(k, p), vkq = vecs.at(k, q);
          vecs.at(k, p) = c * vkp - s * vkq;
          vecs.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == max_sweeps) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += 2.0 * at(p, q) * at(p, q);
    throw numeric_error("jacobi_sym_eig: no convergence after " + std::to_string(max_sweeps) +
                            " sweeps",
                        std::sqrt(off));
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    if (at(i, i) != at(j, j)) return at(i, i) > at(j, j);
    return i < j;
  });
  SymEig out;
  out.values.resize(n);
  out.vectors = Tensor({n, n});
  for (int j = 0; j < n; ++j) {
    out.values[j] = at(order[j], order[j]);
    for (int i = 0; i < n; ++i) out.vectors.at(i, j) = vecs.at(i, order[j]);
  }
  return out;
}

ThinSvd thin_svd(const Tensor& x, double tol) {
  if (x.rank() != 2) throw dim_error("thin_svd: expected a rank-2 tensor, got " + x.shape_str());
  const int n = x.shape[0], m = x.shape[1];
  if (n < 1 || m < 1) throw contract_error("thin_svd: empty matrix");
  if (tol < 0.0) tol = default_svd_tol(n, m);

  // Gram route: X^T X = V diag(sigma^2) V^T, then U = X V diag(sigma)^-1.
  Tensor gram({m, m});
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      double s = 0.0;
      for (int r = 0; r < n; ++r) s += x.at(r, i) * x.at(r, j);
      gram.at(i, j) = s;
      gram.at(j, i) = s;
    }
  }
  SymEig eig = jacobi_sym_eig(gram);

  ThinSvd out;
  const double smax = eig.values[0] > 0.0 ? std::sqrt(eig.values[0]) : 0.0;
  if (smax == 0.0) return out;
  // Gram eigenvalues below the rotation noise floor are numerically zero
  // even when their square roots clear the sigma threshold.
  const double noise_floor =
      64.0 * m * std::numeric_limits<double>::epsilon() * eig.values[0];
  for (int i = 0; i < m; ++i) {
    if (eig.values[i] <= noise_floor) break;
    const double s = std::sqrt(eig.values[i]);
    if (s >= tol * smax)
      out.sigma.push_back(s);
    else
      break;
  }
  out.rank = static_cast<int>(out.sigma.size());
  if (out.rank == 0) return out;

  out.v = Tensor({m, out.rank});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < out.rank; ++j) out.v.at(i, j) = eig.vectors.at(i, j);

  out.u = Tensor({n, out.rank});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out.rank; ++j) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += x.at(i, k) * out.v.at(k, j);
      out.u.at(i, j) = s / out.sigma[j];
    }
  return out;
}

void sort_spectrum(std::vector<std::complex<double>>& values) {
  std::sort(values.begin(), values.end(), spectrum_less);
}

ComplexSpectrum eig_small(const Tensor& a) {
  require_square(a, "eig_small");
  const int n = a.shape[0];
  for (double v : a.data)
    if (!std::isfinite(v)) throw contract_error("eig_small: non-finite entry");

  ComplexSpectrum out;
  if (n == 1) {
    out.values.emplace_back(a.data[0], 0.0);
    return out;
  }
  if (n == 2) {
    eig2x2(a.at(0, 0), a.at(0, 1), a.at(1, 0), a.at(1, 1), out.values);
    sort_spectrum(out.values);
    return out;
  }
  std::vector<double> h(a.data);
  balance(h, n);
  hessenberg(h, n);
  hqr_eigenvalues(h, n, out.values);
  sort_spectrum(out.values);
  return out;
}

EigPairs eig_small_with_vectors(const Tensor& a) {
  require_square(a, "eig_small_with_vectors");
  const int n = a.shape[0];
  EigPairs out;
  out.spectrum = eig_small(a);
  out.rows = n;
  out.vectors.assign(static_cast<size_t>(n) * n, {0.0, 0.0});

  using cd = std::complex<double>;
  for (size_t e = 0; e < out.spectrum.values.size(); ++e) {
    const cd lambda = out.spectrum.values[e];
    // Null vector of (A - lambda I) by complex Gaussian elimination; the
    // eliminated system has (numerically) a vanishing final pivot.
    std::vector<cd> m(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        m[static_cast<size_t>(i) * n + j] = cd(a.at(i, j), 0.0) - (i == j ? lambda : cd(0, 0));

    std::vector<int> piv_col(n, -1);
    std::vector<bool> row_used(n, false);
    std::vector<bool> col_used(n, false);
    for (int step = 0; step < n - 1; ++step) {
      int pr = -1, pc = -1;
      double best = -1.0;
      for (int i = 0; i < n; ++i) {
        if (row_used[i]) continue;
        for (int j = 0; j < n; ++j) {
          if (col_used[j]) continue;
          const double mag = std::abs(m[static_cast<size_t>(i) * n + j]);
          if (mag > best) {
            best = mag;
            pr = i;
            pc = j;
          }
        }
      }
      if (best <= 0.0) break;
      row_used[pr] = true;
      col_used[pc] = true;
      piv_col[pr] = pc;
      const cd pivot = m[static_cast<size_t>(pr) * n + pc];
      // Gauss-Jordan: clear the pivot column from every other row so each
      // pivot row ends up coupling only its pivot unknown and the free one.
      for (int i = 0; i < n; ++i) {
        if (i == pr) continue;
        const cd f = m[static_cast<size_t>(i) * n + pc] / pivot;
        if (f == cd(0, 0)) continue;
        for (int j = 0; j < n; ++j)
          m[static_cast<size_t>(i) * n + j] -= f * m[static_cast<size_t>(pr) * n + j];
      }
    }
    // Free column gets 1; back-substitute the pivot rows.
    int free_col = -1;
    for (int j = 0; j < n; ++j)
      if (!col_used[j]) {
        free_col = j;
        break;
      }
    std::vector<cd> w(n, cd(0, 0));
    if (free_col < 0) free_col = n - 1;
    w[free_col] = cd(1, 0);
    // Pivot rows are mutually eliminated in the pivot columns, so each pivot
    // unknown follows directly from the free unknown.
    for (int i = 0; i < n; ++i) {
      if (!row_used[i] || piv_col[i] < 0) continue;
      cd rhs = m[static_cast<size_t>(i) * n + free_col];
      w[piv_col[i]] = -rhs / m[static_cast<size_t>(i) * n + piv_col[i]];
    }
    // Normalize: unit length, largest-modulus entry rotated to be real >= 0.
    double norm2 = 0.0;
    int arg = 0;
    double argmag = -1.0;
    for (int i = 0; i < n; ++i) {
      const double mag = std::abs(w[i]);
      norm2 += mag * mag;
      if (mag > argmag) {
        argmag = mag;
        arg = i;
      }
    }
    const double norm = std::sqrt(norm2);
    if (norm > 0.0 && argmag > 0.0) {
      const cd phase = std::conj(w[arg]) / std::abs(w[arg]);
      for (int i = 0; i < n; ++i) w[i] *= phase / norm;
    }
    for (int i = 0; i < n; ++i) out.vectors[static_cast<size_t>(i) * n + e] = w[i];
  }
  return out;
}

Tensor pseudoinverse(const Tensor& x, double tol) {
  ThinSvd svd = thin_svd(x, tol);
  const int n = x.shape[0], m = x.shape[1];
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < svd.rank; ++k) s += svd.v.at(i, k) * svd.u.at(j, k) / svd.sigma[k];
      out.at(i, j) = s;
    }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw dim_error("matmul: incompatible shapes " + a.shape_str() + " * " + b.shape_str());
  Tensor out({a.shape[0], b.shape[1]});
  kernels::matmul_acc(a.data.data(), b.data.data(), out.data.data(), a.shape[0], a.shape[1],
                      b.shape[1]);
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw dim_error("transpose: expected rank-2, got " + a.shape_str());
  Tensor out({a.shape[1], a.shape[0]});
  for (int i = 0; i < a.shape[0]; ++i)
    for (int j = 0; j < a.shape[1]; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

double spectrum_match_distance(const std::vector<std::complex<double>>& a,
                               const std::vector<std::complex<double>>& b) {
  if (a.size() != b.size()) throw contract_error("spectrum_match_distance: size mismatch");
  const int n = static_cast<int>(a.size());
  if (n == 0) return 0.0;
  if (n > 16) throw contract_error("spectrum_match_distance: too large for exact matching");
  const int full = (1 << n) - 1;
  std::vector<double> best(static_cast<size_t>(full) + 1,
                           std::numeric_limits<double>::infinity());
  best[0] = 0.0;
  for (int mask = 0; mask < full; ++mask) {
    if (!std::isfinite(best[mask])) continue;
    const int i = __builtin_popcount(static_cast<unsigned>(mask));
    for (int j = 0; j < n; ++j) {
      if (mask & (1 << j)) continue;
      const int next = mask | (1 << j);
      const double cost = std::max(best[mask], std::abs(a[i] - b[j]));
      if (cost < best[next]) best[next] = cost;
    }
  }
  return best[full];
}

}  // namespace l2o
