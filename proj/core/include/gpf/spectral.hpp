#pragma once

// Spectral diagnostics for layer weights and activations: Gram-matrix
// spectra, Stieltjes transforms, the Marchenko-Pastur reference law and a
// depth-wise composition probe.

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "gpf/matrix.hpp"
#include "gpf/network.hpp"

namespace gpf {

using Complex = std::complex<double>;

struct JacobiOptions {
  double tolerance = 1e-10;  // off-diagonal Frobenius norm relative to ||A||_F
  int max_sweeps = 100;
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Throws NumericalError when the sweep budget runs out.
std::vector<double> symmetric_eigenvalues(const Matrix& a, const JacobiOptions& opts = {});

struct Esd {
  std::vector<double> eigenvalues;  // ascending
  int layer = -1;
  std::int64_t episode = -1;
};

/// Spectrum of (1/m) W^T W. When W has fewer rows than columns the
/// smaller Gram matrix (1/m) W W^T is diagonalised and padded with zeros.
Esd gram_esd(const Matrix& w, double m, const JacobiOptions& opts = {});

/// (1/N) sum_i 1 / (lambda_i - z). Rejects z with zero imaginary part.
Complex stieltjes(const Esd& esd, Complex z);

struct MpLaw {
  double q = 1.0;       // n / m
  double sigma2 = 1.0;  // entry variance

  double lower() const;
  double upper() const;
  void validate() const;
};

/// Density of the absolutely continuous part.
double mp_pdf(const MpLaw& law, double lambda);
/// CDF including the point mass max(0, 1 - 1/q) at zero.
double mp_cdf(const MpLaw& law, double lambda, double abs_tol = 1e-8);

/// MP law for (1/m) W^T W when W (r x c) has i.i.d. entries with the
/// empirical second moment of W: q = c / r, sigma^2 = mean(W^2) * r / m.
MpLaw variance_matched_mp(const Matrix& w, double m);

/// sup |F_n - F| over the empirical spectrum.
double ks_distance(const Esd& esd, const MpLaw& law);

/// {x + 0.1 i : x in 21 points on [-1, 6]}.
std::vector<Complex> default_z_grid();

/// All 392 one-hot observations, one per row.
Matrix observation_probe_batch();

struct DepthProbeRow {
  std::size_t snapshot = 0;
  std::size_t depth = 0;  // 1-based hidden depth
  std::vector<Complex> s;
  double diff = 0.0;      // ||s^(depth) - s^(depth-1)||_inf, 0 at depth 1
};

/// Propagates `batch` through the hidden layers of each snapshot and
/// evaluates the Stieltjes transform of every post-activation Gram matrix
/// (1/m) Y^T Y on `grid`. Snapshots must share input and hidden widths.
std::vector<DepthProbeRow> depth_composition_probe(std::span<const GpfNetwork> snapshots,
                                                   std::span<const Complex> grid, const Matrix& batch);
std::vector<DepthProbeRow> depth_composition_probe(std::span<const GpfNetwork> snapshots,
                                                   std::span<const Complex> grid);

/// Hidden-layer post-activations for a batch (rows = samples).
std::vector<Matrix> hidden_activations(const GpfNetwork& net, const Matrix& batch);

}  // namespace gpf
