#include "gpf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "gpf/errors.hpp"
#include "gpf/tokenizer.hpp"

namespace gpf {

namespace {

double frobenius_sq(const Matrix& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  return s;
}

double off_diagonal_sq(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (i != j) s += a(i, j) * a(i, j);
    }
  }
  return s;
}

void check_finite(const Matrix& a, const char* what) {
  for (double x : a.data()) {
    if (!std::isfinite(x)) {
      throw ValidationError(what, "contains non-finite entries");
    }
  }
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (b <= a) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 50);
}

}  // namespace

std::vector<double> symmetric_eigenvalues(const Matrix& input, const JacobiOptions& opts) {
  if (input.rows() != input.cols()) {
    throw ValidationError("matrix", "eigensolver needs a square matrix");
  }
  check_finite(input, "matrix");
  const std::size_t n = input.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > 1e-12 * (1.0 + std::abs(input(i, j)))) {
        throw ValidationError("matrix", "eigensolver needs a symmetric matrix");
      }
    }
  }
  Matrix a = input;
  const double scale = std::sqrt(frobenius_sq(a));
  std::vector<double> out;
  out.reserve(n);
  if (scale == 0.0 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(a(i, i));
    std::sort(out.begin(), out.end());
    return out;
  }
  const double target = opts.tolerance * scale;
  int sweep = 0;
  for (; sweep < opts.max_sweeps; ++sweep) {
    if (std::sqrt(off_diagonal_sq(a)) <= target) {
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) {
          continue;
        }
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  if (sweep == opts.max_sweeps && std::sqrt(off_diagonal_sq(a)) > target) {
    throw NumericalError("Jacobi eigensolver did not converge in " + std::to_string(opts.max_sweeps) + " sweeps");
  }
  for (std::size_t i = 0; i < n; ++i) out.push_back(a(i, i));
  std::sort(out.begin(), out.end());
  return out;
}

Esd gram_esd(const Matrix& w, double m, const JacobiOptions& opts) {
  if (!(m > 0.0)) {
    throw ValidationError("m", "must be > 0");
  }
  check_finite(w, "W");
  Esd esd;
  if (w.rows() >= w.cols()) {
    esd.eigenvalues = symmetric_eigenvalues(gram_transpose(w, m), opts);
  } else {
    esd.eigenvalues = symmetric_eigenvalues(gram(w, m), opts);
    esd.eigenvalues.insert(esd.eigenvalues.begin(), w.cols() - w.rows(), 0.0);
    std::sort(esd.eigenvalues.begin(), esd.eigenvalues.end());
  }
  return esd;
}

Complex stieltjes(const Esd& esd, Complex z) {
  if (z.imag() == 0.0) {
    throw ValidationError("z", "Stieltjes transform needs Im z != 0");
  }
  if (esd.eigenvalues.empty()) {
    throw ValidationError("esd", "empty spectrum");
  }
  Complex acc = 0.0;
  for (double lambda : esd.eigenvalues) {
    acc += 1.0 / (lambda - z);
  }
  return acc / static_cast<double>(esd.eigenvalues.size());
}

double MpLaw::lower() const {
  const double r = 1.0 - std::sqrt(q);
  return sigma2 * r * r;
}

double MpLaw::upper() const {
  const double r = 1.0 + std::sqrt(q);
  return sigma2 * r * r;
}

void MpLaw::validate() const {
  if (!(q > 0.0) || !std::isfinite(q)) throw ValidationError("q", "must be finite and > 0");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ValidationError("sigma2", "must be finite and > 0");
}

double mp_pdf(const MpLaw& law, double lambda) {
  law.validate();
  const double lo = law.lower();
  const double hi = law.upper();
  if (lambda <= lo || lambda >= hi || lambda <= 0.0) {
    return 0.0;
  }
  return std::sqrt((hi - lambda) * (lambda - lo)) / (2.0 * std::numbers::pi * law.q * law.sigma2 * lambda);
}

double mp_cdf(const MpLaw& law, double lambda, double abs_tol) {
  law.validate();
  const double atom = std::max(0.0, 1.0 - 1.0 / law.q);
  if (lambda < 0.0) {
    return 0.0;
  }
  const double lo = law.lower();
  const double hi = law.upper();
  if (lambda >= hi) {
    return 1.0;
  }
  if (lambda <= lo) {
    return atom;
  }
  // lambda = lo + width (1 - cos phi) / 2 removes the square-root endpoints.
  const double width = hi - lo;
  const double denom = 2.0 * std::numbers::pi * law.q * law.sigma2;
  auto integrand = [&](double phi) {
    const double s = std::sin(phi);
    const double lam = lo + 0.5 * width * (1.0 - std::cos(phi));
    if (lam <= 0.0) {
      // q = 1, phi = 0: the integrand tends to width (1 + cos phi) / (2 denom).
      return width / denom;
    }
    return 0.25 * width * width * s * s / (denom * lam);
  };
  const double phi_end = std::acos(std::clamp(1.0 - 2.0 * (lambda - lo) / width, -1.0, 1.0));
  const double mass = integrate(integrand, 0.0, phi_end, abs_tol);
  return std::clamp(atom + mass, 0.0, 1.0);
}

MpLaw variance_matched_mp(const Matrix& w, double m) {
  if (w.empty()) {
    throw ValidationError("W", "empty matrix");
  }
  if (!(m > 0.0)) {
    throw ValidationError("m", "must be > 0");
  }
  const double mean_sq = frobenius_sq(w) / static_cast<double>(w.size());
  MpLaw law;
  law.q = static_cast<double>(w.cols()) / static_cast<double>(w.rows());
  law.sigma2 = mean_sq * static_cast<double>(w.rows()) / m;
  law.validate();
  return law;
}

double ks_distance(const Esd& esd, const MpLaw& law) {
  if (esd.eigenvalues.empty()) {
    throw ValidationError("esd", "empty spectrum");
  }
  std::vector<double> lam = esd.eigenvalues;
  std::sort(lam.begin(), lam.end());
  const double n = static_cast<double>(lam.size());
  double d = 0.0;
  for (std::size_t i = 0; i < lam.size(); ++i) {
    // Round-off negatives of a PSD spectrum belong to the atom at zero.
    const double x = std::abs(lam[i]) < 1e-10 ? 0.0 : lam[i];
    const double f = mp_cdf(law, x);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

std::vector<Complex> default_z_grid() {
  std::vector<Complex> grid;
  constexpr int kPoints = 21;
  for (int k = 0; k < kPoints; ++k) {
    grid.emplace_back(-1.0 + 7.0 * static_cast<double>(k) / (kPoints - 1), 0.1);
  }
  return grid;
}

Matrix observation_probe_batch() {
  Matrix x(kObservationStates, kOneHotSize);
  for (int i = 0; i < kObservationStates; ++i) {
    const auto v = encode_onehot(ObservationToken::from_index(i));
    std::copy(v.begin(), v.end(), x.row(static_cast<std::size_t>(i)).begin());
  }
  return x;
}

std::vector<Matrix> hidden_activations(const GpfNetwork& net, const Matrix& batch) {
  if (batch.cols() != static_cast<std::size_t>(net.config().input_dim)) {
    throw ValidationError("batch", "column count does not match the network input");
  }
  std::vector<Matrix> out;
  Matrix y = batch;
  for (std::size_t l = 0; l < net.hidden_layers(); ++l) {
    const auto& layer = net.layer(l);
    Matrix z = matmul(y, layer.weights.transposed());
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        row[c] = std::max(0.0, row[c] + layer.bias[c]);
      }
    }
    y = std::move(z);
    out.push_back(y);
  }
  return out;
}

std::vector<DepthProbeRow> depth_composition_probe(std::span<const GpfNetwork> snapshots,
                                                   std::span<const Complex> grid, const Matrix& batch) {
  std::vector<DepthProbeRow> rows;
  if (snapshots.empty()) {
    return rows;
  }
  const auto& ref = snapshots.front().config();
  for (const auto& net : snapshots) {
    if (net.config().input_dim != ref.input_dim || net.config().hidden_width != ref.hidden_width) {
      throw ValidationError("snapshots", "snapshots disagree on input or hidden width");
    }
  }
  const double m = static_cast<double>(batch.rows());
  for (std::size_t s = 0; s < snapshots.size(); ++s) {
    const auto acts = hidden_activations(snapshots[s], batch);
    for (std::size_t l = 0; l < acts.size(); ++l) {
      Esd esd;
      esd.eigenvalues = symmetric_eigenvalues(gram_transpose(acts[l], m));
      esd.layer = static_cast<int>(l);
      DepthProbeRow row;
      row.snapshot = s;
      row.depth = l + 1;
      row.s.reserve(grid.size());
      for (const auto& z : grid) {
        row.s.push_back(stieltjes(esd, z));
      }
      if (l > 0) {
        const auto& prev = rows.back().s;
        for (std::size_t k = 0; k < grid.size(); ++k) {
          row.diff = std::max(row.diff, std::abs(row.s[k] - prev[k]));
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<DepthProbeRow> depth_composition_probe(std::span<const GpfNetwork> snapshots,
                                                   std::span<const Complex> grid) {
  return depth_composition_probe(snapshots, grid, observation_probe_batch());
}

}  // namespace gpf
