#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

namespace nj {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Diagonalizes the angular difference operator on `rows` rows of length n with
// twisted closure z[n] = e^{i phi} z[0]. Mode k has eigenvalue 2(1 - cos((phi + 2 pi k)/n)).
class TwistedFFT {
 public:
  TwistedFFT(int rows, int n, double phi) : rows_(rows), n_(n), phi_(phi) {
    buf_ = fftw_alloc_complex(std::size_t(rows) * n);
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      fwd_ = fftw_plan_many_dft(1, &n_, rows_, buf_, nullptr, 1, n_, buf_, nullptr, 1, n_,
                                FFTW_FORWARD, FFTW_ESTIMATE);
      bwd_ = fftw_plan_many_dft(1, &n_, rows_, buf_, nullptr, 1, n_, buf_, nullptr, 1, n_,
                                FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    twist_.resize(n);
    for (int j = 0; j < n; ++j) twist_[j] = std::polar(1.0, -phi * j / n);
    eig_.resize(n);
    for (int k = 0; k < n; ++k) eig_[k] = 2.0 * (1.0 - std::cos((phi + 2 * std::numbers::pi * k) / n));
  }
  TwistedFFT(const TwistedFFT&) = delete;
  TwistedFFT& operator=(const TwistedFFT&) = delete;
  ~TwistedFFT() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }

  int rows() const { return rows_; }
  int size() const { return n_; }
  double eigenvalue(int k) const { return eig_[k]; }

  // Loads x (rows * n, row-major) into mode space; modes accessible via mode(row, k).
  void forward(std::span<const std::complex<double>> x) {
    auto* b = reinterpret_cast<std::complex<double>*>(buf_);
    for (int r = 0; r < rows_; ++r)
      for (int j = 0; j < n_; ++j) b[std::size_t(r) * n_ + j] = x[std::size_t(r) * n_ + j] * twist_[j];
    fftw_execute(fwd_);
  }
  std::complex<double>& mode(int row, int k) {
    return reinterpret_cast<std::complex<double>*>(buf_)[std::size_t(row) * n_ + k];
  }
  void backward(std::span<std::complex<double>> x) {
    fftw_execute(bwd_);
    auto* b = reinterpret_cast<std::complex<double>*>(buf_);
    for (int r = 0; r < rows_; ++r)
      for (int j = 0; j < n_; ++j)
        x[std::size_t(r) * n_ + j] = b[std::size_t(r) * n_ + j] * std::conj(twist_[j]) / double(n_);
  }

 private:
  int rows_, n_;
  double phi_;
  fftw_complex* buf_ = nullptr;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
  std::vector<std::complex<double>> twist_;
  std::vector<double> eig_;
};

// Solves a real symmetric tridiagonal system in place on complex data.
// lower[i] couples i and i-1 (lower[0] unused).
inline void solve_tridiagonal(std::span<const double> diag, std::span<const double> lower,
                              std::span<std::complex<double>> rhs, std::vector<double>& scratch) {
  const std::size_t n = diag.size();
  scratch.resize(n);
  double beta = diag[0];
  rhs[0] /= beta;
  for (std::size_t i = 1; i < n; ++i) {
    scratch[i] = lower[i] / beta;
    beta = diag[i] - lower[i] * scratch[i];
    rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= scratch[i + 1] * rhs[i + 1];
}

}  // namespace nj
