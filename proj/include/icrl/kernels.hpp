#pragma once

// Dense double-precision kernels used by the policy's forward and backward
// passes. Every kernel has a portable scalar reference; vectorized variants
// are compiled per target and picked once at startup from the CPU's feature
// bits. Set ICRL_KERNELS=scalar to pin the reference path.

#include <cassert>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace icrl::kernels {

struct KernelTable {
  const char* name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x, W row-major rows x cols
  void (*gemv)(const double* w, const double* x, double* y, std::size_t rows,
               std::size_t cols);
  // y += W^T x
  void (*gemv_t_acc)(const double* w, const double* x, double* y,
                     std::size_t rows, std::size_t cols);
  // W += alpha * x y^T
  void (*ger)(double alpha, const double* x, const double* y, double* w,
              std::size_t rows, std::size_t cols);
};

const KernelTable& scalar_table() noexcept;

// nullptr when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2_table() noexcept;

// Table selected for this process. Fixed after the first call.
const KernelTable& active() noexcept;

// All tables usable on this machine, reference first.
std::vector<const KernelTable*> available_tables();

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void gemv(std::span<const double> w, std::span<const double> x,
                 std::span<double> y) {
  assert(w.size() == x.size() * y.size());
  active().gemv(w.data(), x.data(), y.data(), y.size(), x.size());
}

inline void gemv_t_acc(std::span<const double> w, std::span<const double> x,
                       std::span<double> y) {
  assert(w.size() == x.size() * y.size());
  active().gemv_t_acc(w.data(), x.data(), y.data(), x.size(), y.size());
}

inline void ger(double alpha, std::span<const double> x, std::span<const double> y,
                std::span<double> w) {
  assert(w.size() == x.size() * y.size());
  active().ger(alpha, x.data(), y.data(), w.data(), x.size(), y.size());
}

}  // namespace icrl::kernels
