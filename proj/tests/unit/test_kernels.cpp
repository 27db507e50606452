#include "doctest.h"

#include <cmath>
#include <vector>

#include "icrl/kernels.hpp"
#include "icrl/rng.hpp"

using namespace icrl;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("every available kernel table matches the scalar reference") {
  const kernels::KernelTable& ref = kernels::scalar_table();
  Rng rng(7);
  for (const kernels::KernelTable* t : kernels::available_tables()) {
    CAPTURE(t->name);
    // Odd sizes exercise the vector tails.
    for (std::size_t rows : {1u, 3u, 8u, 17u, 64u}) {
      for (std::size_t cols : {1u, 2u, 5u, 16u, 33u}) {
        const auto w = random_vec(rng, rows * cols);
        const auto x = random_vec(rng, cols);
        const auto xr = random_vec(rng, rows);

        CHECK(std::abs(t->dot(x.data(), x.data(), cols) - ref.dot(x.data(), x.data(), cols)) <
              1e-12 * (1.0 + cols));

        std::vector<double> y1(rows), y2(rows);
        t->gemv(w.data(), x.data(), y1.data(), rows, cols);
        ref.gemv(w.data(), x.data(), y2.data(), rows, cols);
        CHECK(max_abs_diff(y1, y2) < 1e-12 * (1.0 + cols));

        std::vector<double> z1 = x, z2 = x;
        t->gemv_t_acc(w.data(), xr.data(), z1.data(), rows, cols);
        ref.gemv_t_acc(w.data(), xr.data(), z2.data(), rows, cols);
        CHECK(max_abs_diff(z1, z2) < 1e-12 * (1.0 + rows));

        std::vector<double> w1 = w, w2 = w;
        t->ger(0.3, xr.data(), x.data(), w1.data(), rows, cols);
        ref.ger(0.3, xr.data(), x.data(), w2.data(), rows, cols);
        CHECK(max_abs_diff(w1, w2) < 1e-12);

        std::vector<double> a1 = x, a2 = x;
        t->axpy(-1.7, x.data(), a1.data(), cols);
        ref.axpy(-1.7, x.data(), a2.data(), cols);
        CHECK(max_abs_diff(a1, a2) < 1e-12);
      }
    }
  }
}

TEST_CASE("active table is one of the available ones") {
  const auto tables = kernels::available_tables();
  const kernels::KernelTable* a = &kernels::active();
  CHECK(std::find(tables.begin(), tables.end(), a) != tables.end());
  CHECK(tables.front() == &kernels::scalar_table());
}
