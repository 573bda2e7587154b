#include <cmath>
#include <cstddef>
#include <limits>

#include "hpm/kernels.hpp"

namespace hpm::kernels::scalar {

double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_inplace(double* y, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

double max_value(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (v[i] > m) m = v[i];
  return m;
}

double sum_exp_shifted(const double* v, std::size_t n, double shift) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(v[i] - shift);
  return acc;
}

void exp_shifted(const double* v, std::size_t n, double shift, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(v[i] - shift);
}

}  // namespace hpm::kernels::scalar
