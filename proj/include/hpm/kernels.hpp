#pragma once

// Data-parallel inner loops used by clustering, inference and the M-step.
// Each kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant chosen once at startup from CPUID. Variants agree with the scalar
// reference to within a few ulps; only the summation order differs.

#include <span>
#include <string_view>

namespace hpm::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa) noexcept;

bool isa_supported(Isa isa) noexcept;

// The instruction set the dispatching entry points currently route to.
Isa active_isa() noexcept;

// Pins dispatch to `isa`. Throws hpm::Error(InvalidArgument) if the CPU or the
// build does not support it. Intended for equivalence tests and benchmarking.
void force_isa(Isa isa);

// Restores the CPUID-selected default.
void reset_isa() noexcept;

double squared_distance(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void add_inplace(std::span<double> y, std::span<const double> x);

// Largest element; -inf for an all -inf input.
double max_value(std::span<const double> v);

// sum_i exp(v_i - shift). Terms with v_i - shift below ~-708 contribute 0.
double sum_exp_shifted(std::span<const double> v, double shift);

// out_i = exp(v_i - shift).
void exp_shifted(std::span<const double> v, double shift, std::span<double> out);

// Per-ISA implementations, exposed so the equivalence tests can call a
// specific variant directly.
namespace scalar {
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add_inplace(double* y, const double* x, std::size_t n);
double max_value(const double* v, std::size_t n);
double sum_exp_shifted(const double* v, std::size_t n, double shift);
void exp_shifted(const double* v, std::size_t n, double shift, double* out);
}  // namespace scalar

#if defined(HPM_HAVE_AVX2)
namespace avx2 {
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add_inplace(double* y, const double* x, std::size_t n);
double max_value(const double* v, std::size_t n);
double sum_exp_shifted(const double* v, std::size_t n, double shift);
void exp_shifted(const double* v, std::size_t n, double shift, double* out);
}  // namespace avx2
#endif

}  // namespace hpm::kernels
