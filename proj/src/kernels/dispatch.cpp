#include <atomic>
#include <cassert>

#include "hpm/error.hpp"
#include "hpm/kernels.hpp"

namespace hpm::kernels {
namespace {

struct Table {
  double (*squared_distance)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*add_inplace)(double*, const double*, std::size_t);
  double (*max_value)(const double*, std::size_t);
  double (*sum_exp_shifted)(const double*, std::size_t, double);
  void (*exp_shifted)(const double*, std::size_t, double, double*);
};

constexpr Table kScalar{scalar::squared_distance, scalar::axpy,           scalar::add_inplace,
                        scalar::max_value,        scalar::sum_exp_shifted, scalar::exp_shifted};
#if defined(HPM_HAVE_AVX2)
constexpr Table kAvx2{avx2::squared_distance, avx2::axpy,           avx2::add_inplace,
                      avx2::max_value,        avx2::sum_exp_shifted, avx2::exp_shifted};
#endif

bool cpu_has_avx2() noexcept {
#if defined(HPM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() noexcept { return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar; }

const Table* table_for(Isa isa) noexcept {
#if defined(HPM_HAVE_AVX2)
  if (isa == Isa::Avx2) return &kAvx2;
#endif
  (void)isa;
  return &kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

const Table& active() { return *table_for(current().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view to_string(Isa isa) noexcept { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) noexcept { return isa == Isa::Scalar || cpu_has_avx2(); }

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_supported(isa))
    fail(ErrorKind::InvalidArgument, "instruction set " + std::string(to_string(isa)) + " unavailable");
  current().store(isa);
}

void reset_isa() noexcept { current().store(detect()); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().squared_distance(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void add_inplace(std::span<double> y, std::span<const double> x) {
  assert(x.size() == y.size());
  active().add_inplace(y.data(), x.data(), y.size());
}

double max_value(std::span<const double> v) { return active().max_value(v.data(), v.size()); }

double sum_exp_shifted(std::span<const double> v, double shift) {
  return active().sum_exp_shifted(v.data(), v.size(), shift);
}

void exp_shifted(std::span<const double> v, double shift, std::span<double> out) {
  assert(v.size() == out.size());
  active().exp_shifted(v.data(), v.size(), shift, out.data());
}

}  // namespace hpm::kernels
