#include <atomic>
#include <cstdlib>
#include <string_view>

#include "gbip/errors.hpp"
#include "gbip/kernels.hpp"

namespace gbip::kernels {

namespace {

struct Table {
  Isa isa;
  double (*dot)(std::span<const double>, std::span<const double>);
  void (*axpy)(double, std::span<const double>, std::span<double>);
  double (*squared_distance)(std::span<const double>, std::span<const double>);
  void (*neighbors_within)(std::span<const double* const>, std::size_t, std::size_t,
                           std::span<const double>, double, std::vector<std::uint32_t>&);
  RelaxResult (*assignment_relax)(std::span<const double>, double, std::span<const double>,
                                  std::span<double>, std::span<std::int64_t>,
                                  std::span<const std::int64_t>, std::int64_t);
};

constexpr Table kScalar{Isa::scalar,           scalar::dot,
                        scalar::axpy,          scalar::squared_distance,
                        scalar::neighbors_within, scalar::assignment_relax};

#if GBIP_HAVE_AVX2_KERNELS
constexpr Table kAvx2{Isa::avx2,             avx2::dot,
                      avx2::axpy,            avx2::squared_distance,
                      avx2::neighbors_within, avx2::assignment_relax};
#endif

const Table* table_for(Isa isa) {
#if GBIP_HAVE_AVX2_KERNELS
  if (isa == Isa::avx2) return &kAvx2;
#endif
  (void)isa;
  return &kScalar;
}

const Table* initial_table() {
  Isa isa = detected_isa();
  if (const char* env = std::getenv("GBIP_ISA")) {
    const std::string_view v(env);
    if (v == "scalar") isa = Isa::scalar;
    else if (v == "avx2" && isa_supported(Isa::avx2)) isa = Isa::avx2;
  }
  return table_for(isa);
}

std::atomic<const Table*>& current() {
  static std::atomic<const Table*> table{initial_table()};
  return table;
}

inline const Table& active() { return *current().load(std::memory_order_relaxed); }

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
#if GBIP_HAVE_AVX2_KERNELS
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detected_isa() { return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

Isa active_isa() { return active().isa; }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ValidationError(std::string("ISA not supported on this CPU: ") + isa_name(isa));
  }
  current().store(table_for(isa), std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) { return active().dot(a, b); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x, y);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a, b);
}

void neighbors_within(std::span<const double* const> coords, std::size_t begin,
                      std::size_t end, std::span<const double> query, double radius_sq,
                      std::vector<std::uint32_t>& out) {
  active().neighbors_within(coords, begin, end, query, radius_sq, out);
}

RelaxResult assignment_relax(std::span<const double> cost_row, double row_potential,
                             std::span<const double> col_potential,
                             std::span<double> min_slack, std::span<std::int64_t> way,
                             std::span<const std::int64_t> used_mask,
                             std::int64_t current_col) {
  return active().assignment_relax(cost_row, row_potential, col_potential, min_slack, way,
                                   used_mask, current_col);
}

}  // namespace gbip::kernels
