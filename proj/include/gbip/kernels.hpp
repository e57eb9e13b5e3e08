#pragma once

// Data-parallel inner loops. Every kernel has a portable scalar reference
// implementation and, on x86-64, an AVX2/FMA variant. The variant is picked
// once at runtime from the CPU feature flags (overridable with the
// environment variable GBIP_ISA=scalar|avx2, or set_active_isa() in tests).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace gbip::kernels {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);

/// True when the running CPU (and this build) can execute `isa`.
bool isa_supported(Isa isa);

/// Best ISA supported by this CPU.
Isa detected_isa();

/// ISA currently used by the dispatching entry points below.
Isa active_isa();

/// Switches the dispatch target. Throws ValidationError if unsupported.
void set_active_isa(Isa isa);

/// Restores the previous ISA on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

/// Result of one Hungarian relaxation sweep: the smallest slack among unused
/// columns and the first column attaining it.
struct RelaxResult {
  double delta;
  std::size_t column;
};

/// Sum of a[i] * b[i].
double dot(std::span<const double> a, std::span<const double> b);

/// y += alpha * x.
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Sum of (a[i] - b[i])^2.
double squared_distance(std::span<const double> a, std::span<const double> b);

/// Appends every index j in [begin, end) with |coords[.][j] - query|^2 <= radius_sq.
/// `coords` holds one pointer per ambient dimension (structure of arrays).
/// Distances are accumulated dimension by dimension without contraction, so
/// all variants select exactly the same set.
void neighbors_within(std::span<const double* const> coords, std::size_t begin,
                      std::size_t end, std::span<const double> query, double radius_sq,
                      std::vector<std::uint32_t>& out);

/// Inner loop of the shortest-augmenting-path assignment solver. For each
/// column j with used_mask[j] == 0:
///   slack = cost_row[j] - row_potential - col_potential[j]
///   if slack < min_slack[j]: min_slack[j] = slack, way[j] = current_col
/// and returns the minimum of min_slack over those columns (first index on
/// ties). used_mask entries are 0 or -1 (all bits set).
RelaxResult assignment_relax(std::span<const double> cost_row, double row_potential,
                             std::span<const double> col_potential,
                             std::span<double> min_slack, std::span<std::int64_t> way,
                             std::span<const std::int64_t> used_mask,
                             std::int64_t current_col);

// Direct access to each variant, for equivalence testing.
namespace scalar {
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double squared_distance(std::span<const double> a, std::span<const double> b);
void neighbors_within(std::span<const double* const> coords, std::size_t begin,
                      std::size_t end, std::span<const double> query, double radius_sq,
                      std::vector<std::uint32_t>& out);
RelaxResult assignment_relax(std::span<const double> cost_row, double row_potential,
                             std::span<const double> col_potential,
                             std::span<double> min_slack, std::span<std::int64_t> way,
                             std::span<const std::int64_t> used_mask,
                             std::int64_t current_col);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define GBIP_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double squared_distance(std::span<const double> a, std::span<const double> b);
void neighbors_within(std::span<const double* const> coords, std::size_t begin,
                      std::size_t end, std::span<const double> query, double radius_sq,
                      std::vector<std::uint32_t>& out);
RelaxResult assignment_relax(std::span<const double> cost_row, double row_potential,
                             std::span<const double> col_potential,
                             std::span<double> min_slack, std::span<std::int64_t> way,
                             std::span<const std::int64_t> used_mask,
                             std::int64_t current_col);
}  // namespace avx2
#else
#define GBIP_HAVE_AVX2_KERNELS 0
#endif

}  // namespace gbip::kernels
