#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "twostage/design.hpp"

namespace twostage {

/// Principal stratum. First letter: behavior under a0, second: under a1
/// (c = complier, a = always-taker, n = never-taker).
enum class Stratum : std::uint8_t { cc = 0, aa, nn, ca, nc, na };

inline constexpr int kNumStrata = 6;
inline constexpr int kNumSlots = 4;
inline constexpr int kNumCells = 16;

inline constexpr std::array<Stratum, kNumStrata> kAllStrata = {
    Stratum::cc, Stratum::aa, Stratum::nn, Stratum::ca, Stratum::nc, Stratum::na};

inline constexpr int index_of(Stratum g) { return static_cast<int>(g); }

std::string_view to_string(Stratum g);
std::optional<Stratum> parse_stratum(std::string_view label);

/// Potential-table slot for (z, a): Y(0,a0), Y(1,a0), Y(0,a1), Y(1,a1).
inline constexpr int slot_index(int z, Mechanism a) { return 2 * index_of(a) + z; }
inline constexpr int slot_z(int slot) { return slot & 1; }
inline constexpr Mechanism slot_mechanism(int slot) { return slot < 2 ? Mechanism::a0 : Mechanism::a1; }

/// D_ij(z, a) for a unit in stratum g.
int potential_receipt(Stratum g, int z, Mechanism a);

/// Strata consistent with an observed (A, Z, D) triple.
std::span<const Stratum> compatible_strata(Mechanism a, int z, int d);

/// True when g complies under the base mechanism: {cc, ca} for a0, {cc, nc} for a1.
bool is_complier(Stratum g, Mechanism base);

struct CellKey {
  Stratum g = Stratum::cc;
  int z = 0;
  Mechanism a = Mechanism::a0;

  auto operator<=>(const CellKey&) const = default;
};

std::string to_string(const CellKey& key);

/// Canonical parameter cell after the exclusion restrictions. Collapsed
/// (z = 0, z = 1) pairs map to the z = 0 representative.
CellKey active_cell(Stratum g, int z, Mechanism a);

/// Dense index in [0, 16) of the canonical cell serving slot `slot` of stratum g.
int cell_index(Stratum g, int slot);
int cell_index(const CellKey& key);

/// The 16 canonical cells in table order (cc: 4, aa: 2, nn: 2, ca: 3, nc: 3, na: 2).
std::span<const CellKey, kNumCells> canonical_cells();

}  // namespace twostage
