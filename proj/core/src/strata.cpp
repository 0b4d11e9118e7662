#include "twostage/strata.hpp"

#include <stdexcept>

namespace twostage {

namespace {

// Rows follow Stratum order; columns are slots (0,a0), (1,a0), (0,a1), (1,a1).
constexpr int kReceipt[kNumStrata][kNumSlots] = {
    {0, 1, 0, 1},  // cc
    {1, 1, 1, 1},  // aa
    {0, 0, 0, 0},  // nn
    {0, 1, 1, 1},  // ca
    {0, 0, 0, 1},  // nc
    {0, 0, 1, 1},  // na
};

constexpr int kCellOfSlot[kNumStrata][kNumSlots] = {
    {0, 1, 2, 3},     // cc never collapses
    {4, 4, 5, 5},     // aa
    {6, 6, 7, 7},     // nn
    {8, 9, 10, 10},   // ca collapses at a1
    {11, 11, 12, 13}, // nc collapses at a0
    {14, 14, 15, 15}, // na
};

constexpr std::array<CellKey, kNumCells> kCells = {{
    {Stratum::cc, 0, Mechanism::a0}, {Stratum::cc, 1, Mechanism::a0},
    {Stratum::cc, 0, Mechanism::a1}, {Stratum::cc, 1, Mechanism::a1},
    {Stratum::aa, 0, Mechanism::a0}, {Stratum::aa, 0, Mechanism::a1},
    {Stratum::nn, 0, Mechanism::a0}, {Stratum::nn, 0, Mechanism::a1},
    {Stratum::ca, 0, Mechanism::a0}, {Stratum::ca, 1, Mechanism::a0},
    {Stratum::ca, 0, Mechanism::a1},
    {Stratum::nc, 0, Mechanism::a0}, {Stratum::nc, 0, Mechanism::a1},
    {Stratum::nc, 1, Mechanism::a1},
    {Stratum::na, 0, Mechanism::a0}, {Stratum::na, 0, Mechanism::a1},
}};

struct CompatibilityTable {
  std::array<Stratum, kNumStrata> members[2][2][2]{};
  int count[2][2][2]{};

  constexpr CompatibilityTable() {
    for (int a = 0; a < 2; ++a) {
      for (int z = 0; z < 2; ++z) {
        for (Stratum g : kAllStrata) {
          const int d = kReceipt[index_of(g)][2 * a + z];
          members[a][z][d][count[a][z][d]++] = g;
        }
      }
    }
  }
};

constexpr CompatibilityTable kCompatibility{};

}  // namespace

std::string_view to_string(Stratum g) {
  static constexpr std::string_view kNames[] = {"cc", "aa", "nn", "ca", "nc", "na"};
  return kNames[index_of(g)];
}

std::optional<Stratum> parse_stratum(std::string_view label) {
  for (Stratum g : kAllStrata) {
    if (to_string(g) == label) return g;
  }
  return std::nullopt;
}

int potential_receipt(Stratum g, int z, Mechanism a) {
  return kReceipt[index_of(g)][slot_index(z, a)];
}

std::span<const Stratum> compatible_strata(Mechanism a, int z, int d) {
  if ((z != 0 && z != 1) || (d != 0 && d != 1)) {
    throw std::invalid_argument("compatible_strata: z and d must be binary");
  }
  const int ai = index_of(a);
  return {kCompatibility.members[ai][z][d].data(),
          static_cast<std::size_t>(kCompatibility.count[ai][z][d])};
}

bool is_complier(Stratum g, Mechanism base) {
  return potential_receipt(g, 0, base) == 0 && potential_receipt(g, 1, base) == 1;
}

std::string to_string(const CellKey& key) {
  std::string out(to_string(key.g));
  out += ',';
  out += static_cast<char>('0' + key.z);
  out += ',';
  out += to_string(key.a);
  return out;
}

int cell_index(Stratum g, int slot) { return kCellOfSlot[index_of(g)][slot]; }

int cell_index(const CellKey& key) { return cell_index(key.g, slot_index(key.z, key.a)); }

CellKey active_cell(Stratum g, int z, Mechanism a) { return kCells[cell_index(g, slot_index(z, a))]; }

std::span<const CellKey, kNumCells> canonical_cells() { return std::span<const CellKey, kNumCells>(kCells); }

}  // namespace twostage
