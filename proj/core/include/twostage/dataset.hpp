#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "twostage/design.hpp"
#include "twostage/strata.hpp"

namespace twostage {

/// One unit's observed (j, i, A_j, Z_ij, D_ij, Y_ij).
struct UnitRecord {
  std::string cluster;
  std::string unit;
  Mechanism mechanism = Mechanism::a0;
  int z = 0;
  int d = 0;
  double y = 0.0;

  bool operator==(const UnitRecord&) const = default;
};

/// Thrown for data that violates the record schema. `line` is 1-based when known.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::optional<long> line = std::nullopt);
  std::optional<long> line() const { return line_; }

 private:
  std::optional<long> line_;
};

/// Per-cluster structure consumed by the estimands: n_j and K_j(a) for both mechanisms.
struct ClusterLayout {
  std::vector<int> cluster_of;                 ///< per unit
  std::vector<int> size;                       ///< n_j
  std::vector<std::array<int, 2>> treated;     ///< K_j(a0), K_j(a1)

  int units() const { return static_cast<int>(cluster_of.size()); }
  int clusters() const { return static_cast<int>(size.size()); }
  double share(int cluster, Mechanism a) const {
    return static_cast<double>(treated[cluster][index_of(a)]) / size[cluster];
  }
};

/// Validated collection of unit records with a derived cluster index.
class Dataset {
 public:
  Dataset() = default;

  /// Validates and indexes. Clusters are numbered by first appearance.
  /// `first_line` is the line number of records[0] for error messages (0 = unknown).
  static Dataset from_records(std::vector<UnitRecord> records, long first_line = 0);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<UnitRecord>& records() const { return records_; }
  const UnitRecord& record(std::size_t i) const { return records_[i]; }
  /// log(y_i) for positive outcomes, 0 for zeros.
  double log_outcome(std::size_t i) const { return log_y_[i]; }
  /// Potential-table slot holding the observed outcome.
  int observed_slot(std::size_t i) const { return slot_index(records_[i].z, records_[i].mechanism); }

  int clusters() const { return static_cast<int>(cluster_ids_.size()); }
  int cluster_of(std::size_t i) const { return cluster_of_[i]; }
  const std::string& cluster_id(int j) const { return cluster_ids_[j]; }
  Mechanism cluster_mechanism(int j) const { return cluster_mechanism_[j]; }
  std::span<const int> members(int j) const { return members_[j]; }
  int observed_treated(int j) const { return observed_treated_[j]; }

  /// K_j(a) for estimand weights: the observed treated count for the cluster's own
  /// mechanism; for the counterfactual mechanism, treated_count(n_j, q) using `q` if
  /// supplied, else the pooled observed treated share among clusters assigned it.
  ClusterLayout layout(std::optional<std::array<double, 2>> q = std::nullopt) const;

  bool operator==(const Dataset& other) const { return records_ == other.records_; }

 private:
  std::vector<UnitRecord> records_;
  std::vector<int> cluster_of_;
  std::vector<std::string> cluster_ids_;
  std::vector<Mechanism> cluster_mechanism_;
  std::vector<std::vector<int>> members_;
  std::vector<int> observed_treated_;
  std::vector<double> log_y_;
};

}  // namespace twostage
