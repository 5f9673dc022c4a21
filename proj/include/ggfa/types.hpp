#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ggfa {

// Error taxonomy. The CLI maps these onto exit codes: usage 2, data 3,
// numerical 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, schema mismatches, bad cells).
class DataError : public Error {
 public:
  using Error::Error;
};

// Request exceeds a hard resource cap (e.g. binary-state enumeration).
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: divergence, degenerate matrices, empty optima.
class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class ColumnKind { Continuous, Binary };

struct Column {
  std::string name;
  ColumnKind kind;
};

// Ordered column list. Continuous and binary columns may be interleaved in
// the declared order; internally data is held as a continuous block followed
// by a binary block, each preserving declared relative order.
struct Schema {
  std::vector<Column> columns;

  int p_x() const;  // number of continuous columns
  int q() const;    // number of binary columns

  std::vector<std::string> continuous_names() const;
  std::vector<std::string> binary_names() const;

  // Throws DataError on empty schema or duplicate names.
  void validate() const;

  static Schema all_continuous(int p, const std::string& prefix = "x");
  static Schema mixed(int p_cont, int p_bin);
};

// One observation. x holds the continuous block (NaN where unobserved, with
// the mask authoritative); y holds the binary block (0/1; -1 where
// unobserved).
struct Row {
  Eigen::VectorXd x;
  std::vector<std::uint8_t> x_obs;
  Eigen::VectorXi y;
  std::vector<std::uint8_t> y_obs;

  bool complete() const;
  bool any_observed() const;
  static Row complete_row(const Eigen::VectorXd& x, const Eigen::VectorXi& y);
};

struct Dataset {
  Schema schema;
  std::vector<Row> rows;

  int n() const { return static_cast<int>(rows.size()); }
  bool complete() const;

  // Throws DataError if row shapes disagree with the schema or binary cells
  // fall outside {0,1}.
  void validate() const;

  // Complete rows only, as dense blocks (rows in dataset order).
  Eigen::MatrixXd x_matrix() const;
  Eigen::MatrixXi y_matrix() const;
};

// Hard cap on binary enumeration; 2^20 states is the largest table we build.
inline constexpr int kMaxBinary = 20;

// One of the 2^q binary states. Element s of bits() equals bit s of `index`
// (bit 0 = least significant).
struct BitState {
  std::uint32_t index = 0;
  int q = 0;

  int bit(int s) const { return static_cast<int>((index >> s) & 1u); }
  Eigen::VectorXd bits() const;
  Eigen::VectorXi bits_int() const;
  static BitState from_bits(const Eigen::VectorXi& y);
};

// All 2^q states in ascending index order. Throws CapacityError for q > 20.
std::vector<BitState> enumerate_states(int q);

// Throws CapacityError with a message naming the 2^q blow-up when q > 20.
void check_binary_capacity(int q);

}  // namespace ggfa
