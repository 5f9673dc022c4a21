#include "ggfa/types.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace ggfa {

int Schema::p_x() const {
  int n = 0;
  for (const auto& c : columns)
    if (c.kind == ColumnKind::Continuous) ++n;
  return n;
}

int Schema::q() const {
  int n = 0;
  for (const auto& c : columns)
    if (c.kind == ColumnKind::Binary) ++n;
  return n;
}

std::vector<std::string> Schema::continuous_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns)
    if (c.kind == ColumnKind::Continuous) out.push_back(c.name);
  return out;
}

std::vector<std::string> Schema::binary_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns)
    if (c.kind == ColumnKind::Binary) out.push_back(c.name);
  return out;
}

void Schema::validate() const {
  if (columns.empty()) throw DataError("schema has no columns");
  std::set<std::string> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) throw DataError("schema contains an empty column name");
    if (!seen.insert(c.name).second)
      throw DataError("duplicate column name in schema: " + c.name);
  }
}

Schema Schema::all_continuous(int p, const std::string& prefix) {
  Schema s;
  for (int j = 0; j < p; ++j)
    s.columns.push_back({prefix + std::to_string(j + 1), ColumnKind::Continuous});
  return s;
}

Schema Schema::mixed(int p_cont, int p_bin) {
  Schema s;
  for (int j = 0; j < p_cont; ++j)
    s.columns.push_back({"x" + std::to_string(j + 1), ColumnKind::Continuous});
  for (int j = 0; j < p_bin; ++j)
    s.columns.push_back({"y" + std::to_string(j + 1), ColumnKind::Binary});
  return s;
}

bool Row::complete() const {
  for (auto o : x_obs)
    if (!o) return false;
  for (auto o : y_obs)
    if (!o) return false;
  return true;
}

bool Row::any_observed() const {
  for (auto o : x_obs)
    if (o) return true;
  for (auto o : y_obs)
    if (o) return true;
  return false;
}

Row Row::complete_row(const Eigen::VectorXd& x, const Eigen::VectorXi& y) {
  Row r;
  r.x = x;
  r.y = y;
  r.x_obs.assign(static_cast<size_t>(x.size()), 1);
  r.y_obs.assign(static_cast<size_t>(y.size()), 1);
  return r;
}

bool Dataset::complete() const {
  for (const auto& r : rows)
    if (!r.complete()) return false;
  return true;
}

void Dataset::validate() const {
  schema.validate();
  const int p = schema.p_x();
  const int q = schema.q();
  for (size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    if (r.x.size() != p || static_cast<int>(r.x_obs.size()) != p ||
        r.y.size() != q || static_cast<int>(r.y_obs.size()) != q)
      throw DataError("row " + std::to_string(i + 1) + " does not match schema shape");
    for (int j = 0; j < p; ++j)
      if (r.x_obs[static_cast<size_t>(j)] && !std::isfinite(r.x(j)))
        throw DataError("row " + std::to_string(i + 1) + ": non-finite continuous value");
    for (int j = 0; j < q; ++j)
      if (r.y_obs[static_cast<size_t>(j)] && r.y(j) != 0 && r.y(j) != 1)
        throw DataError("row " + std::to_string(i + 1) + ": binary cell outside {0,1}");
  }
}

Eigen::MatrixXd Dataset::x_matrix() const {
  Eigen::MatrixXd X(n(), schema.p_x());
  for (int i = 0; i < n(); ++i) X.row(i) = rows[static_cast<size_t>(i)].x;
  return X;
}

Eigen::MatrixXi Dataset::y_matrix() const {
  Eigen::MatrixXi Y(n(), schema.q());
  for (int i = 0; i < n(); ++i) Y.row(i) = rows[static_cast<size_t>(i)].y;
  return Y;
}

Eigen::VectorXd BitState::bits() const {
  Eigen::VectorXd v(q);
  for (int s = 0; s < q; ++s) v(s) = bit(s);
  return v;
}

Eigen::VectorXi BitState::bits_int() const {
  Eigen::VectorXi v(q);
  for (int s = 0; s < q; ++s) v(s) = bit(s);
  return v;
}

BitState BitState::from_bits(const Eigen::VectorXi& y) {
  BitState st;
  st.q = static_cast<int>(y.size());
  for (int s = 0; s < st.q; ++s)
    if (y(s)) st.index |= (1u << s);
  return st;
}

void check_binary_capacity(int q) {
  if (q < 0) throw UsageError("negative binary count");
  if (q > kMaxBinary)
    throw CapacityError("enumerating 2^" + std::to_string(q) + " = " +
                        std::to_string((1ull << std::min(q, 62)) ) +
                        " binary states exceeds the 2^20 cap (q <= 20)");
}

std::vector<BitState> enumerate_states(int q) {
  check_binary_capacity(q);
  std::vector<BitState> out;
  out.reserve(1ull << q);
  for (std::uint32_t k = 0; k < (1u << q); ++k) out.push_back(BitState{k, q});
  return out;
}

}  // namespace ggfa
