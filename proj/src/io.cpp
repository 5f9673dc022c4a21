#include "ggfa/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace ggfa {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  return out;
}

}  // namespace

Schema load_schema(const std::string& path) {
  std::ifstream in = open_in(path);
  Schema schema;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t comma = t.find(',');
    if (comma == std::string::npos)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'name,kind'");
    std::string name = trim(t.substr(0, comma));
    std::string kind = trim(t.substr(comma + 1));
    if (name.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": empty column name");
    ColumnKind k;
    if (kind == "continuous")
      k = ColumnKind::Continuous;
    else if (kind == "binary")
      k = ColumnKind::Binary;
    else
      throw DataError(path + ":" + std::to_string(lineno) + ": unknown kind '" +
                      kind + "' (expected continuous or binary)");
    schema.columns.push_back({name, k});
  }
  schema.validate();
  return schema;
}

void save_schema(const Schema& schema, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const auto& col : schema.columns)
    out << col.name << ","
        << (col.kind == ColumnKind::Continuous ? "continuous" : "binary") << "\n";
}

Dataset load_csv(const std::string& data_path, const Schema& schema) {
  schema.validate();
  std::ifstream in = open_in(data_path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(data_path + ": empty file");

  const std::vector<std::string> header = split_csv_line(line);
  std::map<std::string, int> file_col;
  for (size_t i = 0; i < header.size(); ++i) {
    std::string name = trim(header[i]);
    if (file_col.count(name))
      throw DataError(data_path + ": duplicate header column '" + name + "'");
    file_col[name] = static_cast<int>(i);
  }

  // Internal layout: continuous block then binary block, each in declared
  // order. Map each block slot to its file column.
  struct Slot {
    int file_idx;
    std::string name;
  };
  std::vector<Slot> cont_slots, bin_slots;
  for (const auto& col : schema.columns) {
    auto it = file_col.find(col.name);
    if (it == file_col.end())
      throw DataError(data_path + ": schema column '" + col.name +
                      "' missing from CSV header");
    (col.kind == ColumnKind::Continuous ? cont_slots : bin_slots)
        .push_back({it->second, col.name});
    file_col.erase(it);
  }
  if (!file_col.empty())
    throw DataError(data_path + ": CSV column '" + file_col.begin()->first +
                    "' not present in schema");

  Dataset d;
  d.schema = schema;
  const int p = static_cast<int>(cont_slots.size());
  const int q = static_cast<int>(bin_slots.size());
  int rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(data_path + ": row " + std::to_string(rowno) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    Row r;
    r.x.resize(p);
    r.x_obs.assign(static_cast<size_t>(p), 0);
    r.y.resize(q);
    r.y.setZero();
    r.y_obs.assign(static_cast<size_t>(q), 0);
    for (int j = 0; j < p; ++j) {
      const std::string cell = trim(cells[static_cast<size_t>(cont_slots[static_cast<size_t>(j)].file_idx)]);
      if (cell.empty()) {
        r.x(j) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size() || !std::isfinite(v))
        throw DataError(data_path + ": row " + std::to_string(rowno) + ", column '" +
                        cont_slots[static_cast<size_t>(j)].name +
                        "': cannot parse number '" + cell + "'");
      r.x(j) = v;
      r.x_obs[static_cast<size_t>(j)] = 1;
    }
    for (int j = 0; j < q; ++j) {
      const std::string cell = trim(cells[static_cast<size_t>(bin_slots[static_cast<size_t>(j)].file_idx)]);
      if (cell.empty()) continue;
      if (cell == "0")
        r.y(j) = 0;
      else if (cell == "1")
        r.y(j) = 1;
      else
        throw DataError(data_path + ": row " + std::to_string(rowno) + ", column '" +
                        bin_slots[static_cast<size_t>(j)].name + "': binary cell '" +
                        cell + "' is not 0, 1, or empty");
      r.y_obs[static_cast<size_t>(j)] = 1;
    }
    d.rows.push_back(std::move(r));
  }
  d.validate();
  return d;
}

void save_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream out = open_out(path);
  for (size_t i = 0; i < data.schema.columns.size(); ++i)
    out << (i ? "," : "") << data.schema.columns[i].name;
  out << "\n";
  for (const auto& row : data.rows) {
    int ci = 0, bi = 0;
    for (size_t i = 0; i < data.schema.columns.size(); ++i) {
      if (i) out << ",";
      if (data.schema.columns[i].kind == ColumnKind::Continuous) {
        if (row.x_obs[static_cast<size_t>(ci)]) out << fmt17(row.x(ci));
        ++ci;
      } else {
        if (row.y_obs[static_cast<size_t>(bi)]) out << row.y(bi);
        ++bi;
      }
    }
    out << "\n";
  }
}

namespace {

void write_vector(std::ostream& os, const Eigen::VectorXd& v) {
  os << "[";
  for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt17(v(i));
  os << "]";
}

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  os << "[";
  for (int i = 0; i < m.rows(); ++i) {
    if (i) os << ",";
    os << "[";
    for (int j = 0; j < m.cols(); ++j) os << (j ? "," : "") << fmt17(m(i, j));
    os << "]";
  }
  os << "]";
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string model_to_string(const ModelFile& m) {
  m.schema.validate();
  m.params.validate();
  if (m.schema.p_x() != m.params.p_x() || m.schema.q() != m.params.q())
    throw DataError("model document: schema does not match parameter shapes");
  std::ostringstream os;
  os << "{\n";
  os << "  \"format_version\": " << m.format_version << ",\n";
  os << "  \"schema\": [";
  for (size_t i = 0; i < m.schema.columns.size(); ++i) {
    const auto& col = m.schema.columns[i];
    os << (i ? "," : "") << "\n    {\"name\": \"" << json_escape(col.name)
       << "\", \"kind\": \""
       << (col.kind == ColumnKind::Continuous ? "continuous" : "binary") << "\"}";
  }
  os << "\n  ],\n";
  os << "  \"p_z\": " << m.params.p_z() << ",\n";
  os << "  \"mu_x\": ";
  write_vector(os, m.params.mu_x);
  os << ",\n  \"psi\": ";
  write_vector(os, m.params.psi);
  os << ",\n  \"b\": ";
  write_vector(os, m.params.b);
  os << ",\n  \"c\": " << fmt17(m.params.c);
  os << ",\n  \"W_hat\": ";
  write_matrix(os, m.params.W_hat);
  os << ",\n  \"G_hat\": ";
  write_matrix(os, m.params.G_hat);
  os << ",\n  \"canonical\": " << (m.canonical ? "true" : "false");
  if (m.fit) {
    os << ",\n  \"fit\": {\n";
    os << "    \"log_lik\": " << fmt17(m.fit->log_lik) << ",\n";
    os << "    \"bic\": " << fmt17(m.fit->bic) << ",\n";
    os << "    \"n_params\": " << m.fit->n_params << ",\n";
    os << "    \"seed\": " << m.fit->seed << ",\n";
    os << "    \"restarts\": " << m.fit->restarts << "\n";
    os << "  }";
  }
  os << "\n}\n";
  return os.str();
}

void save_model(const ModelFile& m, const std::string& path) {
  std::ofstream out = open_out(path);
  out << model_to_string(m);
}

namespace {

Eigen::VectorXd parse_vector(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array()) throw DataError("model file: '" + key + "' must be an array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

Eigen::MatrixXd parse_matrix(const nlohmann::json& j, const std::string& key, int cols_hint) {
  if (!j.is_array()) throw DataError("model file: '" + key + "' must be an array");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, cols_hint);
  const int cols = static_cast<int>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[static_cast<size_t>(i)].size()) != cols)
      throw DataError("model file: ragged matrix '" + key + "'");
    for (int c = 0; c < cols; ++c)
      m(i, c) = j[static_cast<size_t>(i)][static_cast<size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

ModelFile load_model(const std::string& path) {
  std::ifstream in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file " + path + ": " + e.what());
  }
  try {
    ModelFile m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1)
      throw DataError("model file " + path + ": unsupported format_version " +
                      std::to_string(m.format_version));
    for (const auto& col : j.at("schema")) {
      const std::string kind = col.at("kind").get<std::string>();
      if (kind != "continuous" && kind != "binary")
        throw DataError("model file: unknown column kind '" + kind + "'");
      m.schema.columns.push_back(
          {col.at("name").get<std::string>(),
           kind == "continuous" ? ColumnKind::Continuous : ColumnKind::Binary});
    }
    const int p_z = j.at("p_z").get<int>();
    m.params.mu_x = parse_vector(j.at("mu_x"), "mu_x");
    m.params.psi = parse_vector(j.at("psi"), "psi");
    m.params.b = parse_vector(j.at("b"), "b");
    m.params.c = j.at("c").get<double>();
    m.params.W_hat = parse_matrix(j.at("W_hat"), "W_hat", p_z);
    m.params.G_hat = parse_matrix(j.at("G_hat"), "G_hat", p_z);
    m.canonical = j.at("canonical").get<bool>();
    if (j.contains("fit")) {
      FitMeta f;
      f.log_lik = j["fit"].at("log_lik").get<double>();
      f.bic = j["fit"].at("bic").get<double>();
      f.n_params = j["fit"].at("n_params").get<int>();
      f.seed = j["fit"].at("seed").get<std::uint64_t>();
      f.restarts = j["fit"].at("restarts").get<int>();
      m.fit = f;
    }
    if (m.schema.p_x() != m.params.p_x() || m.schema.q() != m.params.q())
      throw DataError("model file " + path + ": schema does not match parameter shapes");
    if (m.params.p_z() != p_z)
      throw DataError("model file " + path + ": p_z does not match loading shapes");
    m.params.validate();
    m.schema.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file " + path + ": " + e.what());
  }
}

void log_transform_columns(Dataset* data, const std::vector<std::string>& names) {
  const auto cont_names = data->schema.continuous_names();
  for (const auto& name : names) {
    int idx = -1;
    for (size_t j = 0; j < cont_names.size(); ++j)
      if (cont_names[j] == name) idx = static_cast<int>(j);
    if (idx < 0) {
      bool is_binary = false;
      for (const auto& col : data->schema.columns)
        if (col.name == name && col.kind == ColumnKind::Binary) is_binary = true;
      throw UsageError(is_binary
                           ? "--log-columns: '" + name + "' is a binary column"
                           : "--log-columns: unknown column '" + name + "'");
    }
    for (size_t i = 0; i < data->rows.size(); ++i) {
      Row& r = data->rows[i];
      if (!r.x_obs[static_cast<size_t>(idx)]) continue;
      if (!(r.x(idx) > 0.0))
        throw DataError("log transform of column '" + name + "': nonpositive value " +
                        std::to_string(r.x(idx)) + " in row " + std::to_string(i + 1));
      r.x(idx) = std::log(r.x(idx));
    }
  }
}

}  // namespace ggfa
