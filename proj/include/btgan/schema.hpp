// Column-typed table schemas. A schema fixes the encoded layout: continuous
// and binary columns occupy one slot, categorical columns a one-hot block.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "btgan/rng.hpp"

namespace btgan {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ColumnKind { continuous, categorical, binary };

inline std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::binary: return "binary";
  }
  return "?";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "binary") return ColumnKind::binary;
  throw SchemaError("unknown column kind: " + s);
}

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> categories;  // categorical only
  bool is_sensitive = false;
  bool is_label = false;

  int encoded_width() const {
    return kind == ColumnKind::categorical ? static_cast<int>(categories.size()) : 1;
  }

  int category_index(const std::string& value) const {
    const auto it = std::find(categories.begin(), categories.end(), value);
    if (it == categories.end())
      throw SchemaError("column '" + name + "': value '" + value + "' not in declared categories");
    return static_cast<int>(it - categories.begin());
  }
};

class TableSchema {
 public:
  TableSchema() = default;

  explicit TableSchema(std::vector<ColumnSchema> columns) : columns_(std::move(columns)) {
    validate();
    int offset = 0;
    for (const auto& c : columns_) {
      offsets_.push_back(offset);
      offset += c.encoded_width();
    }
    width_ = offset;
  }

  const std::vector<ColumnSchema>& columns() const { return columns_; }
  int n_columns() const { return static_cast<int>(columns_.size()); }
  const ColumnSchema& column(int i) const { return columns_.at(static_cast<std::size_t>(i)); }
  int encoded_width() const { return width_; }
  int column_offset(int i) const { return offsets_.at(static_cast<std::size_t>(i)); }

  int column_index(const std::string& name) const {
    for (int i = 0; i < n_columns(); ++i)
      if (columns_[static_cast<std::size_t>(i)].name == name) return i;
    throw SchemaError("no column named '" + name + "'");
  }

  int label_column() const { return label_col_; }
  const ColumnSchema& label() const { return columns_[static_cast<std::size_t>(label_col_)]; }

  int label_cardinality() const {
    const auto& c = label();
    return c.kind == ColumnKind::categorical ? static_cast<int>(c.categories.size()) : 2;
  }

  std::vector<int> sensitive_columns() const {
    std::vector<int> out;
    for (int i = 0; i < n_columns(); ++i)
      if (columns_[static_cast<std::size_t>(i)].is_sensitive) out.push_back(i);
    return out;
  }

  // Encoded slot indices for all non-label columns, in schema order. This is
  // the feature layout seen by the generator and discriminators.
  std::vector<int> feature_slots() const {
    std::vector<int> out;
    for (int i = 0; i < n_columns(); ++i) {
      if (i == label_col_) continue;
      const int off = offsets_[static_cast<std::size_t>(i)];
      for (int j = 0; j < columns_[static_cast<std::size_t>(i)].encoded_width(); ++j)
        out.push_back(off + j);
    }
    return out;
  }

  int feature_width() const { return width_ - label().encoded_width(); }

  // Positions of sensitive-column slots within the feature layout.
  std::vector<int> sensitive_feature_positions() const {
    std::vector<int> out;
    int pos = 0;
    for (int i = 0; i < n_columns(); ++i) {
      if (i == label_col_) continue;
      const auto& c = columns_[static_cast<std::size_t>(i)];
      for (int j = 0; j < c.encoded_width(); ++j) {
        if (c.is_sensitive) out.push_back(pos);
        ++pos;
      }
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns_) {
      nlohmann::json jc{{"name", c.name},
                        {"kind", to_string(c.kind)},
                        {"is_sensitive", c.is_sensitive},
                        {"is_label", c.is_label}};
      if (c.kind == ColumnKind::categorical) jc["categories"] = c.categories;
      cols.push_back(jc);
    }
    return nlohmann::json{{"columns", cols}};
  }

  static TableSchema from_json(const nlohmann::json& j) {
    if (!j.contains("columns") || !j["columns"].is_array())
      throw SchemaError("schema json must contain a 'columns' array");
    std::vector<ColumnSchema> cols;
    for (const auto& jc : j["columns"]) {
      ColumnSchema c;
      c.name = jc.at("name").get<std::string>();
      c.kind = column_kind_from_string(jc.at("kind").get<std::string>());
      if (jc.contains("categories")) c.categories = jc["categories"].get<std::vector<std::string>>();
      c.is_sensitive = jc.value("is_sensitive", false);
      c.is_label = jc.value("is_label", false);
      cols.push_back(std::move(c));
    }
    return TableSchema(std::move(cols));
  }

  // Stable content hash; checkpoints refuse to load when it differs.
  std::uint64_t hash() const { return fnv1a64(to_json().dump()); }

 private:
  void validate() const {
    if (columns_.empty()) throw SchemaError("schema has no columns");
    std::set<std::string> names;
    int labels = 0;
    for (const auto& c : columns_) {
      if (!names.insert(c.name).second) throw SchemaError("duplicate column name '" + c.name + "'");
      if (c.is_label) {
        ++labels;
        label_col_ = column_position(c.name);
        if (c.kind == ColumnKind::continuous)
          throw SchemaError("label column '" + c.name + "' must be categorical or binary");
      }
      if (c.kind == ColumnKind::categorical) {
        if (c.categories.empty())
          throw SchemaError("categorical column '" + c.name + "' has no categories");
        std::set<std::string> cats(c.categories.begin(), c.categories.end());
        if (cats.size() != c.categories.size())
          throw SchemaError("categorical column '" + c.name + "' has duplicate categories");
      } else if (!c.categories.empty()) {
        throw SchemaError("column '" + c.name + "' is not categorical but declares categories");
      }
    }
    if (labels != 1) throw SchemaError("schema must declare exactly one label column");
    if (columns_[static_cast<std::size_t>(label_col_)].is_sensitive)
      throw SchemaError("label column cannot be sensitive");
  }

  int column_position(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<ColumnSchema> columns_;
  std::vector<int> offsets_;
  int width_ = 0;
  mutable int label_col_ = -1;
};

}  // namespace btgan
