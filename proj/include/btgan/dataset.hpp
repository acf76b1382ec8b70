// Encoded dataset container and schema-driven CSV ingestion.
//
// Encoding: categorical columns become one-hot blocks in declared category
// order, binary columns a single 0/1 slot, continuous columns are min-max
// scaled to [0,1] with the scaling retained for inversion. Rows with a blank
// label cell are kept and flagged unobserved via label_mask.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "btgan/rng.hpp"
#include "btgan/schema.hpp"

namespace btgan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SplitTag { train, test };

inline std::string to_string(SplitTag t) { return t == SplitTag::train ? "train" : "test"; }

struct ContinuousScale {
  double min = 0.0;
  double max = 1.0;

  double encode(double v) const {
    if (max <= min) return 0.5;  // degenerate column
    return (v - min) / (max - min);
  }
  double decode(double u) const { return max <= min ? min : min + u * (max - min); }
};

class Dataset {
 public:
  Dataset() = default;

  Dataset(TableSchema schema, Matrix rows, std::vector<std::uint8_t> label_mask, SplitTag split,
          std::vector<ContinuousScale> scales)
      : schema_(std::move(schema)),
        rows_(std::move(rows)),
        label_mask_(std::move(label_mask)),
        split_(split),
        scales_(std::move(scales)) {
    if (rows_.cols() != schema_.encoded_width())
      throw DataError("encoded width mismatch between rows and schema");
    if (static_cast<Eigen::Index>(label_mask_.size()) != rows_.rows())
      throw DataError("label_mask length must equal row count");
  }

  const TableSchema& schema() const { return schema_; }
  const Matrix& encoded() const { return rows_; }
  const std::vector<std::uint8_t>& label_mask() const { return label_mask_; }
  SplitTag split() const { return split_; }
  const std::vector<ContinuousScale>& scales() const { return scales_; }
  Eigen::Index n_rows() const { return rows_.rows(); }

  std::size_t n_observed_labels() const {
    std::size_t n = 0;
    for (auto m : label_mask_) n += m ? 1 : 0;
    return n;
  }

  bool fully_labeled() const { return n_observed_labels() == label_mask_.size(); }

  // Non-label encoded slots, in schema order.
  Matrix features() const {
    const auto slots = schema_.feature_slots();
    Matrix out(rows_.rows(), static_cast<Eigen::Index>(slots.size()));
    for (std::size_t j = 0; j < slots.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = rows_.col(slots[j]);
    return out;
  }

  // Class index per row; -1 where the label is unobserved.
  std::vector<int> labels() const {
    const int off = schema_.column_offset(schema_.label_column());
    const auto& lab = schema_.label();
    std::vector<int> out(static_cast<std::size_t>(rows_.rows()), -1);
    for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
      if (!label_mask_[static_cast<std::size_t>(r)]) continue;
      if (lab.kind == ColumnKind::binary) {
        out[static_cast<std::size_t>(r)] = rows_(r, off) > 0.5 ? 1 : 0;
      } else {
        Eigen::Index arg = 0;
        rows_.row(r).segment(off, lab.encoded_width()).maxCoeff(&arg);
        out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
      }
    }
    return out;
  }

  std::vector<double> label_prior() const {
    std::vector<double> counts(static_cast<std::size_t>(schema_.label_cardinality()), 0.0);
    double total = 0.0;
    for (int y : labels()) {
      if (y < 0) continue;
      counts[static_cast<std::size_t>(y)] += 1.0;
      total += 1.0;
    }
    if (total == 0.0) throw DataError("dataset has no observed labels");
    for (auto& c : counts) c /= total;
    return counts;
  }

  // Group id per row for one sensitive column: the category index (or 0/1 for
  // binary). Continuous sensitive columns are not groupable.
  std::vector<int> sensitive_groups(int column) const {
    const auto& c = schema_.column(column);
    if (c.kind == ColumnKind::continuous)
      throw DataError("sensitive column '" + c.name + "' is continuous; cannot form groups");
    const int off = schema_.column_offset(column);
    std::vector<int> out(static_cast<std::size_t>(rows_.rows()));
    for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
      if (c.kind == ColumnKind::binary) {
        out[static_cast<std::size_t>(r)] = rows_(r, off) > 0.5 ? 1 : 0;
      } else {
        Eigen::Index arg = 0;
        rows_.row(r).segment(off, c.encoded_width()).maxCoeff(&arg);
        out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
      }
    }
    return out;
  }

  Dataset subset(const std::vector<std::size_t>& idx, SplitTag split) const {
    Matrix out(static_cast<Eigen::Index>(idx.size()), rows_.cols());
    std::vector<std::uint8_t> mask(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = rows_.row(static_cast<Eigen::Index>(idx[i]));
      mask[i] = label_mask_[idx[i]];
    }
    return Dataset(schema_, std::move(out), std::move(mask), split, scales_);
  }

 private:
  TableSchema schema_;
  Matrix rows_;
  std::vector<std::uint8_t> label_mask_;
  SplitTag split_ = SplitTag::train;
  std::vector<ContinuousScale> scales_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(trim(cell));
  return out;
}

inline double parse_binary_cell(const std::string& cell, const std::string& column, std::size_t row) {
  if (cell == "0") return 0.0;
  if (cell == "1") return 1.0;
  throw DataError("row " + std::to_string(row) + ", column '" + column +
                  "': binary cell must be 0 or 1, got '" + cell + "'");
}

}  // namespace detail

// Reads a header CSV into an encoded Dataset. Header names must match the
// schema exactly (same order). A blank label cell marks the row unlabeled;
// blanks elsewhere are rejected.
inline Dataset load_csv(const std::string& path, const TableSchema& schema, SplitTag split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV file: " + path);
  const auto header = detail::split_csv_line(line);
  if (static_cast<int>(header.size()) != schema.n_columns())
    throw DataError("CSV has " + std::to_string(header.size()) + " columns, schema declares " +
                    std::to_string(schema.n_columns()));
  for (int i = 0; i < schema.n_columns(); ++i) {
    if (header[static_cast<std::size_t>(i)] != schema.column(i).name)
      throw DataError("header mismatch at position " + std::to_string(i) + ": expected '" +
                      schema.column(i).name + "', got '" + header[static_cast<std::size_t>(i)] + "'");
  }

  std::vector<std::vector<std::string>> cells;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto row = detail::split_csv_line(line);
    if (static_cast<int>(row.size()) != schema.n_columns())
      throw DataError("row " + std::to_string(cells.size()) + " has " + std::to_string(row.size()) +
                      " cells, expected " + std::to_string(schema.n_columns()));
    cells.push_back(std::move(row));
  }

  const std::size_t n = cells.size();
  const int label_col = schema.label_column();

  // Pass 1: raw continuous values and scale fitting.
  std::vector<ContinuousScale> scales;
  std::vector<std::vector<double>> raw_cont(static_cast<std::size_t>(schema.n_columns()));
  for (int c = 0; c < schema.n_columns(); ++c) {
    if (schema.column(c).kind != ColumnKind::continuous) continue;
    auto& vals = raw_cont[static_cast<std::size_t>(c)];
    vals.resize(n);
    ContinuousScale sc{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (std::size_t r = 0; r < n; ++r) {
      const std::string& cell = cells[r][static_cast<std::size_t>(c)];
      try {
        std::size_t used = 0;
        vals[r] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DataError("row " + std::to_string(r) + ", column '" + schema.column(c).name +
                        "': unparseable continuous cell '" + cell + "'");
      }
      sc.min = std::min(sc.min, vals[r]);
      sc.max = std::max(sc.max, vals[r]);
    }
    if (n == 0) sc = ContinuousScale{};
    scales.push_back(sc);
  }

  // Pass 2: encode.
  Matrix rows = Matrix::Zero(static_cast<Eigen::Index>(n), schema.encoded_width());
  std::vector<std::uint8_t> mask(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    int cont_idx = 0;
    for (int c = 0; c < schema.n_columns(); ++c) {
      const auto& col = schema.column(c);
      const int off = schema.column_offset(c);
      const std::string& cell = cells[r][static_cast<std::size_t>(c)];
      if (c == label_col && cell.empty()) {
        mask[r] = 0;
        if (col.kind == ColumnKind::continuous) ++cont_idx;
        continue;
      }
      switch (col.kind) {
        case ColumnKind::continuous:
          rows(static_cast<Eigen::Index>(r), off) =
              scales[static_cast<std::size_t>(cont_idx)].encode(raw_cont[static_cast<std::size_t>(c)][r]);
          ++cont_idx;
          break;
        case ColumnKind::binary:
          rows(static_cast<Eigen::Index>(r), off) = detail::parse_binary_cell(cell, col.name, r);
          break;
        case ColumnKind::categorical:
          rows(static_cast<Eigen::Index>(r), off + col.category_index(cell)) = 1.0;
          break;
      }
    }
  }
  return Dataset(schema, std::move(rows), std::move(mask), split, std::move(scales));
}

// Masks floor(fraction * n_observed) currently observed labels, chosen
// deterministically from the seed. Encoded label values are zeroed so masked
// rows carry no label signal; originals stay available to the caller that
// keeps the unmasked dataset.
inline Dataset mask_labels(const Dataset& d, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw DataError("mask fraction must lie in [0,1), got " + std::to_string(fraction));
  std::vector<std::size_t> observed;
  for (std::size_t r = 0; r < d.label_mask().size(); ++r)
    if (d.label_mask()[r]) observed.push_back(r);
  const auto n_mask = static_cast<std::size_t>(fraction * static_cast<double>(observed.size()));

  RngStream rng(substream_seed(seed, "label-mask"));
  rng.shuffle(observed);

  Matrix rows = d.encoded();
  std::vector<std::uint8_t> mask = d.label_mask();
  const int off = d.schema().column_offset(d.schema().label_column());
  const int w = d.schema().label().encoded_width();
  for (std::size_t i = 0; i < n_mask; ++i) {
    mask[observed[i]] = 0;
    rows.row(static_cast<Eigen::Index>(observed[i])).segment(off, w).setZero();
  }
  return Dataset(d.schema(), std::move(rows), std::move(mask), d.split(), d.scales());
}

// Decodes encoded rows back to a table of strings. Categorical blocks must be
// valid one-hot rows (generated batches are argmax-discretized first). When a
// label mask is supplied, masked rows decode to a blank label cell.
inline std::vector<std::vector<std::string>> decode(const Dataset& d, const Matrix& rows,
                                                    const std::vector<std::uint8_t>* mask = nullptr) {
  const auto& schema = d.schema();
  if (rows.cols() != schema.encoded_width())
    throw DataError("decode: encoded width mismatch");
  std::vector<std::vector<std::string>> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    std::vector<std::string> rec;
    int cont_idx = 0;
    for (int c = 0; c < schema.n_columns(); ++c) {
      const auto& col = schema.column(c);
      const int off = schema.column_offset(c);
      if (c == schema.label_column() && mask && !(*mask)[static_cast<std::size_t>(r)]) {
        rec.emplace_back();
        if (col.kind == ColumnKind::continuous) ++cont_idx;
        continue;
      }
      switch (col.kind) {
        case ColumnKind::continuous: {
          const double v = d.scales()[static_cast<std::size_t>(cont_idx)].decode(rows(r, off));
          std::ostringstream os;
          os << v;
          rec.push_back(os.str());
          ++cont_idx;
          break;
        }
        case ColumnKind::binary:
          rec.push_back(rows(r, off) > 0.5 ? "1" : "0");
          break;
        case ColumnKind::categorical: {
          const auto block = rows.row(r).segment(off, col.encoded_width());
          const double sum = block.sum();
          if (std::abs(sum - 1.0) > 1e-9)
            throw DataError("decode: one-hot group for column '" + col.name + "' sums to " +
                            std::to_string(sum) + " at row " + std::to_string(r));
          Eigen::Index arg = 0;
          block.maxCoeff(&arg);
          rec.push_back(col.categories[static_cast<std::size_t>(arg)]);
          break;
        }
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_csv(const std::string& path, const TableSchema& schema,
                      const std::vector<std::vector<std::string>>& table,
                      const std::vector<std::uint8_t>* label_mask = nullptr) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file: " + path);
  for (int c = 0; c < schema.n_columns(); ++c) out << (c ? "," : "") << schema.column(c).name;
  out << "\n";
  const int label_col = schema.label_column();
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (int c = 0; c < schema.n_columns(); ++c) {
      if (c) out << ",";
      if (label_mask && c == label_col && !(*label_mask)[r]) continue;  // blank cell
      out << table[r][static_cast<std::size_t>(c)];
    }
    out << "\n";
  }
}

// Deterministic stratified split by (sensitive-group, label) cells.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double train_fraction,
                                                    std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw DataError("train_fraction must lie in (0,1)");
  const auto labels = d.labels();
  std::vector<int> strata(static_cast<std::size_t>(d.n_rows()), 0);
  const auto sens = d.schema().sensitive_columns();
  if (!sens.empty()) {
    const auto groups = d.sensitive_groups(sens.front());
    for (std::size_t r = 0; r < strata.size(); ++r) strata[r] = groups[r];
  }
  const int n_groups = 1 + *std::max_element(strata.begin(), strata.end());
  for (std::size_t r = 0; r < strata.size(); ++r)
    strata[r] = strata[r] * (d.schema().label_cardinality() + 1) + (labels[r] + 1);

  std::vector<std::vector<std::size_t>> buckets(
      static_cast<std::size_t>(n_groups * (d.schema().label_cardinality() + 1) + 2));
  for (std::size_t r = 0; r < strata.size(); ++r) buckets[static_cast<std::size_t>(strata[r])].push_back(r);

  RngStream rng(substream_seed(seed, "split"));
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& b : buckets) {
    if (b.empty()) continue;
    rng.shuffle(b);
    const auto n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(b.size())));
    for (std::size_t i = 0; i < b.size(); ++i)
      (i < n_train ? train_idx : test_idx).push_back(b[i]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {d.subset(train_idx, SplitTag::train), d.subset(test_idx, SplitTag::test)};
}

}  // namespace btgan
