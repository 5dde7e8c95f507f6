#pragma once

// Domain types shared by every module: measurement slices, cause lists,
// templates, covariates, model definitions and MCMC settings.
//
// Index conventions used throughout the library:
//   - disease classes are 1..L for cases, 0 denotes the control class;
//   - subclasses are 0-based (0..K-1);
//   - subjects and items are 0-based row/column indices.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace nplcm {

enum class Quality { BrS, SS };

std::string_view to_string(Quality q);

/// Tri-state binary measurement.
enum class Response : std::uint8_t { Negative = 0, Positive = 1, Missing = 2 };

/// Dense row-major N x J matrix of responses.
class ResponseMatrix {
 public:
  ResponseMatrix() = default;
  ResponseMatrix(std::size_t rows, std::size_t cols, Response fill = Response::Missing)
      : rows_(rows), cols_(cols), cells_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  Response operator()(std::size_t i, std::size_t j) const { return cells_[i * cols_ + j]; }
  Response& operator()(std::size_t i, std::size_t j) { return cells_[i * cols_ + j]; }

  bool operator==(const ResponseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Response> cells_;
};

struct MeasurementSlice {
  std::string name;
  Quality quality = Quality::BrS;
  std::vector<std::string> items;
  ResponseMatrix data;

  std::size_t num_items() const { return items.size(); }
};

/// Throws ValidationError if item names repeat or the data width disagrees
/// with the item list.
void check_slice(const MeasurementSlice& slice);

/// Ordered list of L cause labels. A label is an item name, a "+"-joined set
/// of item names, or the reserved NoS label.
class CauseList {
 public:
  static constexpr std::string_view kNotSpecified = "NoS";

  CauseList() = default;
  explicit CauseList(std::vector<std::string> causes);

  std::size_t size() const { return causes_.size(); }
  const std::string& operator[](std::size_t l) const { return causes_[l]; }
  const std::vector<std::string>& labels() const { return causes_; }

  /// Item names making up cause l (0-based); empty for NoS.
  std::vector<std::string> components(std::size_t l) const;

 private:
  std::vector<std::string> causes_;
};

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// (L+1) x J map of causative items. Row l-1 holds cause l; the last row is
/// all zeros and stands for the control class.
struct Template {
  std::string slice_name;
  BinaryMatrix matrix;

  std::size_t num_causes() const { return static_cast<std::size_t>(matrix.rows()) - 1; }
  std::size_t num_items() const { return static_cast<std::size_t>(matrix.cols()); }

  /// `cls` follows the class convention: 0 is control, 1..L are causes.
  bool causative(int cls, std::size_t j) const {
    return cls > 0 && matrix(cls - 1, static_cast<Eigen::Index>(j)) != 0;
  }
};

Template make_template(const std::vector<std::string>& items, const CauseList& causes,
                       std::string slice_name = {});

class CovariateTable {
 public:
  using Column = std::variant<std::vector<double>, std::vector<std::string>>;

  void add_column(std::string name, Column values);

  bool empty() const { return names_.empty(); }
  bool has(std::string_view name) const;
  std::size_t num_rows() const { return rows_; }
  const std::vector<std::string>& names() const { return names_; }
  const Column& column(std::string_view name) const;

  /// Numeric view of a column; throws for string columns.
  const std::vector<double>& numeric(std::string_view name) const;

  /// Sorted distinct levels of a column treated as a factor. Numeric columns
  /// are ordered numerically and rendered with %g.
  std::vector<std::string> factor_levels(std::string_view name) const;
  /// Level label of row i when the column is read as a factor.
  std::string level_of(std::string_view name, std::size_t i) const;

  /// Rows `idx` of every column, in that order.
  CovariateTable subset(const std::vector<std::size_t>& idx) const;

  bool operator==(const CovariateTable&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

struct Dataset {
  std::vector<MeasurementSlice> mbs;
  std::vector<MeasurementSlice> mss;
  std::vector<int> y;  // 1 case, 0 control
  CovariateTable x;

  std::size_t num_subjects() const { return y.size(); }
  std::size_t num_cases() const;
  std::size_t num_controls() const { return num_subjects() - num_cases(); }

  /// Rows `idx` of every slice, y and x.
  Dataset subset(const std::vector<std::size_t>& idx) const;
};

struct BetaPair {
  double a = 1.0;
  double b = 1.0;
};

/// Prior 2.5% and 97.5% quantiles of a rate.
struct BetaRange {
  double low = 0.0;
  double up = 0.0;
};

/// TPR prior for one slice: either explicit Beta pairs or ranges to be
/// matched, one entry per item.
using TprPrior = std::variant<std::vector<BetaPair>, std::vector<BetaRange>>;

struct StickHyper {
  double shape = 0.25;
  double rate = 0.25;
};

struct ModelSpec {
  std::vector<Quality> use_measurements{Quality::BrS};
  CauseList cause_list;
  /// K per BrS slice name; slices not listed use `default_k`.
  std::map<std::string, int> k_subclass;
  int default_k = 1;
  std::string eti_formula = "~ -1";
  /// Per BrS slice; slices not listed use "~ -1".
  std::map<std::string, std::string> fpr_formula;
  /// Dirichlet hyperparameters: empty (all ones), a scalar, or length L.
  std::vector<double> eti_prior;
  std::map<std::string, TprPrior> tpr_prior;
  StickHyper stick_hyper;

  bool uses(Quality q) const;
  int k_for(const std::string& slice) const;
  const std::string& fpr_formula_for(const std::string& slice) const;
  /// eti_prior expanded to length L. Throws for other lengths.
  std::vector<double> dirichlet_prior() const;
};

struct McmcSettings {
  int n_chains = 1;
  int n_iter = 2000;
  int n_burnin = 1000;
  int n_thin = 1;
  bool individual_pred = false;
  bool ppd = false;
  std::uint64_t seed = 1;
  std::string out_dir;

  void check() const;
  /// floor((n_iter - n_burnin) / n_thin)
  int retained() const { return (n_iter - n_burnin) / n_thin; }
  /// 1-based iteration t is kept after burn-in on the thinning grid.
  bool keeps(int t) const { return t > n_burnin && (t - n_burnin) % n_thin == 0; }
};

struct ValidationReport {
  std::size_t num_mbs = 0;
  std::size_t num_mss = 0;
  bool nested = false;
  bool do_reg_eti = false;
  std::map<std::string, bool> do_reg_fpr;
  bool eti_discrete = false;
  std::map<std::string, bool> fpr_discrete;
  std::vector<std::string> notes;
};

/// Checks `d` against `m`. Throws ValidationError on the first hard problem.
ValidationReport validate_dataset(const Dataset& d, const ModelSpec& m);

struct SliceSummary {
  std::string name;
  Quality quality = Quality::BrS;
  std::vector<std::string> items;
  std::size_t n_cases = 0;
  std::size_t n_controls = 0;
  std::vector<std::optional<double>> case_rate;
  /// Empty for SS slices.
  std::vector<std::optional<double>> control_rate;
  /// Items whose case (or control) rate is undefined because every entry is missing.
  std::vector<std::string> undefined;
};

SliceSummary summarize_slice(const MeasurementSlice& s, const std::vector<int>& y);

}  // namespace nplcm
