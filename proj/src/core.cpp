#include "nplcm/core.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "nplcm/error.hpp"
#include "nplcm/regression.hpp"

namespace nplcm {

std::string_view to_string(Quality q) { return q == Quality::BrS ? "BrS" : "SS"; }

void check_slice(const MeasurementSlice& slice) {
  std::set<std::string> seen;
  for (const auto& item : slice.items) {
    if (!seen.insert(item).second)
      throw ValidationError("slice " + slice.name + ": duplicate item '" + item + "'");
  }
  if (slice.data.cols() != slice.items.size())
    throw ValidationError("slice " + slice.name + ": data has " + std::to_string(slice.data.cols()) +
                          " columns for " + std::to_string(slice.items.size()) + " items");
}

// ---------------------------------------------------------------------------
// CauseList / Template

CauseList::CauseList(std::vector<std::string> causes) : causes_(std::move(causes)) {
  if (causes_.empty()) throw ValidationError("cause list is empty");
  std::set<std::string> seen;
  for (const auto& c : causes_) {
    if (c.empty()) throw ValidationError("cause list contains an empty label");
    if (!seen.insert(c).second) throw ValidationError("duplicate cause label '" + c + "'");
  }
}

std::vector<std::string> CauseList::components(std::size_t l) const {
  const std::string& label = causes_.at(l);
  if (label == kNotSpecified) return {};
  std::vector<std::string> out;
  std::stringstream ss(label);
  std::string part;
  while (std::getline(ss, part, '+')) {
    auto b = part.find_first_not_of(' ');
    auto e = part.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(part.substr(b, e - b + 1));
  }
  return out;
}

Template make_template(const std::vector<std::string>& items, const CauseList& causes,
                       std::string slice_name) {
  if (causes.size() == 0) throw ValidationError("cause list is empty");
  if (items.empty()) throw ValidationError("template needs at least one item");
  std::set<std::string> seen;
  for (const auto& it : items)
    if (!seen.insert(it).second) throw ValidationError("duplicate item '" + it + "'");

  const auto L = static_cast<Eigen::Index>(causes.size());
  const auto J = static_cast<Eigen::Index>(items.size());
  Template t{std::move(slice_name), BinaryMatrix::Zero(L + 1, J)};
  for (Eigen::Index l = 0; l < L; ++l) {
    for (const auto& comp : causes.components(static_cast<std::size_t>(l))) {
      auto it = std::find(items.begin(), items.end(), comp);
      if (it != items.end()) t.matrix(l, it - items.begin()) = 1;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// CovariateTable

namespace {

std::size_t column_size(const CovariateTable::Column& c) {
  return std::visit([](const auto& v) { return v.size(); }, c);
}

std::string format_level(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void CovariateTable::add_column(std::string name, Column values) {
  if (has(name)) throw ValidationError("duplicate covariate column '" + name + "'");
  const auto n = column_size(values);
  if (!names_.empty() && n != rows_)
    throw ValidationError("covariate column '" + name + "' has " + std::to_string(n) +
                          " rows, expected " + std::to_string(rows_));
  rows_ = n;
  names_.push_back(std::move(name));
  columns_.push_back(std::move(values));
}

bool CovariateTable::has(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const CovariateTable::Column& CovariateTable::column(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ValidationError("missing covariate column '" + std::string(name) + "'");
  return columns_[static_cast<std::size_t>(it - names_.begin())];
}

const std::vector<double>& CovariateTable::numeric(std::string_view name) const {
  const auto* v = std::get_if<std::vector<double>>(&column(name));
  if (!v) throw ValidationError("covariate column '" + std::string(name) + "' is not numeric");
  return *v;
}

std::vector<std::string> CovariateTable::factor_levels(std::string_view name) const {
  const auto& col = column(name);
  std::vector<std::string> out;
  if (const auto* num = std::get_if<std::vector<double>>(&col)) {
    std::set<double> vals(num->begin(), num->end());
    for (double v : vals) out.push_back(format_level(v));
  } else {
    const auto& str = std::get<std::vector<std::string>>(col);
    std::set<std::string> vals(str.begin(), str.end());
    out.assign(vals.begin(), vals.end());
  }
  return out;
}

std::string CovariateTable::level_of(std::string_view name, std::size_t i) const {
  const auto& col = column(name);
  if (const auto* num = std::get_if<std::vector<double>>(&col)) return format_level(num->at(i));
  return std::get<std::vector<std::string>>(col).at(i);
}

CovariateTable CovariateTable::subset(const std::vector<std::size_t>& idx) const {
  CovariateTable out;
  for (std::size_t c = 0; c < names_.size(); ++c) {
    std::visit(
        [&](const auto& v) {
          std::remove_cvref_t<decltype(v)> picked;
          picked.reserve(idx.size());
          for (auto i : idx) picked.push_back(v.at(i));
          out.add_column(names_[c], std::move(picked));
        },
        columns_[c]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

std::size_t Dataset::num_cases() const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  auto pick = [&](const MeasurementSlice& s) {
    MeasurementSlice out{s.name, s.quality, s.items, ResponseMatrix(idx.size(), s.items.size())};
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < s.items.size(); ++j) out.data(r, j) = s.data(idx[r], j);
    return out;
  };
  Dataset out;
  for (const auto& s : mbs) out.mbs.push_back(pick(s));
  for (const auto& s : mss) out.mss.push_back(pick(s));
  for (auto i : idx) out.y.push_back(y.at(i));
  out.x = x.subset(idx);
  return out;
}

// ---------------------------------------------------------------------------
// ModelSpec / McmcSettings

bool ModelSpec::uses(Quality q) const {
  return std::find(use_measurements.begin(), use_measurements.end(), q) != use_measurements.end();
}

int ModelSpec::k_for(const std::string& slice) const {
  auto it = k_subclass.find(slice);
  return it == k_subclass.end() ? default_k : it->second;
}

const std::string& ModelSpec::fpr_formula_for(const std::string& slice) const {
  static const std::string kNone = "~ -1";
  auto it = fpr_formula.find(slice);
  return it == fpr_formula.end() ? kNone : it->second;
}

std::vector<double> ModelSpec::dirichlet_prior() const {
  const auto L = cause_list.size();
  if (eti_prior.empty()) return std::vector<double>(L, 1.0);
  if (eti_prior.size() == 1) return std::vector<double>(L, eti_prior[0]);
  if (eti_prior.size() != L)
    throw ValidationError("eti_prior has length " + std::to_string(eti_prior.size()) +
                          "; expected 1 or L=" + std::to_string(L));
  return eti_prior;
}

void McmcSettings::check() const {
  if (n_chains < 1 || n_iter < 1 || n_thin < 1 || n_burnin < 0)
    throw ValidationError("mcmc: n_chains, n_iter, n_thin must be positive and n_burnin >= 0");
  if (n_burnin >= n_iter) throw ValidationError("mcmc: n_burnin must be smaller than n_iter");
}

// ---------------------------------------------------------------------------
// validate_dataset

namespace {

void require_columns(const Formula& f, const CovariateTable& x, const std::string& what) {
  for (const auto& c : f.columns())
    if (!x.has(c))
      throw ValidationError(what + " formula '" + f.text + "' references missing column '" + c + "'");
}

}  // namespace

ValidationReport validate_dataset(const Dataset& d, const ModelSpec& m) {
  ValidationReport rep;
  const auto N = d.num_subjects();
  if (N == 0) throw ValidationError("dataset has no subjects");
  for (int v : d.y)
    if (v != 0 && v != 1) throw ValidationError("y must contain only 0 (control) or 1 (case)");
  if (d.num_cases() == 0) throw ValidationError("dataset has no cases");

  auto check_rows = [&](const MeasurementSlice& s) {
    check_slice(s);
    if (s.data.rows() != N)
      throw ValidationError("slice " + s.name + " has " + std::to_string(s.data.rows()) +
                            " rows; y has " + std::to_string(N));
  };
  for (const auto& s : d.mbs) {
    check_rows(s);
    if (s.quality != Quality::BrS) throw ValidationError("slice " + s.name + " listed as BrS has SS quality");
  }
  for (const auto& s : d.mss) {
    check_rows(s);
    if (s.quality != Quality::SS) throw ValidationError("slice " + s.name + " listed as SS has BrS quality");
    for (std::size_t i = 0; i < N; ++i) {
      if (d.y[i] == 1) continue;
      for (std::size_t j = 0; j < s.num_items(); ++j)
        if (s.data(i, j) == Response::Positive)
          throw ValidationError("SS slice " + s.name + ": control subject " + std::to_string(i) +
                                " is positive on " + s.items[j] +
                                " (SS measurements have perfect specificity)");
    }
  }
  if (!d.x.empty() && d.x.num_rows() != N)
    throw ValidationError("covariate table has " + std::to_string(d.x.num_rows()) + " rows; y has " +
                          std::to_string(N));

  if (m.use_measurements.empty()) throw ValidationError("use_measurements is empty");
  if (m.uses(Quality::BrS) && d.mbs.empty()) throw ValidationError("model uses BrS but the dataset has no BrS slice");
  if (m.uses(Quality::SS) && d.mss.empty()) throw ValidationError("model uses SS but the dataset has no SS slice");
  if (m.cause_list.size() == 0) throw ValidationError("cause list is empty");
  m.dirichlet_prior();

  rep.num_mbs = m.uses(Quality::BrS) ? d.mbs.size() : 0;
  rep.num_mss = m.uses(Quality::SS) ? d.mss.size() : 0;

  const Formula eti = parse_formula(m.eti_formula);
  require_columns(eti, d.x, "Eti");
  rep.do_reg_eti = !eti.is_empty();
  rep.eti_discrete = rep.do_reg_eti && eti.all_discrete();

  for (const auto& [name, _] : m.k_subclass)
    if (std::none_of(d.mbs.begin(), d.mbs.end(), [&](const auto& s) { return s.name == name; }))
      throw ValidationError("k_subclass names unknown BrS slice '" + name + "'");
  for (const auto& [name, _] : m.fpr_formula)
    if (std::none_of(d.mbs.begin(), d.mbs.end(), [&](const auto& s) { return s.name == name; }))
      throw ValidationError("fpr_formula names unknown BrS slice '" + name + "'");
  for (const auto& [name, prior] : m.tpr_prior) {
    const MeasurementSlice* s = nullptr;
    for (const auto& c : d.mbs) if (c.name == name) s = &c;
    for (const auto& c : d.mss) if (c.name == name) s = &c;
    if (!s) throw ValidationError("tpr_prior names unknown slice '" + name + "'");
    const auto n = std::visit([](const auto& v) { return v.size(); }, prior);
    if (n != s->num_items())
      throw ValidationError("tpr_prior for " + name + " has " + std::to_string(n) + " entries; slice has " +
                            std::to_string(s->num_items()) + " items");
  }

  if (m.uses(Quality::BrS)) {
    for (const auto& s : d.mbs) {
      const int K = m.k_for(s.name);
      if (K < 1) throw ValidationError("k_subclass for " + s.name + " must be >= 1");
      rep.nested = rep.nested || K > 1;
      const Formula f = parse_formula(m.fpr_formula_for(s.name));
      require_columns(f, d.x, "FPR");
      rep.do_reg_fpr[s.name] = !f.is_empty();
      rep.fpr_discrete[s.name] = !f.is_empty() && f.all_discrete();
      if (!f.is_empty() && K == 1)
        rep.notes.push_back("FPR formula for " + s.name + " is ignored because K = 1");
    }
  }

  // Every SS-positive case must be explainable by at least one class.
  if (m.uses(Quality::SS)) {
    std::vector<Template> tpl;
    for (const auto& s : d.mss) tpl.push_back(make_template(s.items, m.cause_list, s.name));
    const int L = static_cast<int>(m.cause_list.size());
    for (std::size_t i = 0; i < N; ++i) {
      if (d.y[i] != 1) continue;
      bool any = false;
      for (int l = 1; l <= L && !any; ++l) {
        bool ok = true;
        for (std::size_t s = 0; s < d.mss.size() && ok; ++s)
          for (std::size_t j = 0; j < d.mss[s].num_items() && ok; ++j)
            if (d.mss[s].data(i, j) == Response::Positive && !tpl[s].causative(l, j)) ok = false;
        any = ok;
      }
      if (!any)
        throw DataInconsistency("case " + std::to_string(i) +
                                " has SS positives that no single class in the cause list explains");
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// summarize_slice

SliceSummary summarize_slice(const MeasurementSlice& s, const std::vector<int>& y) {
  if (s.data.rows() != y.size())
    throw ValidationError("summarize_slice: slice " + s.name + " has " + std::to_string(s.data.rows()) +
                          " rows; y has " + std::to_string(y.size()));
  SliceSummary out;
  out.name = s.name;
  out.quality = s.quality;
  out.items = s.items;
  out.n_cases = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  out.n_controls = y.size() - out.n_cases;
  const bool case_only = s.quality == Quality::SS;

  for (std::size_t j = 0; j < s.num_items(); ++j) {
    std::size_t pos[2] = {0, 0}, obs[2] = {0, 0};
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto r = s.data(i, j);
      if (r == Response::Missing) continue;
      const int g = y[i] == 1 ? 1 : 0;
      ++obs[g];
      if (r == Response::Positive) ++pos[g];
    }
    auto rate = [&](int g) -> std::optional<double> {
      if (obs[g] == 0) return std::nullopt;
      return static_cast<double>(pos[g]) / static_cast<double>(obs[g]);
    };
    out.case_rate.push_back(rate(1));
    bool undefined = !out.case_rate.back();
    if (!case_only) {
      out.control_rate.push_back(rate(0));
      undefined = undefined || !out.control_rate.back();
    }
    if (undefined) out.undefined.push_back(s.items[j]);
  }
  return out;
}

}  // namespace nplcm
