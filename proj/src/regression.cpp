#include "nplcm/regression.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "nplcm/error.hpp"
#include "nplcm/stats.hpp"

namespace nplcm {

// ---------------------------------------------------------------------------
// Formula parsing

namespace {

std::string strip(std::string s) {
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  return s;
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

bool is_name(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '.')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '.'; });
}

std::vector<std::string> split_top(const std::string& s, char sep) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

FormulaTerm parse_smooth(const std::string& text, const std::string& args) {
  auto parts = split_top(args, ',');
  if (parts.empty() || !is_name(parts[0]))
    throw ValidationError("smooth term '" + text + "' needs a column name");
  FormulaTerm term{FormulaTerm::Kind::Smooth, parts[0], 0};
  bool basis_ok = false;
  for (std::size_t a = 1; a < parts.size(); ++a) {
    const auto& p = parts[a];
    auto eq = p.find('=');
    if (eq == std::string::npos) {
      if (unquote(p) == "ps") basis_ok = true;
      // other positional arguments (e.g. the case indicator) carry no meaning here
      continue;
    }
    const auto key = p.substr(0, eq);
    const auto val = unquote(p.substr(eq + 1));
    if (key == "basis") {
      if (val != "ps") throw ValidationError("smooth term '" + text + "': only basis 'ps' is supported");
      basis_ok = true;
    } else if (key == "dof") {
      try {
        term.dof = std::stoi(val);
      } catch (const std::exception&) {
        throw ValidationError("smooth term '" + text + "': bad dof '" + val + "'");
      }
    } else {
      throw ValidationError("smooth term '" + text + "': unknown argument '" + key + "'");
    }
  }
  if (!basis_ok) throw ValidationError("smooth term '" + text + "' must declare basis ps");
  if (term.dof < 3) throw ValidationError("smooth term '" + text + "' needs dof >= 3");
  return term;
}

}  // namespace

Formula parse_formula(const std::string& text) {
  Formula f;
  f.text = text;
  const std::string s = strip(text);
  if (s.empty() || s[0] != '~') throw ValidationError("formula '" + text + "' must start with '~'");
  const std::string body = s.substr(1);
  if (body.empty()) throw ValidationError("formula '" + text + "' has no terms");

  // "-1" may be glued to the previous term ("~ a - 1"); normalise to "+-1".
  std::string norm;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '-' && i > 0 && body[i - 1] != '+' && body[i - 1] != '(') norm += '+';
    norm += body[i];
  }
  for (const auto& raw : split_top(norm, '+')) {
    if (raw.empty()) throw ValidationError("formula '" + text + "' has an empty term");
    if (raw == "-1" || raw == "0") {
      f.intercept = false;
      continue;
    }
    if (raw == "1") continue;
    auto open = raw.find('(');
    if (open == std::string::npos) {
      if (!is_name(raw)) throw ValidationError("formula '" + text + "': bad term '" + raw + "'");
      f.terms.push_back({FormulaTerm::Kind::Linear, raw, 0});
      continue;
    }
    if (raw.back() != ')') throw ValidationError("formula '" + text + "': unbalanced term '" + raw + "'");
    const auto fn = raw.substr(0, open);
    const auto args = raw.substr(open + 1, raw.size() - open - 2);
    if (fn == "factor" || fn == "as.factor") {
      if (!is_name(args)) throw ValidationError("formula '" + text + "': bad factor term '" + raw + "'");
      f.terms.push_back({FormulaTerm::Kind::Factor, args, 0});
    } else if (fn == "s" || fn.rfind("s_", 0) == 0) {
      f.terms.push_back(parse_smooth(raw, args));
    } else {
      throw ValidationError("formula '" + text + "': unknown function '" + fn + "'");
    }
  }
  return f;
}

bool Formula::all_discrete() const {
  return !terms.empty() &&
         std::all_of(terms.begin(), terms.end(), [](const auto& t) { return t.kind == FormulaTerm::Kind::Factor; });
}

std::vector<std::string> Formula::columns() const {
  std::vector<std::string> out;
  for (const auto& t : terms) out.push_back(t.column);
  return out;
}

// ---------------------------------------------------------------------------
// B-splines

BSplineBasis::BSplineBasis(double lower, double upper, std::vector<double> interior, int degree)
    : lower_(lower), upper_(upper), interior_(std::move(interior)), degree_(degree) {
  if (degree_ < 1) throw ValidationError("B-spline degree must be >= 1");
  if (!(lower_ < upper_)) throw ValidationError("B-spline boundary knots are degenerate");
  for (std::size_t k = 0; k < interior_.size(); ++k) {
    const double prev = k == 0 ? lower_ : interior_[k - 1];
    if (!(interior_[k] > prev)) throw ValidationError("B-spline knots are degenerate (repeated knot values)");
  }
  if (!interior_.empty() && !(interior_.back() < upper_))
    throw ValidationError("B-spline knots are degenerate (repeated knot values)");
  knots_.assign(static_cast<std::size_t>(degree_ + 1), lower_);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree_ + 1), upper_);
}

BSplineBasis BSplineBasis::from_data(std::span<const double> x, int dof, int degree) {
  if (dof < degree + 1)
    throw ValidationError("B-spline basis of degree " + std::to_string(degree) + " needs dof >= " +
                          std::to_string(degree + 1));
  if (x.empty()) throw ValidationError("B-spline basis needs data");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front(), hi = sorted.back();
  if (!(lo < hi)) throw ValidationError("B-spline knots are degenerate: covariate is constant");
  const int n_interior = dof - degree - 1;
  std::vector<double> interior;
  for (int k = 1; k <= n_interior; ++k)
    interior.push_back(quantile_sorted(sorted, static_cast<double>(k) / (n_interior + 1)));
  return BSplineBasis(lo, hi, std::move(interior), degree);
}

Eigen::VectorXd BSplineBasis::evaluate(double x, bool* clamped) const {
  if (x < lower_ || x > upper_) {
    if (clamped) *clamped = true;
    x = std::clamp(x, lower_, upper_);
  }
  const int n = size();
  const int p = degree_;
  // knot span: knots[mu] <= x < knots[mu+1], with the right end folded in
  int mu = n - 1;
  if (x < upper_) {
    mu = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin()) - 1;
    mu = std::clamp(mu, p, n - 1);
  }
  std::vector<double> N(static_cast<std::size_t>(p + 1), 0.0), left(N.size()), right(N.size());
  N[0] = 1.0;
  for (int d = 1; d <= p; ++d) {
    left[d] = x - knots_[mu + 1 - d];
    right[d] = knots_[mu + d] - x;
    double saved = 0.0;
    for (int r = 0; r < d; ++r) {
      const double denom = right[r + 1] + left[d - r];
      const double tmp = denom > 0 ? N[r] / denom : 0.0;
      N[r] = saved + right[r + 1] * tmp;
      saved = left[d - r] * tmp;
    }
    N[d] = saved;
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (int r = 0; r <= p; ++r) out(mu - p + r) = N[r];
  return out;
}

Eigen::MatrixXd bspline_basis(std::span<const double> x, int dof, int degree) {
  const auto basis = BSplineBasis::from_data(x, dof, degree);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), basis.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = basis.evaluate(x[i]).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Design matrices

std::vector<std::string> DesignMatrix::column_labels() const {
  std::vector<std::string> out;
  for (const auto& b : blocks) out.insert(out.end(), b.labels.begin(), b.labels.end());
  return out;
}

std::vector<std::size_t> DesignMatrix::spline_blocks() const {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    if (blocks[b].kind == DesignBlock::Kind::Spline) out.push_back(b);
  return out;
}

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return {mean, sd > 0 ? sd : 1.0};
}

int spline_degree(int dof) { return std::min(3, dof - 1); }

}  // namespace

DesignEncoder::DesignEncoder(Formula formula, const CovariateTable& training) : formula_(std::move(formula)) {
  bool full_factor_used = formula_.intercept;
  for (const auto& t : formula_.terms) {
    if (!training.has(t.column))
      throw ValidationError("formula '" + formula_.text + "' references missing column '" + t.column + "'");
    TermState st;
    switch (t.kind) {
      case FormulaTerm::Kind::Factor:
        st.levels = training.factor_levels(t.column);
        st.drop_first = full_factor_used;
        full_factor_used = true;
        break;
      case FormulaTerm::Kind::Linear: {
        std::tie(st.mean, st.sd) = mean_sd(training.numeric(t.column));
        break;
      }
      case FormulaTerm::Kind::Smooth: {
        const auto& raw = training.numeric(t.column);
        std::tie(st.mean, st.sd) = mean_sd(raw);
        std::vector<double> z(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) z[i] = (raw[i] - st.mean) / st.sd;
        st.basis = BSplineBasis::from_data(z, t.dof, spline_degree(t.dof));
        break;
      }
    }
    states_.push_back(std::move(st));
  }
}

DesignMatrix DesignEncoder::encode(const CovariateTable& cov, std::size_t rows_if_empty) const {
  DesignMatrix dm;
  const auto N = static_cast<Eigen::Index>(cov.empty() ? rows_if_empty : cov.num_rows());
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index col = 0;
  if (formula_.intercept) {
    dm.blocks.push_back({DesignBlock::Kind::Intercept, "", col, 1, {"(Intercept)"}});
    parts.push_back(Eigen::MatrixXd::Ones(N, 1));
    ++col;
  }
  for (std::size_t k = 0; k < formula_.terms.size(); ++k) {
    const auto& t = formula_.terms[k];
    const auto& st = states_[k];
    DesignBlock block;
    block.column = t.column;
    block.begin = col;
    Eigen::MatrixXd m;
    switch (t.kind) {
      case FormulaTerm::Kind::Factor: {
        block.kind = DesignBlock::Kind::Factor;
        const std::size_t first = st.drop_first ? 1 : 0;
        m = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(st.levels.size() - first));
        for (std::size_t l = first; l < st.levels.size(); ++l) block.labels.push_back(t.column + "=" + st.levels[l]);
        for (Eigen::Index i = 0; i < N; ++i) {
          const auto lev = cov.level_of(t.column, static_cast<std::size_t>(i));
          auto it = std::find(st.levels.begin(), st.levels.end(), lev);
          if (it == st.levels.end())
            throw ValidationError("factor " + t.column + ": unseen level '" + lev + "'");
          const auto idx = static_cast<std::size_t>(it - st.levels.begin());
          if (idx >= first) m(i, static_cast<Eigen::Index>(idx - first)) = 1.0;
        }
        break;
      }
      case FormulaTerm::Kind::Linear: {
        block.kind = DesignBlock::Kind::Linear;
        block.labels.push_back(t.column);
        const auto& v = cov.numeric(t.column);
        m.resize(N, 1);
        for (Eigen::Index i = 0; i < N; ++i) m(i, 0) = (v[static_cast<std::size_t>(i)] - st.mean) / st.sd;
        break;
      }
      case FormulaTerm::Kind::Smooth: {
        block.kind = DesignBlock::Kind::Spline;
        const auto& v = cov.numeric(t.column);
        m.resize(N, st.basis.size());
        for (int b = 0; b < st.basis.size(); ++b)
          block.labels.push_back("s(" + t.column + ")[" + std::to_string(b + 1) + "]");
        for (Eigen::Index i = 0; i < N; ++i)
          m.row(i) = st.basis.evaluate((v[static_cast<std::size_t>(i)] - st.mean) / st.sd, &dm.clamped).transpose();
        break;
      }
    }
    block.size = m.cols();
    col += block.size;
    dm.blocks.push_back(std::move(block));
    parts.push_back(std::move(m));
  }
  dm.x.resize(N, col);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    dm.x.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return dm;
}

DesignMatrix build_design(const Formula& formula, const CovariateTable& covariates, std::size_t rows_if_empty) {
  if (formula.is_empty()) {
    DesignMatrix dm;
    dm.x.resize(static_cast<Eigen::Index>(covariates.empty() ? rows_if_empty : covariates.num_rows()), 0);
    return dm;
  }
  return DesignEncoder(formula, covariates).encode(covariates, rows_if_empty);
}

// ---------------------------------------------------------------------------
// Links

Eigen::VectorXd cscf_weights(const Eigen::Ref<const Eigen::VectorXd>& phi) {
  const double mx = phi.maxCoeff();
  Eigen::VectorXd w = (phi.array() - mx).exp();
  return w / w.sum();
}

Eigen::VectorXd cscf_weights(const Eigen::Ref<const Eigen::RowVectorXd>& design_row,
                             const Eigen::Ref<const Eigen::MatrixXd>& coef) {
  return cscf_weights(Eigen::VectorXd(coef * design_row.transpose()));
}

double log_logistic(double a) { return a >= 0 ? -std::log1p(std::exp(-a)) : a - std::log1p(std::exp(a)); }

double log1m_logistic(double a) { return log_logistic(-a); }

Eigen::VectorXd subclass_weights(std::span<const double> alpha) {
  const auto K = static_cast<Eigen::Index>(alpha.size()) + 1;
  Eigen::VectorXd w(K);
  double remaining = 0.0;  // log of the unbroken stick
  for (Eigen::Index k = 0; k + 1 < K; ++k) {
    w(k) = std::exp(remaining + log_logistic(alpha[static_cast<std::size_t>(k)]));
    remaining += log1m_logistic(alpha[static_cast<std::size_t>(k)]);
  }
  w(K - 1) = std::exp(remaining);
  return w;
}

Eigen::VectorXd stick_predictors(const Eigen::Ref<const Eigen::RowVectorXd>& design_row,
                                 const Eigen::Ref<const Eigen::VectorXd>& mu,
                                 const Eigen::Ref<const Eigen::MatrixXd>& coef) {
  Eigen::VectorXd a = mu;
  if (coef.cols() > 0) a += coef * design_row.transpose();
  return a;
}

double spline_roughness(const Eigen::Ref<const Eigen::VectorXd>& coef, const DesignBlock& block) {
  double ss = 0.0;
  for (Eigen::Index c = block.begin + 1; c < block.begin + block.size; ++c) {
    const double d = coef(c) - coef(c - 1);
    ss += d * d;
  }
  return ss;
}

double coefficient_log_prior(const Eigen::Ref<const Eigen::VectorXd>& coef, const DesignMatrix& design,
                             std::span<const double> tau, const CoefficientPrior& prior) {
  double lp = 0.0;
  const double inv_var = 1.0 / (prior.coef_sd * prior.coef_sd);
  std::size_t spline = 0;
  for (const auto& b : design.blocks) {
    if (b.kind == DesignBlock::Kind::Spline) {
      const double t = tau[spline++];
      lp += -0.5 * coef(b.begin) * coef(b.begin) * inv_var;
      lp += 0.5 * static_cast<double>(b.size - 1) * std::log(t) - 0.5 * t * spline_roughness(coef, b);
    } else {
      lp += -0.5 * coef.segment(b.begin, b.size).squaredNorm() * inv_var;
    }
  }
  return lp;
}

}  // namespace nplcm
