#include "nplcm/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "nplcm/error.hpp"
#include "nplcm/random.hpp"

namespace nplcm {

namespace {

void check_simplex(const std::vector<double>& w, const std::string& what) {
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw ValidationError(what + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-8) throw ValidationError(what + " must sum to 1");
}

void check_simplex(const Eigen::VectorXd& w, const std::string& what) {
  check_simplex(std::vector<double>(w.data(), w.data() + w.size()), what);
}

void check_rates(const Eigen::MatrixXd& m, const std::string& what) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (!(m.data()[i] >= 0.0 && m.data()[i] <= 1.0)) throw ValidationError(what + " entries must lie in [0, 1]");
}

bool is_number(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  return !s.empty() && res.ec == std::errc() && res.ptr == end;
}

Simulation simulate_site(const SimulationRecipe& r, int nd, int nu, const std::vector<double>& etiology, Rng& rng) {
  const std::size_t J = r.pathogen_brs.size();
  const std::size_t Jss = r.pathogen_ss.size();
  const auto N = static_cast<std::size_t>(nd + nu);
  const Template brs_tpl = make_template(r.pathogen_brs, r.cause_list, r.brs_name);
  const bool with_ss = Jss > 0;
  Template ss_tpl;
  if (with_ss) ss_tpl = make_template(r.pathogen_ss, r.cause_list, r.ss_name);

  Simulation out;
  MeasurementSlice brs{r.brs_name, Quality::BrS, r.pathogen_brs, ResponseMatrix(N, J, Response::Negative)};
  MeasurementSlice ss{r.ss_name, Quality::SS, r.pathogen_ss, ResponseMatrix(N, Jss, Response::Missing)};
  out.truth.cls.assign(N, 0);
  out.truth.z.assign(N, 0);
  out.data.y.assign(N, 0);

  const std::span<const double> eta(r.eta.data(), static_cast<std::size_t>(r.eta.size()));
  const std::span<const double> lambda(r.lambda.data(), static_cast<std::size_t>(r.lambda.size()));
  for (std::size_t i = 0; i < N; ++i) {
    const bool is_case = i < static_cast<std::size_t>(nd);
    const int cls = is_case ? 1 + rng.categorical(etiology) : 0;
    const int k = rng.categorical(is_case ? eta : lambda);
    out.data.y[i] = is_case ? 1 : 0;
    out.truth.cls[i] = cls;
    out.truth.z[i] = k;
    for (std::size_t j = 0; j < J; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double p = brs_tpl.causative(cls, j) ? r.theta_bs(jj, k) : r.psi_bs(jj, k);
      brs.data(i, j) = rng.bernoulli(p) ? Response::Positive : Response::Negative;
    }
    if (is_case)
      for (std::size_t j = 0; j < Jss; ++j)
        ss.data(i, j) =
            ss_tpl.causative(cls, j) && rng.bernoulli(r.theta_ss[j]) ? Response::Positive : Response::Negative;
  }
  out.data.mbs.push_back(std::move(brs));
  if (with_ss) out.data.mss.push_back(std::move(ss));
  return out;
}

}  // namespace

void check_recipe(const SimulationRecipe& r) {
  if (r.cause_list.size() == 0) throw ValidationError("recipe: cause_list is empty");
  const auto L = r.cause_list.size();
  const auto J = static_cast<Eigen::Index>(r.pathogen_brs.size());
  if (J == 0) throw ValidationError("recipe: pathogen_brs is empty");
  const Eigen::Index K = r.psi_bs.cols();
  if (K < 1) throw ValidationError("recipe: psi_bs needs at least one subclass column");
  if (r.psi_bs.rows() != J || r.theta_bs.rows() != J || r.theta_bs.cols() != K)
    throw ValidationError("recipe: psi_bs and theta_bs must both be " + std::to_string(J) + " x " +
                          std::to_string(K));
  check_rates(r.psi_bs, "psi_bs");
  check_rates(r.theta_bs, "theta_bs");
  if (r.eta.size() != K || r.lambda.size() != K)
    throw ValidationError("recipe: eta and lambda must have length " + std::to_string(K));
  check_simplex(r.eta, "eta");
  check_simplex(r.lambda, "lambda");
  if (r.theta_ss.size() != r.pathogen_ss.size())
    throw ValidationError("recipe: theta_ss must have one entry per SS item");
  for (double t : r.theta_ss)
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("recipe: theta_ss entries must lie in [0, 1]");
  for (const auto& p : r.pathogen_ss)
    if (std::find(r.pathogen_brs.begin(), r.pathogen_brs.end(), p) == r.pathogen_brs.end())
      throw ValidationError("recipe: SS item " + p + " is not among the BrS items");
  if (r.brs_name == r.ss_name) throw ValidationError("recipe: BrS and SS slice names must differ");

  if (r.strata.empty()) {
    if (r.nd < 1 || r.nu < 0) throw ValidationError("recipe: need nd >= 1 and nu >= 0");
    if (r.etiology.size() != L) throw ValidationError("recipe: etiology must have one entry per cause");
    check_simplex(r.etiology, "etiology");
  } else {
    for (const auto& s : r.strata) {
      if (s.nd < 1 || s.nu < 0) throw ValidationError("recipe: stratum " + s.label + " needs nd >= 1 and nu >= 0");
      if (s.etiology.size() != L)
        throw ValidationError("recipe: stratum " + s.label + " etiology must have one entry per cause");
      check_simplex(s.etiology, "stratum " + s.label + " etiology");
    }
  }
}

Simulation simulate(const SimulationRecipe& recipe) {
  check_recipe(recipe);
  Rng rng(recipe.seed);
  if (recipe.strata.empty()) return simulate_site(recipe, recipe.nd, recipe.nu, recipe.etiology, rng);

  std::vector<Simulation> sites;
  std::vector<Dataset> parts;
  std::vector<std::string> labels;
  for (const auto& s : recipe.strata) {
    sites.push_back(simulate_site(recipe, s.nd, s.nu, s.etiology, rng));
    parts.push_back(sites.back().data);
    labels.push_back(s.label);
  }
  std::vector<std::size_t> order;
  Simulation out;
  out.data = combine_and_reorder(parts, labels, recipe.stratum_column, recipe.case_first, &order);

  std::vector<int> cls, z;
  std::vector<std::string> stratum;
  for (std::size_t p = 0; p < sites.size(); ++p) {
    cls.insert(cls.end(), sites[p].truth.cls.begin(), sites[p].truth.cls.end());
    z.insert(z.end(), sites[p].truth.z.begin(), sites[p].truth.z.end());
    stratum.insert(stratum.end(), sites[p].truth.cls.size(), labels[p]);
  }
  for (std::size_t i : order) {
    out.truth.cls.push_back(cls[i]);
    out.truth.z.push_back(z[i]);
    out.truth.stratum.push_back(stratum[i]);
  }
  return out;
}

Dataset combine_and_reorder(const std::vector<Dataset>& parts, const std::vector<std::string>& labels,
                            const std::string& column, bool case_first, std::vector<std::size_t>* order) {
  if (parts.empty()) throw ValidationError("combine: no datasets given");
  if (labels.size() != parts.size()) throw ValidationError("combine: one label per dataset is required");

  const Dataset& first = parts.front();
  auto same_schema = [](const std::vector<MeasurementSlice>& a, const std::vector<MeasurementSlice>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t s = 0; s < a.size(); ++s)
      if (a[s].name != b[s].name || a[s].items != b[s].items || a[s].quality != b[s].quality) return false;
    return true;
  };
  for (const auto& d : parts)
    if (!same_schema(d.mbs, first.mbs) || !same_schema(d.mss, first.mss) || d.x.names() != first.x.names())
      throw ValidationError("combine: datasets have different measurement or covariate schemas");
  if (first.x.has(column)) throw ValidationError("combine: covariate " + column + " already exists");

  std::size_t N = 0;
  for (const auto& d : parts) N += d.num_subjects();

  Dataset all;
  auto stack = [&](const std::vector<MeasurementSlice>& proto, auto member) {
    std::vector<MeasurementSlice> out;
    for (std::size_t s = 0; s < proto.size(); ++s) {
      MeasurementSlice m{proto[s].name, proto[s].quality, proto[s].items,
                         ResponseMatrix(N, proto[s].num_items(), Response::Missing)};
      std::size_t row = 0;
      for (const auto& d : parts) {
        const auto& src = (d.*member)[s].data;
        for (std::size_t i = 0; i < d.num_subjects(); ++i, ++row)
          for (std::size_t j = 0; j < m.num_items(); ++j) m.data(row, j) = src(i, j);
      }
      out.push_back(std::move(m));
    }
    return out;
  };
  all.mbs = stack(first.mbs, &Dataset::mbs);
  all.mss = stack(first.mss, &Dataset::mss);
  for (const auto& d : parts) all.y.insert(all.y.end(), d.y.begin(), d.y.end());

  for (const auto& name : first.x.names()) {
    const auto& proto = first.x.column(name);
    if (std::holds_alternative<std::vector<double>>(proto)) {
      std::vector<double> v;
      for (const auto& d : parts) {
        const auto& c = std::get<std::vector<double>>(d.x.column(name));
        v.insert(v.end(), c.begin(), c.end());
      }
      all.x.add_column(name, std::move(v));
    } else {
      std::vector<std::string> v;
      for (const auto& d : parts) {
        const auto* c = std::get_if<std::vector<std::string>>(&d.x.column(name));
        if (!c) throw ValidationError("combine: covariate " + name + " changes type across datasets");
        v.insert(v.end(), c->begin(), c->end());
      }
      all.x.add_column(name, std::move(v));
    }
  }
  const bool numeric = std::all_of(labels.begin(), labels.end(), is_number);
  if (numeric) {
    std::vector<double> v;
    for (std::size_t p = 0; p < parts.size(); ++p) v.insert(v.end(), parts[p].num_subjects(), std::stod(labels[p]));
    all.x.add_column(column, std::move(v));
  } else {
    std::vector<std::string> v;
    for (std::size_t p = 0; p < parts.size(); ++p) v.insert(v.end(), parts[p].num_subjects(), labels[p]);
    all.x.add_column(column, std::move(v));
  }

  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (case_first)
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return all.y[a] > all.y[b]; });
  if (order) *order = idx;
  return case_first ? all.subset(idx) : all;
}

}  // namespace nplcm
