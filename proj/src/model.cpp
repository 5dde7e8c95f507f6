#include "nplcm/model.hpp"

#include <map>
#include <utility>

#include "nplcm/error.hpp"
#include "nplcm/priors.hpp"

namespace nplcm {

namespace {

std::vector<BetaPair> resolve_tpr(const ModelSpec& spec, const MeasurementSlice& slice,
                                  std::map<std::pair<double, double>, BetaPair>& cache) {
  auto it = spec.tpr_prior.find(slice.name);
  if (it == spec.tpr_prior.end()) return std::vector<BetaPair>(slice.num_items(), BetaPair{});
  if (const auto* pairs = std::get_if<std::vector<BetaPair>>(&it->second)) {
    for (const auto& p : *pairs)
      if (!(p.a > 0 && p.b > 0)) throw ValidationError("tpr_prior for " + slice.name + " has non-positive Beta parameters");
    return *pairs;
  }
  std::vector<BetaPair> out;
  for (const auto& r : std::get<std::vector<BetaRange>>(it->second)) {
    const auto key = std::make_pair(r.low, r.up);
    auto hit = cache.find(key);
    if (hit == cache.end()) hit = cache.emplace(key, beta_from_range(r)).first;
    out.push_back(hit->second);
  }
  return out;
}

}  // namespace

CompiledModel compile_model(Dataset data, ModelSpec spec) {
  CompiledModel m;
  m.report = validate_dataset(data, spec);
  m.data = std::move(data);
  m.spec = std::move(spec);
  m.num_classes = static_cast<int>(m.spec.cause_list.size());

  std::map<std::pair<double, double>, BetaPair> cache;
  if (m.spec.uses(Quality::BrS)) {
    for (std::size_t s = 0; s < m.data.mbs.size(); ++s) {
      const auto& slice = m.data.mbs[s];
      BrsSliceModel sm;
      sm.data_index = s;
      sm.tpl = make_template(slice.items, m.spec.cause_list, slice.name);
      sm.k = m.spec.k_for(slice.name);
      sm.tpr_prior = resolve_tpr(m.spec, slice, cache);
      sm.fpr_prior.assign(slice.num_items(), BetaPair{});
      sm.fpr_formula = parse_formula(m.spec.fpr_formula_for(slice.name));
      sm.regression = sm.k > 1 && !sm.fpr_formula.is_empty();
      if (sm.regression) sm.fpr_design = build_design(sm.fpr_formula, m.data.x, m.data.num_subjects());
      m.brs.push_back(std::move(sm));
    }
  }
  if (m.spec.uses(Quality::SS)) {
    for (std::size_t s = 0; s < m.data.mss.size(); ++s) {
      const auto& slice = m.data.mss[s];
      SsSliceModel sm;
      sm.data_index = s;
      sm.tpl = make_template(slice.items, m.spec.cause_list, slice.name);
      sm.tpr_prior = resolve_tpr(m.spec, slice, cache);
      m.ss.push_back(std::move(sm));
    }
  }

  m.eti_formula = parse_formula(m.spec.eti_formula);
  m.eti_regression = !m.eti_formula.is_empty();
  if (m.eti_regression) m.eti_design = build_design(m.eti_formula, m.data.x, m.data.num_subjects());
  m.eti_dirichlet = m.spec.dirichlet_prior();

  for (std::size_t i = 0; i < m.data.num_subjects(); ++i)
    (m.is_case(i) ? m.cases : m.controls).push_back(i);
  return m;
}

Eigen::VectorXd class_weights(const CompiledModel& model, const ParameterState& state, std::size_t i) {
  if (!model.eti_regression) return state.pi;
  return cscf_weights(model.eti_design.x.row(static_cast<Eigen::Index>(i)), state.eti_coef);
}

Eigen::VectorXd arm_weights(const CompiledModel& model, const ParameterState& state, std::size_t s, std::size_t i,
                            bool case_arm) {
  const auto& sm = model.brs[s];
  if (sm.k == 1) return Eigen::VectorXd::Ones(1);
  const auto& st = state.sticks[s];
  if (!sm.regression) {
    const auto& v = case_arm ? st.v_case : st.v_control;
    return stick_weights(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  }
  const Eigen::VectorXd a = stick_predictors(sm.fpr_design.x.row(static_cast<Eigen::Index>(i)), st.mu,
                                             case_arm ? st.coef_case : st.coef_control);
  return subclass_weights(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
}

Eigen::VectorXd subclass_weights_for(const CompiledModel& model, const ParameterState& state, std::size_t s,
                                     std::size_t i) {
  return arm_weights(model, state, s, i, model.is_case(i));
}

MixingWeights mixing_weights(const CompiledModel& model, const ParameterState& state) {
  const auto N = static_cast<Eigen::Index>(model.data.num_subjects());
  MixingWeights w;
  w.pi.resize(N, model.num_classes);
  for (Eigen::Index i = 0; i < N; ++i) w.pi.row(i) = class_weights(model, state, static_cast<std::size_t>(i)).transpose();
  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    Eigen::MatrixXd eta(N, model.brs[s].k), nu(N, model.brs[s].k);
    for (Eigen::Index i = 0; i < N; ++i) {
      eta.row(i) = arm_weights(model, state, s, static_cast<std::size_t>(i), true).transpose();
      nu.row(i) = arm_weights(model, state, s, static_cast<std::size_t>(i), false).transpose();
    }
    w.eta.push_back(std::move(eta));
    w.nu.push_back(std::move(nu));
  }
  return w;
}

}  // namespace nplcm
