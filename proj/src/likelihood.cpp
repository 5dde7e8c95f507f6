#include "nplcm/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nplcm/error.hpp"
#include "nplcm/model.hpp"
#include "nplcm/stats.hpp"

namespace nplcm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

double bernoulli_log(Response r, double p) {
  if (r == Response::Missing) return 0.0;
  if (r == Response::Positive) return p > 0.0 ? std::log(p) : kNegInf;
  return p < 1.0 ? std::log1p(-p) : kNegInf;
}

void check_class(const CompiledModel& model, std::size_t i, int cls) {
  if (i >= model.data.num_subjects()) throw Error("subject index out of range");
  if (cls < 0 || cls > model.num_classes) throw Error("class index out of range");
  if (model.is_case(i) && cls == 0) throw Error("class 0 is reserved for controls");
  if (!model.is_case(i) && cls != 0) throw Error("controls must have class 0");
}

}  // namespace

double response_prob_brs(const CompiledModel& model, const MeasurementParams& params, std::size_t s,
                         std::size_t j, int k, int cls) {
  if (s >= model.brs.size()) throw Error("BrS slice index out of range");
  const auto& sm = model.brs[s];
  if (j >= sm.num_items() || k < 0 || k >= sm.k || cls < 0 || cls > model.num_classes)
    throw Error("response_prob: index out of range");
  const auto& r = params.brs[s];
  const auto jj = static_cast<Eigen::Index>(j);
  return clamp_prob(sm.tpl.causative(cls, j) ? r.theta(jj, k) : r.psi(jj, k));
}

double response_prob_ss(const CompiledModel& model, const MeasurementParams& params, std::size_t s,
                        std::size_t j, int cls) {
  if (s >= model.ss.size()) throw Error("SS slice index out of range");
  const auto& sm = model.ss[s];
  if (j >= sm.tpl.num_items() || cls < 0 || cls > model.num_classes)
    throw Error("response_prob: index out of range");
  return sm.tpl.causative(cls, j) ? clamp_prob(params.ss[s](static_cast<Eigen::Index>(j))) : 0.0;
}

double slice_loglik(const CompiledModel& model, const MeasurementParams& params, std::size_t s,
                    std::size_t i, int cls, int k) {
  const auto& sm = model.brs[s];
  const auto& data = model.brs_data(s).data;
  const auto& r = params.brs[s];
  double ll = 0.0;
  for (std::size_t j = 0; j < sm.num_items(); ++j) {
    const Response m = data(i, j);
    if (m == Response::Missing) continue;
    const auto jj = static_cast<Eigen::Index>(j);
    const double p = clamp_prob(sm.tpl.causative(cls, j) ? r.theta(jj, k) : r.psi(jj, k));
    ll += bernoulli_log(m, p);
  }
  return ll;
}

double ss_loglik(const CompiledModel& model, const MeasurementParams& params, std::size_t i, int cls) {
  if (!model.is_case(i)) return 0.0;
  double ll = 0.0;
  for (std::size_t s = 0; s < model.ss.size(); ++s) {
    const auto& sm = model.ss[s];
    const auto& data = model.ss_data(s).data;
    for (std::size_t j = 0; j < sm.tpl.num_items(); ++j) {
      const Response m = data(i, j);
      if (m == Response::Missing) continue;
      const double p =
          sm.tpl.causative(cls, j) ? clamp_prob(params.ss[s](static_cast<Eigen::Index>(j))) : 0.0;
      ll += bernoulli_log(m, p);
    }
  }
  return ll;
}

double subject_loglik(const CompiledModel& model, const MeasurementParams& params, std::size_t i, int cls,
                      std::span<const int> ks) {
  check_class(model, i, cls);
  if (ks.size() != model.brs.size()) throw Error("subject_loglik: one subclass per BrS slice is required");
  double ll = ss_loglik(model, params, i, cls);
  if (ll == kNegInf) return ll;
  for (std::size_t s = 0; s < model.brs.size(); ++s) ll += slice_loglik(model, params, s, i, cls, ks[s]);
  return ll;
}

double subject_loglik(const CompiledModel& model, const MeasurementParams& params, std::size_t i, int cls,
                      int k) {
  std::vector<int> ks(model.brs.size(), k);
  return subject_loglik(model, params, i, cls, ks);
}

double subject_marginal_loglik(const CompiledModel& model, const MeasurementParams& params,
                               const MixingWeights& weights, std::size_t i) {
  // BrS slices have independent subclass indicators, so each slice's subclass
  // sum factorizes inside the class sum.
  auto slice_term = [&](std::size_t s, int cls) {
    const Eigen::RowVectorXd w =
        MixingWeights::row(model.is_case(i) ? weights.eta[s] : weights.nu[s], i);
    std::vector<double> terms(static_cast<std::size_t>(model.brs[s].k));
    for (int k = 0; k < model.brs[s].k; ++k)
      terms[static_cast<std::size_t>(k)] = std::log(w(k)) + slice_loglik(model, params, s, i, cls, k);
    return log_sum_exp(terms);
  };

  if (!model.is_case(i)) {
    double ll = 0.0;
    for (std::size_t s = 0; s < model.brs.size(); ++s) ll += slice_term(s, 0);
    return ll;
  }
  const Eigen::RowVectorXd pi = MixingWeights::row(weights.pi, i);
  std::vector<double> per_class(static_cast<std::size_t>(model.num_classes));
  for (int l = 1; l <= model.num_classes; ++l) {
    double t = std::log(pi(l - 1)) + ss_loglik(model, params, i, l);
    if (t != kNegInf)
      for (std::size_t s = 0; s < model.brs.size(); ++s) t += slice_term(s, l);
    per_class[static_cast<std::size_t>(l - 1)] = t;
  }
  return log_sum_exp(per_class);
}

double marginal_loglik(const CompiledModel& model, const MeasurementParams& params,
                       const MixingWeights& weights) {
  double ll = 0.0;
  for (std::size_t i = 0; i < model.data.num_subjects(); ++i)
    ll += subject_marginal_loglik(model, params, weights, i);
  return ll;
}

}  // namespace nplcm
