// nplcm command-line interface: simulate, fit, summarize, check, predict.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
// NPLCM_OUT_ROOT supplies the output location when --out is omitted.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nplcm/core.hpp"
#include "nplcm/datagen.hpp"
#include "nplcm/error.hpp"
#include "nplcm/io.hpp"
#include "nplcm/posterior.hpp"
#include "nplcm/sampler.hpp"

namespace fs = std::filesystem;
using namespace nplcm;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

fs::path out_or_default(const std::string& out, const std::string& fallback_name) {
  if (!out.empty()) return out;
  const char* root = std::getenv("NPLCM_OUT_ROOT");
  if (!root || !*root) throw ValidationError("--out not given and NPLCM_OUT_ROOT is not set");
  return fs::path(root) / fallback_name;
}

std::string fmt(double v, const char* spec = "%.8g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string yes_no(bool b) { return b ? "TRUE" : "FALSE"; }

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << text;
  out.close();
  if (!out) throw Error("cannot write " + p.string());
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string recipe, out;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
  SimulationRecipe r = recipe_from_json(read_json(a.recipe));
  if (a.seed) r.seed = *a.seed;
  const Simulation sim = simulate(r);
  const fs::path out = out_or_default(a.out, "simulated.json");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, dataset_to_json(sim.data));
  fs::path truth = out;
  truth.replace_extension(".truth.json");
  write_json(truth, truth_to_json(sim.truth));
  std::cout << "simulated " << sim.data.num_cases() << " cases and " << sim.data.num_controls() << " controls -> "
            << out.string() << "\n";
  return kOk;
}

// ---- fit -------------------------------------------------------------------

struct FitArgs {
  std::string data, model, mcmc, out;
};

int cmd_fit(const FitArgs& a) {
  const Dataset data = dataset_from_json(read_json(a.data));
  const ModelSpec spec = model_from_json(read_json(a.model));
  McmcSettings mcmc = mcmc_from_json(read_json(a.mcmc));
  if (!a.out.empty() || mcmc.out_dir.empty())
    mcmc.out_dir = out_or_default(a.out, "fit_" + spec_hash(spec) + "_seed" + std::to_string(mcmc.seed)).string();

  const PosteriorRun run = nplcm::run(data, spec, mcmc);
  const CscfSummary s = summarize_cscf(run);
  std::ostringstream head;
  head << "fit complete: " << run.chains.size() << " chain(s) x " << mcmc.retained() << " draws; "
       << (s.regression ? "marginal " : "") << "CSCF means";
  for (const auto& r : s.overall.rows) head << ' ' << r.label << '=' << fmt(r.mean, "%.3f");
  std::cout << head.str() << " -> " << mcmc.out_dir << "\n";
  return kOk;
}

// ---- summarize -------------------------------------------------------------

struct SummarizeArgs {
  std::string fit, out, stratum;
  std::vector<double> weights;
  bool show_levels = false;
  bool diagnostics = false;
};

std::string structure_block(const PosteriorRun& run) {
  std::ostringstream o;
  const auto& rep = run.report;
  std::vector<std::string> names, counts;
  if (run.spec.uses(Quality::BrS)) {
    names.push_back("MBS");
    counts.push_back(std::to_string(run.data.mbs.size()));
  }
  if (run.spec.uses(Quality::SS)) {
    names.push_back("MSS");
    counts.push_back(std::to_string(run.data.mss.size()));
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += x + " ";
    return s;
  };
  std::vector<std::string> fpr_names, fpr_reg, fpr_disc;
  for (const auto& [slice, reg] : rep.do_reg_fpr) {
    fpr_names.push_back(slice);
    fpr_reg.push_back(yes_no(reg));
    fpr_disc.push_back(yes_no(rep.fpr_discrete.at(slice)));
  }
  o << "[nplcm] summary: model structure \n"
    << "           fitted type:  " << fitted_type(rep) << " \n"
    << "---\n"
    << "     name measurements:  " << join(names) << "\n"
    << "slices of measurements:  " << join(counts) << "\n"
    << "                nested:  " << yes_no(rep.nested) << " \n"
    << "---\n"
    << "            regression:  \n"
    << "                  etiology:  " << yes_no(rep.do_reg_eti) << " \n"
    << "                  name FPR:  " << join(fpr_names) << "\n"
    << "                       FPR:  " << join(fpr_reg) << "\n"
    << "---\n"
    << "all discrete predictor:  \n"
    << "                  etiology:  " << yes_no(rep.eti_discrete) << " \n"
    << "                  name FPR:  " << join(fpr_names) << "\n"
    << "                       FPR:  " << join(fpr_disc) << "\n";
  return o.str();
}

std::string cscf_table(const CscfTable& t) {
  std::size_t w = 1;
  for (const auto& r : t.rows) w = std::max(w, r.label.size());
  std::ostringstream o;
  o << std::string(w, ' ') << "    post.mean      post.sd      CrI_025     CrI_0975\n";
  char buf[160];
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof buf, "%-*s %12.8f %12.8f %12.8f %12.8f\n", static_cast<int>(w), r.label.c_str(), r.mean,
                  r.sd, r.q025, r.q975);
    o << buf;
  }
  return o.str();
}

Json table_json(const CscfTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"cause", r.label}, {"post.mean", r.mean}, {"post.sd", r.sd}, {"CrI_025", r.q025}, {"CrI_0975", r.q975}});
  return Json{{"stratum", t.stratum}, {"weight", t.weight}, {"rows", rows}};
}

int cmd_summarize(const SummarizeArgs& a) {
  const PosteriorRun run = load_run(a.fit);
  std::optional<std::vector<double>> weights;
  if (!a.weights.empty()) weights = a.weights;
  const CscfSummary s = summarize_cscf(run, weights);

  if (!a.stratum.empty() && !s.regression)
    throw ValidationError("--stratum applies only to fits with CSCF regression");
  if (!a.stratum.empty()) {
    bool found = false;
    for (const auto& t : s.strata) found = found || t.stratum == a.stratum;
    if (!found) throw ValidationError("unknown stratum '" + a.stratum + "' (see --show-levels)");
  }

  std::ostringstream o;
  o << structure_block(run) << " \n------- posterior summary -----------\n";
  if (!s.regression) {
    o << cscf_table(s.overall);
  } else {
    if (a.show_levels) {
      o << "strata (weight):\n";
      for (const auto& t : s.strata) o << "  " << t.stratum << " (" << fmt(t.weight, "%.4f") << ")\n";
    }
    for (const auto& t : s.strata) {
      if (!a.stratum.empty() && t.stratum != a.stratum) continue;
      o << "stratum " << t.stratum << ":\n" << cscf_table(t);
    }
    if (a.stratum.empty()) o << "marginal (weighted over strata):\n" << cscf_table(s.overall);
  }

  std::vector<ConvergenceRow> conv;
  if (a.diagnostics) {
    conv = convergence(run);
    o << "\n------- convergence -----------\n";
    for (const auto& c : conv)
      o << c.name << "  Rhat=" << fmt(c.rhat, "%.4f") << "  ESS=" << fmt(c.ess, "%.1f") << (c.flagged ? "  *" : "")
        << "\n";
  }
  std::cout << o.str();

  if (!a.out.empty()) {
    const fs::path dir = a.out;
    fs::create_directories(dir);
    Json doc{{"fitted_type", fitted_type(run.report)}, {"regression", s.regression}};
    Json strata = Json::array();
    for (const auto& t : s.strata) strata.push_back(table_json(t));
    doc["strata"] = strata;
    doc["overall"] = table_json(s.overall);
    write_json(dir / "summary.json", doc);

    std::ostringstream csv;
    csv << "stratum,cause,post.mean,post.sd,CrI_025,CrI_0975\n";
    auto put = [&](const CscfTable& t) {
      for (const auto& r : t.rows)
        csv << t.stratum << ',' << r.label << ',' << format_double(r.mean) << ',' << format_double(r.sd) << ','
            << format_double(r.q025) << ',' << format_double(r.q975) << '\n';
    };
    for (const auto& t : s.strata) put(t);
    put(s.overall);
    write_text(dir / "cscf_summary.csv", csv.str());

    if (a.diagnostics) {
      std::ostringstream d;
      d << "name,rhat,ess,flagged\n";
      for (const auto& c : conv)
        d << c.name << ',' << format_double(c.rhat) << ',' << format_double(c.ess) << ',' << (c.flagged ? 1 : 0) << '\n';
      write_text(dir / "convergence.csv", d.str());
    }
  }
  return kOk;
}

// ---- check -----------------------------------------------------------------

struct CheckArgs {
  std::string fit, stat = "slord", slice, out;
  int npat = 5;
};

std::vector<std::string> brs_items(const PosteriorRun& run, const std::string& slice) {
  for (const auto& s : run.data.mbs)
    if (s.name == slice) return s.items;
  return {};
}

int cmd_check(const CheckArgs& a) {
  const PosteriorRun run = load_run(a.fit);
  std::string slice = a.slice;
  if (slice.empty()) {
    if (run.data.mbs.empty()) throw ValidationError("run has no BrS slices");
    slice = run.data.mbs.front().name;
  }
  std::ostringstream table, csv;
  char buf[256];
  if (a.stat == "slord") {
    const SlordTable t = ppc_slord(run, slice);
    table << "SLORD for slice " << slice << " (observed - mean(replicated)) / sd(replicated)\n";
    std::snprintf(buf, sizeof buf, "%-8s %-10s %-10s %10s %10s %10s %8s\n", "group", "item_a", "item_b", "observed",
                  "rep.mean", "rep.sd", "slord");
    table << buf;
    csv << "slice,group,item_a,item_b,observed,rep_mean,rep_sd,slord\n";
    for (const auto& r : t.rows) {
      std::snprintf(buf, sizeof buf, "%-8s %-10s %-10s %10.4f %10.4f %10.4f %8.3f\n", r.group.c_str(),
                    r.item_a.c_str(), r.item_b.c_str(), r.observed, r.rep_mean, r.rep_sd, r.slord);
      table << buf;
      csv << slice << ',' << r.group << ',' << r.item_a << ',' << r.item_b << ',' << format_double(r.observed) << ','
          << format_double(r.rep_mean) << ',' << format_double(r.rep_sd) << ',' << format_double(r.slord) << '\n';
    }
    for (const auto& o : t.omitted) table << "omitted (constant item): " << o << "\n";
  } else if (a.stat == "patterns") {
    const PatternTable t = ppc_top_patterns(run, slice, a.npat);
    table << "top " << a.npat << " patterns for slice " << slice << " (items:";
    for (const auto& it : brs_items(run, slice)) table << ' ' << it;
    table << ")\n";
    std::snprintf(buf, sizeof buf, "%-8s %-16s %9s %9s %9s %9s %7s\n", "group", "pattern", "observed", "rep.mean",
                  "rep.2.5%", "rep.97.5%", "inside");
    table << buf;
    csv << "slice,group,pattern,kind,value\n";
    for (const auto& r : t.rows) {
      std::snprintf(buf, sizeof buf, "%-8s %-16s %9.4f %9.4f %9.4f %9.4f %7s\n", r.group.c_str(), r.pattern.c_str(),
                    r.observed, r.rep_mean, r.rep_q025, r.rep_q975, r.inside ? "yes" : "no");
      table << buf;
      csv << slice << ',' << r.group << ',' << r.pattern << ",observed," << format_double(r.observed) << '\n';
      for (double v : r.replicated)
        csv << slice << ',' << r.group << ',' << r.pattern << ",replicated," << format_double(v) << '\n';
    }
    table << "incomplete rows excluded: control " << t.incomplete[0] << ", case " << t.incomplete[1] << "\n";
    for (const auto& n : t.notes) table << "note: " << n << "\n";
  } else {
    throw ValidationError("--stat must be slord or patterns");
  }
  std::cout << table.str();
  if (!a.out.empty()) write_text(fs::path(a.out) / ("ppc_" + a.stat + "_" + slice + ".csv"), csv.str());
  return kOk;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string fit, out;
};

int cmd_predict(const PredictArgs& a) {
  const PosteriorRun run = load_run(a.fit);
  const IndividualPrediction p = individual_predictions(run);
  std::ostringstream csv;
  csv << "subject";
  for (const auto& c : run.spec.cause_list.labels()) csv << ',' << c;
  csv << '\n';
  for (Eigen::Index r = 0; r < p.probs.rows(); ++r) {
    csv << p.subjects[static_cast<std::size_t>(r)] + 1;
    for (Eigen::Index l = 0; l < p.probs.cols(); ++l) csv << ',' << fmt(p.probs(r, l), "%.6g");
    csv << '\n';
  }
  if (a.out.empty()) std::cout << csv.str();
  else {
    write_text(a.out, csv.str());
    std::cout << "wrote " << p.probs.rows() << " case predictions -> " << a.out << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested partially-latent class models for case-control etiology"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a dataset from a recipe document");
  s->add_option("--recipe", sim.recipe, "Recipe JSON")->required();
  s->add_option("--out", sim.out, "Output dataset JSON (truth goes to <stem>.truth.json)");
  s->add_option("--seed", sim.seed, "Override the recipe seed");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit a model and persist the run");
  f->add_option("--data", fit.data, "Dataset JSON")->required();
  f->add_option("--model", fit.model, "Model definition JSON")->required();
  f->add_option("--mcmc", fit.mcmc, "MCMC settings JSON")->required();
  f->add_option("--out", fit.out, "Run directory");

  SummarizeArgs sum;
  auto* m = app.add_subcommand("summarize", "Print the model structure and CSCF posterior table");
  m->add_option("--fit", sum.fit, "Run directory")->required();
  m->add_option("--weights", sum.weights, "Stratum weights for the marginal table")->delimiter(',');
  m->add_flag("--show-levels", sum.show_levels, "List strata and their weights");
  m->add_option("--stratum", sum.stratum, "Only print this stratum");
  m->add_flag("--diagnostics", sum.diagnostics, "Also report split R-hat and ESS");
  m->add_option("--out", sum.out, "Directory for summary.json and CSV tables");

  CheckArgs chk;
  auto* c = app.add_subcommand("check", "Posterior predictive checks");
  c->add_option("--fit", chk.fit, "Run directory")->required();
  c->add_option("--stat", chk.stat, "slord or patterns")->check(CLI::IsMember({"slord", "patterns"}));
  c->add_option("--slice", chk.slice, "BrS slice (default: first)");
  c->add_option("--npat", chk.npat, "Number of top patterns")->check(CLI::PositiveNumber);
  c->add_option("--out", chk.out, "Directory for long-format CSV output");

  PredictArgs pred;
  auto* p = app.add_subcommand("predict", "Per-case class membership probabilities");
  p->add_option("--fit", pred.fit, "Run directory")->required();
  p->add_option("--out", pred.out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*f) return cmd_fit(fit);
    if (*m) return cmd_summarize(sum);
    if (*c) return cmd_check(chk);
    if (*p) return cmd_predict(pred);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataInconsistency& e) {
    std::cerr << "error: data inconsistency: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
