#include "nplcm/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "nplcm/error.hpp"
#include "nplcm/ppc_stats.hpp"
#include "nplcm/stats.hpp"

namespace nplcm {

namespace fs = std::filesystem;

namespace {

void check_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

const Json& required(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing required key '" + key + "'");
  return obj.at(key);
}

template <class T>
T get_as(const Json& v, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

std::vector<double> number_list(const Json& v, const std::string& where) {
  if (v.is_number()) return {v.get<double>()};
  return get_as<std::vector<double>>(v, where);
}

Eigen::MatrixXd matrix_from(const Json& v, const std::string& where) {
  const auto rows = get_as<std::vector<std::vector<double>>>(v, where);
  if (rows.empty()) throw ValidationError(where + ": empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw ValidationError(where + ": ragged matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

Json matrix_to(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

MeasurementSlice slice_from_json(const Json& doc, Quality q, const std::string& where) {
  check_keys(doc, {"name", "items", "data"}, where);
  MeasurementSlice s;
  s.name = get_as<std::string>(required(doc, "name", where), where + ".name");
  s.quality = q;
  s.items = get_as<std::vector<std::string>>(required(doc, "items", where), where + ".items");
  const Json& rows = required(doc, "data", where);
  if (!rows.is_array()) throw ValidationError(where + ".data: expected an array of rows");
  s.data = ResponseMatrix(rows.size(), s.items.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Json& row = rows[i];
    if (!row.is_array() || row.size() != s.items.size())
      throw ValidationError(where + ".data row " + std::to_string(i + 1) + ": expected " +
                            std::to_string(s.items.size()) + " entries");
    for (std::size_t j = 0; j < row.size(); ++j) {
      const Json& v = row[j];
      if (v.is_null()) continue;
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
        throw ValidationError(where + ".data row " + std::to_string(i + 1) + ": entries must be 0, 1 or null");
      s.data(i, j) = v.get<int>() == 1 ? Response::Positive : Response::Negative;
    }
  }
  check_slice(s);
  return s;
}

Json slice_to_json(const MeasurementSlice& s) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < s.data.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < s.data.cols(); ++j) {
      const Response r = s.data(i, j);
      if (r == Response::Missing) row.push_back(nullptr);
      else row.push_back(r == Response::Positive ? 1 : 0);
    }
    rows.push_back(std::move(row));
  }
  return Json{{"name", s.name}, {"items", s.items}, {"data", std::move(rows)}};
}

Quality quality_from(const std::string& s, const std::string& where) {
  if (s == "BrS") return Quality::BrS;
  if (s == "SS") return Quality::SS;
  throw ValidationError(where + ": unknown measurement quality '" + s + "' (expected BrS or SS)");
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw ValidationError("unreadable number '" + s + "'");
  return v;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) throw Error("write failure on " + p.string());
}

}  // namespace

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const Json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  close_out(out, path);
}

Dataset dataset_from_json(const Json& doc) {
  check_keys(doc, {"mobs", "y", "x"}, "data");
  Dataset d;
  const Json& mobs = required(doc, "mobs", "data");
  check_keys(mobs, {"mbs", "mss"}, "data.mobs");
  if (mobs.contains("mbs"))
    for (std::size_t s = 0; s < mobs["mbs"].size(); ++s)
      d.mbs.push_back(slice_from_json(mobs["mbs"][s], Quality::BrS, "data.mobs.mbs[" + std::to_string(s) + "]"));
  if (mobs.contains("mss"))
    for (std::size_t s = 0; s < mobs["mss"].size(); ++s)
      d.mss.push_back(slice_from_json(mobs["mss"][s], Quality::SS, "data.mobs.mss[" + std::to_string(s) + "]"));
  d.y = get_as<std::vector<int>>(required(doc, "y", "data"), "data.y");
  if (doc.contains("x")) {
    const Json& x = doc["x"];
    if (!x.is_object()) throw ValidationError("data.x: expected an object of columns");
    for (const auto& [name, col] : x.items()) {
      if (!col.is_array()) throw ValidationError("data.x." + name + ": expected an array");
      bool all_num = true, all_str = true;
      for (const auto& v : col) {
        all_num = all_num && v.is_number();
        all_str = all_str && v.is_string();
      }
      if (all_num) d.x.add_column(name, col.get<std::vector<double>>());
      else if (all_str) d.x.add_column(name, col.get<std::vector<std::string>>());
      else throw ValidationError("data.x." + name + ": values must be all numbers or all strings");
    }
  }
  return d;
}

Json dataset_to_json(const Dataset& d) {
  Json mbs = Json::array(), mss = Json::array();
  for (const auto& s : d.mbs) mbs.push_back(slice_to_json(s));
  for (const auto& s : d.mss) mss.push_back(slice_to_json(s));
  Json x = Json::object();
  for (const auto& name : d.x.names()) {
    const auto& col = d.x.column(name);
    if (const auto* v = std::get_if<std::vector<double>>(&col)) x[name] = *v;
    else x[name] = std::get<std::vector<std::string>>(col);
  }
  return Json{{"mobs", {{"mbs", mbs}, {"mss", mss}}}, {"y", d.y}, {"x", x}};
}

ModelSpec model_from_json(const Json& doc) {
  check_keys(doc, {"use_measurements", "cause_list", "k_subclass", "eti_formula", "fpr_formula", "eti_prior",
                   "tpr_prior", "stick_hyper"},
             "model");
  ModelSpec m;
  if (doc.contains("use_measurements")) {
    m.use_measurements.clear();
    const Json& u = doc["use_measurements"];
    const auto names = u.is_string() ? std::vector<std::string>{u.get<std::string>()}
                                     : get_as<std::vector<std::string>>(u, "model.use_measurements");
    for (const auto& n : names) m.use_measurements.push_back(quality_from(n, "model.use_measurements"));
    if (m.use_measurements.empty()) throw ValidationError("model.use_measurements: empty");
  }
  m.cause_list = CauseList(get_as<std::vector<std::string>>(required(doc, "cause_list", "model"), "model.cause_list"));
  if (doc.contains("k_subclass")) {
    const Json& k = doc["k_subclass"];
    if (k.is_number_integer()) m.default_k = k.get<int>();
    else m.k_subclass = get_as<std::map<std::string, int>>(k, "model.k_subclass");
  }
  if (doc.contains("eti_formula")) m.eti_formula = get_as<std::string>(doc["eti_formula"], "model.eti_formula");
  if (doc.contains("fpr_formula"))
    m.fpr_formula = get_as<std::map<std::string, std::string>>(doc["fpr_formula"], "model.fpr_formula");
  if (doc.contains("eti_prior")) m.eti_prior = number_list(doc["eti_prior"], "model.eti_prior");
  if (doc.contains("tpr_prior")) {
    const Json& t = doc["tpr_prior"];
    if (!t.is_object()) throw ValidationError("model.tpr_prior: expected an object keyed by slice name");
    for (const auto& [slice, p] : t.items()) {
      const std::string where = "model.tpr_prior." + slice;
      if (!p.is_object()) throw ValidationError(where + ": expected an object");
      if (p.contains("low") || p.contains("up")) {
        check_keys(p, {"low", "up"}, where);
        const auto low = number_list(required(p, "low", where), where + ".low");
        const auto up = number_list(required(p, "up", where), where + ".up");
        if (low.size() != up.size()) throw ValidationError(where + ": low and up differ in length");
        std::vector<BetaRange> r;
        for (std::size_t j = 0; j < low.size(); ++j) r.push_back({low[j], up[j]});
        m.tpr_prior[slice] = r;
      } else {
        check_keys(p, {"a", "b"}, where);
        const auto a = number_list(required(p, "a", where), where + ".a");
        const auto b = number_list(required(p, "b", where), where + ".b");
        if (a.size() != b.size()) throw ValidationError(where + ": a and b differ in length");
        std::vector<BetaPair> r;
        for (std::size_t j = 0; j < a.size(); ++j) r.push_back({a[j], b[j]});
        m.tpr_prior[slice] = r;
      }
    }
  }
  if (doc.contains("stick_hyper")) {
    const Json& h = doc["stick_hyper"];
    check_keys(h, {"shape", "rate"}, "model.stick_hyper");
    if (h.contains("shape")) m.stick_hyper.shape = get_as<double>(h["shape"], "model.stick_hyper.shape");
    if (h.contains("rate")) m.stick_hyper.rate = get_as<double>(h["rate"], "model.stick_hyper.rate");
    if (!(m.stick_hyper.shape > 0 && m.stick_hyper.rate > 0))
      throw ValidationError("model.stick_hyper: shape and rate must be positive");
  }
  return m;
}

Json model_to_json(const ModelSpec& m) {
  Json use = Json::array();
  for (Quality q : m.use_measurements) use.push_back(std::string(to_string(q)));
  Json k;
  if (m.k_subclass.empty()) k = m.default_k;
  else k = m.k_subclass;
  Json tpr = Json::object();
  for (const auto& [slice, p] : m.tpr_prior) {
    if (const auto* pairs = std::get_if<std::vector<BetaPair>>(&p)) {
      Json a = Json::array(), b = Json::array();
      for (const auto& v : *pairs) {
        a.push_back(v.a);
        b.push_back(v.b);
      }
      tpr[slice] = {{"a", a}, {"b", b}};
    } else {
      Json low = Json::array(), up = Json::array();
      for (const auto& v : std::get<std::vector<BetaRange>>(p)) {
        low.push_back(v.low);
        up.push_back(v.up);
      }
      tpr[slice] = {{"low", low}, {"up", up}};
    }
  }
  Json out{{"use_measurements", use},
           {"cause_list", m.cause_list.labels()},
           {"k_subclass", k},
           {"eti_formula", m.eti_formula},
           {"fpr_formula", m.fpr_formula}};
  out["eti_prior"] = m.eti_prior;
  out["tpr_prior"] = tpr;
  out["stick_hyper"] = {{"shape", m.stick_hyper.shape}, {"rate", m.stick_hyper.rate}};
  return out;
}

McmcSettings mcmc_from_json(const Json& doc) {
  check_keys(doc, {"n_chains", "n_iter", "n_burnin", "n_thin", "individual_pred", "ppd", "seed", "out_dir"},
             "mcmc");
  McmcSettings m;
  if (doc.contains("n_chains")) m.n_chains = get_as<int>(doc["n_chains"], "mcmc.n_chains");
  if (doc.contains("n_iter")) m.n_iter = get_as<int>(doc["n_iter"], "mcmc.n_iter");
  if (doc.contains("n_burnin")) m.n_burnin = get_as<int>(doc["n_burnin"], "mcmc.n_burnin");
  if (doc.contains("n_thin")) m.n_thin = get_as<int>(doc["n_thin"], "mcmc.n_thin");
  if (doc.contains("individual_pred")) m.individual_pred = get_as<bool>(doc["individual_pred"], "mcmc.individual_pred");
  if (doc.contains("ppd")) m.ppd = get_as<bool>(doc["ppd"], "mcmc.ppd");
  if (doc.contains("seed")) m.seed = get_as<std::uint64_t>(doc["seed"], "mcmc.seed");
  if (doc.contains("out_dir")) m.out_dir = get_as<std::string>(doc["out_dir"], "mcmc.out_dir");
  m.check();
  return m;
}

Json mcmc_to_json(const McmcSettings& m) {
  return Json{{"n_chains", m.n_chains}, {"n_iter", m.n_iter},   {"n_burnin", m.n_burnin},
              {"n_thin", m.n_thin},     {"individual_pred", m.individual_pred},
              {"ppd", m.ppd},           {"seed", m.seed},       {"out_dir", m.out_dir}};
}

SimulationRecipe recipe_from_json(const Json& doc) {
  check_keys(doc, {"nd", "nu", "cause_list", "etiology", "strata", "stratum_column", "case_first", "pathogen_brs",
                   "pathogen_ss", "psi_bs", "theta_bs", "eta", "lambda", "theta_ss", "brs_name", "ss_name", "seed"},
             "recipe");
  SimulationRecipe r;
  r.cause_list = CauseList(get_as<std::vector<std::string>>(required(doc, "cause_list", "recipe"), "recipe.cause_list"));
  r.pathogen_brs = get_as<std::vector<std::string>>(required(doc, "pathogen_brs", "recipe"), "recipe.pathogen_brs");
  if (doc.contains("pathogen_ss"))
    r.pathogen_ss = get_as<std::vector<std::string>>(doc["pathogen_ss"], "recipe.pathogen_ss");
  r.psi_bs = matrix_from(required(doc, "psi_bs", "recipe"), "recipe.psi_bs");
  r.theta_bs = matrix_from(required(doc, "theta_bs", "recipe"), "recipe.theta_bs");

  const Json& eta = required(doc, "eta", "recipe");
  if (!eta.is_array() || eta.empty()) throw ValidationError("recipe.eta: expected an array");
  if (eta[0].is_array()) {
    // one row per item; rows must agree
    const Eigen::MatrixXd m = matrix_from(eta, "recipe.eta");
    for (Eigen::Index j = 1; j < m.rows(); ++j)
      if (m.row(j) != m.row(0))
        throw ValidationError("recipe.eta: per-item rows differ; a single case subclass weight vector is required");
    r.eta = m.row(0).transpose();
  } else {
    const auto v = get_as<std::vector<double>>(eta, "recipe.eta");
    r.eta = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  const auto lambda = get_as<std::vector<double>>(required(doc, "lambda", "recipe"), "recipe.lambda");
  r.lambda = Eigen::Map<const Eigen::VectorXd>(lambda.data(), static_cast<Eigen::Index>(lambda.size()));

  if (doc.contains("theta_ss")) {
    const Json& t = doc["theta_ss"];
    if (!t.is_array()) throw ValidationError("recipe.theta_ss: expected an array");
    if (t.size() == r.pathogen_ss.size() && std::all_of(t.begin(), t.end(), [](const Json& v) { return v.is_number(); })) {
      r.theta_ss = t.get<std::vector<double>>();
    } else if (t.size() == r.pathogen_brs.size()) {
      // aligned with the BrS items: defined exactly for SS items
      for (std::size_t j = 0; j < t.size(); ++j) {
        const bool measured =
            std::find(r.pathogen_ss.begin(), r.pathogen_ss.end(), r.pathogen_brs[j]) != r.pathogen_ss.end();
        if (measured != !t[j].is_null())
          throw ValidationError("recipe.theta_ss: entry for " + r.pathogen_brs[j] +
                                (measured ? " must be a number" : " must be null"));
      }
      for (const auto& p : r.pathogen_ss) {
        const auto pos = std::find(r.pathogen_brs.begin(), r.pathogen_brs.end(), p) - r.pathogen_brs.begin();
        if (static_cast<std::size_t>(pos) >= t.size()) throw ValidationError("recipe.theta_ss: SS item " + p + " is not a BrS item");
        r.theta_ss.push_back(get_as<double>(t[static_cast<std::size_t>(pos)], "recipe.theta_ss"));
      }
    } else {
      throw ValidationError("recipe.theta_ss: expected one value per SS item, or one (possibly null) per BrS item");
    }
  } else if (!r.pathogen_ss.empty()) {
    throw ValidationError("recipe: theta_ss is required when pathogen_ss is given");
  }

  if (doc.contains("brs_name")) r.brs_name = get_as<std::string>(doc["brs_name"], "recipe.brs_name");
  if (doc.contains("ss_name")) r.ss_name = get_as<std::string>(doc["ss_name"], "recipe.ss_name");
  if (doc.contains("seed")) r.seed = get_as<std::uint64_t>(doc["seed"], "recipe.seed");
  if (doc.contains("stratum_column")) r.stratum_column = get_as<std::string>(doc["stratum_column"], "recipe.stratum_column");
  if (doc.contains("case_first")) r.case_first = get_as<bool>(doc["case_first"], "recipe.case_first");

  if (doc.contains("strata")) {
    if (doc.contains("etiology") || doc.contains("nd") || doc.contains("nu"))
      throw ValidationError("recipe: give either strata or top-level nd/nu/etiology, not both");
    const Json& strata = doc["strata"];
    if (!strata.is_array() || strata.empty()) throw ValidationError("recipe.strata: expected a non-empty array");
    for (std::size_t s = 0; s < strata.size(); ++s) {
      const std::string where = "recipe.strata[" + std::to_string(s) + "]";
      check_keys(strata[s], {"label", "nd", "nu", "etiology"}, where);
      Stratum st;
      st.label = strata[s].contains("label") ? get_as<std::string>(strata[s]["label"], where + ".label")
                                             : std::to_string(s + 1);
      st.nd = get_as<int>(required(strata[s], "nd", where), where + ".nd");
      st.nu = get_as<int>(required(strata[s], "nu", where), where + ".nu");
      st.etiology = get_as<std::vector<double>>(required(strata[s], "etiology", where), where + ".etiology");
      r.strata.push_back(std::move(st));
    }
  } else {
    r.nd = get_as<int>(required(doc, "nd", "recipe"), "recipe.nd");
    r.nu = get_as<int>(required(doc, "nu", "recipe"), "recipe.nu");
    r.etiology = get_as<std::vector<double>>(required(doc, "etiology", "recipe"), "recipe.etiology");
  }
  check_recipe(r);
  return r;
}

Json recipe_to_json(const SimulationRecipe& r) {
  Json out{{"cause_list", r.cause_list.labels()}};
  if (r.strata.empty()) {
    out["nd"] = r.nd;
    out["nu"] = r.nu;
    out["etiology"] = r.etiology;
  } else {
    Json strata = Json::array();
    for (const auto& s : r.strata) strata.push_back({{"label", s.label}, {"nd", s.nd}, {"nu", s.nu}, {"etiology", s.etiology}});
    out["strata"] = strata;
    out["stratum_column"] = r.stratum_column;
    out["case_first"] = r.case_first;
  }
  out["pathogen_brs"] = r.pathogen_brs;
  out["pathogen_ss"] = r.pathogen_ss;
  out["psi_bs"] = matrix_to(r.psi_bs);
  out["theta_bs"] = matrix_to(r.theta_bs);
  out["eta"] = std::vector<double>(r.eta.data(), r.eta.data() + r.eta.size());
  out["lambda"] = std::vector<double>(r.lambda.data(), r.lambda.data() + r.lambda.size());
  out["theta_ss"] = r.theta_ss;
  out["brs_name"] = r.brs_name;
  out["ss_name"] = r.ss_name;
  out["seed"] = r.seed;
  return out;
}

Json truth_to_json(const SimulationTruth& t) {
  std::vector<int> z1(t.z.size());
  for (std::size_t i = 0; i < t.z.size(); ++i) z1[i] = t.z[i] + 1;
  Json out{{"I", t.cls}, {"Z", z1}};
  if (!t.stratum.empty()) out["stratum"] = t.stratum;
  return out;
}

std::string spec_hash(const ModelSpec& m) {
  const std::string text = model_to_json(m).dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", fnv1a(std::span<const char>(text.data(), text.size())));
  return buf;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string samples_file(int chain) { return "samples_chain" + std::to_string(chain) + ".csv"; }
std::string individual_file(int chain) { return "individual_chain" + std::to_string(chain) + ".csv"; }
std::string acceptance_file(int chain) { return "acceptance_chain" + std::to_string(chain) + ".csv"; }
std::string ppd_lor_file(const std::string& slice, int chain) {
  return "ppd_lor_" + slice + "_chain" + std::to_string(chain) + ".csv";
}
std::string ppd_patterns_file(const std::string& slice, int chain) {
  return "ppd_patterns_" + slice + "_chain" + std::to_string(chain) + ".csv";
}

void write_run_inputs(const fs::path& dir, const Dataset& data, const ModelSpec& spec, const McmcSettings& mcmc) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  write_json(dir / "model.json", model_to_json(spec));
  write_json(dir / "mcmc.json", mcmc_to_json(mcmc));
  write_json(dir / "data.json", dataset_to_json(data));
}

void write_chain_outputs(const fs::path& dir, int chain, const CompiledModel& model, const ChainOutput& out) {
  if (!out.class_draws.empty()) {
    const fs::path p = dir / individual_file(chain);
    auto f = open_out(p);
    f << "iter";
    for (std::size_t i : model.cases) f << ',' << i + 1;
    f << '\n';
    for (std::size_t r = 0; r < out.class_draws.size(); ++r) {
      f << out.iterations[r];
      for (int c : out.class_draws[r]) f << ',' << c;
      f << '\n';
    }
    close_out(f, p);
  }

  static const char* kGroup[2] = {"control", "case"};
  for (const auto& sp : out.ppd) {
    const fs::path pl = dir / ppd_lor_file(sp.slice, chain);
    auto f = open_out(pl);
    f << "draw,group,item_a,item_b,lor\n";
    for (Eigen::Index r = 0; r < sp.lor[0].rows(); ++r)
      for (int g = 0; g < 2; ++g)
        for (std::size_t p = 0; p < sp.pairs.size(); ++p)
          f << r + 1 << ',' << kGroup[g] << ',' << sp.pairs[p].first + 1 << ',' << sp.pairs[p].second + 1 << ','
            << format_double(sp.lor[g](r, static_cast<Eigen::Index>(p))) << '\n';
    close_out(f, pl);

    const fs::path pp = dir / ppd_patterns_file(sp.slice, chain);
    auto g = open_out(pp);
    g << "draw,group,pattern,count\n";
    for (std::size_t r = 0; r < sp.patterns[0].size(); ++r)
      for (int grp = 0; grp < 2; ++grp)
        for (const auto& [pattern, count] : sp.patterns[grp][r])
          g << r + 1 << ',' << kGroup[grp] << ',' << pattern << ',' << count << '\n';
    close_out(g, pp);
  }

  const fs::path pa = dir / acceptance_file(chain);
  auto a = open_out(pa);
  a << "block,phase,proposed,accepted,overflow,scale\n";
  for (const auto& rec : out.acceptance)
    a << rec.block << ',' << rec.phase << ',' << rec.proposed << ',' << rec.accepted << ',' << rec.overflow << ','
      << format_double(rec.scale) << '\n';
  close_out(a, pa);
}

void write_manifest(const fs::path& dir, const PosteriorRun& run, const std::string& status) {
  Json chains = Json::array();
  for (std::size_t c = 0; c < run.chains.size(); ++c) {
    const auto& ch = run.chains[c];
    const int ci = static_cast<int>(c);
    Json files{{"samples", samples_file(ci)}, {"acceptance", acceptance_file(ci)}};
    if (!ch.class_draws.empty()) files["individual"] = individual_file(ci);
    if (!ch.ppd.empty()) {
      Json lor = Json::object(), pat = Json::object();
      for (const auto& sp : ch.ppd) {
        lor[sp.slice] = ppd_lor_file(sp.slice, ci);
        pat[sp.slice] = ppd_patterns_file(sp.slice, ci);
      }
      files["ppd_lor"] = lor;
      files["ppd_patterns"] = pat;
    }
    chains.push_back({{"chain", c}, {"seed", run.mcmc.seed + c}, {"retained", ch.draws.rows()}, {"files", files}});
  }
  Json doc{{"engine", "nplcm"},
           {"version", kEngineVersion},
           {"status", status},
           {"written", timestamp()},
           {"seed", run.mcmc.seed},
           {"spec_hash", spec_hash(run.spec)},
           {"spec", "model.json"},
           {"mcmc", "mcmc.json"},
           {"data", "data.json"},
           {"non_identified", run.non_identified},
           {"chains", chains}};
  write_json(dir / "manifest.json", doc);
}

PosteriorRun load_run(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw ValidationError("no manifest.json in " + dir.string());
  const Json manifest = read_json(dir / "manifest.json");
  if (manifest.value("status", "") != "complete")
    throw ValidationError("run in " + dir.string() + " did not complete (status " + manifest.value("status", "?") + ")");

  PosteriorRun run;
  run.spec = model_from_json(read_json(dir / manifest.at("spec").get<std::string>()));
  run.mcmc = mcmc_from_json(read_json(dir / manifest.at("mcmc").get<std::string>()));
  run.data = dataset_from_json(read_json(dir / manifest.at("data").get<std::string>()));
  run.non_identified = manifest.at("non_identified").get<std::vector<std::string>>();

  for (const auto& ch : manifest.at("chains")) {
    ChainOutput out;
    out.seed = ch.at("seed").get<std::uint64_t>();
    out.spec_hash = manifest.at("spec_hash").get<std::string>();
    const Json& files = ch.at("files");

    const fs::path sp = dir / files.at("samples").get<std::string>();
    std::ifstream in(sp);
    if (!in) throw ValidationError("cannot read " + sp.string());
    std::string line;
    std::getline(in, line);
    auto header = split_csv(line);
    if (header.empty() || header[0] != "iter") throw ValidationError(sp.string() + ": bad header");
    out.names.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != header.size()) throw ValidationError(sp.string() + ": ragged row");
      out.iterations.push_back(std::stoi(cells[0]));
      std::vector<double> v;
      for (std::size_t c = 1; c < cells.size(); ++c) v.push_back(parse_double(cells[c]));
      rows.push_back(std::move(v));
    }
    out.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.names.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        out.draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];

    if (files.contains("individual")) {
      const fs::path ip = dir / files["individual"].get<std::string>();
      std::ifstream f(ip);
      if (!f) throw ValidationError("cannot read " + ip.string());
      std::getline(f, line);
      while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        std::vector<int> cls;
        for (std::size_t c = 1; c < cells.size(); ++c) cls.push_back(std::stoi(cells[c]));
        out.class_draws.push_back(std::move(cls));
      }
    }

    if (files.contains("ppd_lor")) {
      for (const auto& [slice, lor_name] : files["ppd_lor"].items()) {
        SlicePpd ppd;
        ppd.slice = slice;
        const auto R = static_cast<Eigen::Index>(rows.size());
        const auto* ms = [&]() -> const MeasurementSlice* {
          for (const auto& m : run.data.mbs)
            if (m.name == slice) return &m;
          return nullptr;
        }();
        if (!ms) throw ValidationError("ppd slice " + slice + " is not in the data snapshot");
        ppd.pairs = item_pairs(ms->num_items());
        for (auto& m : ppd.lor)
          m = Eigen::MatrixXd::Constant(R, static_cast<Eigen::Index>(ppd.pairs.size()),
                                        std::numeric_limits<double>::quiet_NaN());
        const std::size_t J = ms->num_items();
        auto pair_index = [&](std::size_t a, std::size_t b) {
          // row-major position of (a, b), a < b
          return a * J - a * (a + 1) / 2 + (b - a - 1);
        };
        std::ifstream f(dir / lor_name.get<std::string>());
        if (!f) throw ValidationError("cannot read " + lor_name.get<std::string>());
        std::getline(f, line);
        while (std::getline(f, line)) {
          if (line.empty()) continue;
          const auto c = split_csv(line);
          const int g = c[1] == "case" ? 1 : 0;
          const auto r = static_cast<Eigen::Index>(std::stoi(c[0]) - 1);
          const auto p = pair_index(std::stoul(c[2]) - 1, std::stoul(c[3]) - 1);
          ppd.lor[g](r, static_cast<Eigen::Index>(p)) = parse_double(c[4]);
        }

        for (auto& pat : ppd.patterns) pat.assign(rows.size(), {});
        std::ifstream g(dir / files["ppd_patterns"].at(slice).get<std::string>());
        if (!g) throw ValidationError("cannot read patterns for " + slice);
        std::getline(g, line);
        while (std::getline(g, line)) {
          if (line.empty()) continue;
          const auto c = split_csv(line);
          const int grp = c[1] == "case" ? 1 : 0;
          ppd.patterns[grp][std::stoul(c[0]) - 1][c[2]] = std::stoi(c[3]);
        }
        out.ppd.push_back(std::move(ppd));
      }
    }

    const fs::path ap = dir / files.at("acceptance").get<std::string>();
    std::ifstream a(ap);
    if (a) {
      std::getline(a, line);
      while (std::getline(a, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        out.acceptance.push_back({c[0], c[1], std::stol(c[2]), std::stol(c[3]), std::stol(c[4]), parse_double(c[5])});
      }
    }
    run.chains.push_back(std::move(out));
  }
  run.report = validate_dataset(run.data, run.spec);
  return run;
}

}  // namespace nplcm
