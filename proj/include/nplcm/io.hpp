#pragma once

// JSON documents (datasets, model definitions, MCMC settings, simulation
// recipes) and the on-disk layout of a fitted run.
//
// Every document reader rejects unknown keys.
//
// Run directory layout:
//   model.json, mcmc.json, data.json        input snapshots
//   manifest.json                           status, seeds, file index
//   samples_chain<c>.csv                    iter + one column per parameter
//   individual_chain<c>.csv                 iter + one column per case (class 1..L)
//   ppd_lor_<slice>_chain<c>.csv            draw,group,item_a,item_b,lor
//   ppd_patterns_<slice>_chain<c>.csv       draw,group,pattern,count
//   acceptance_chain<c>.csv                 block,phase,proposed,accepted,overflow,scale

#include <filesystem>
#include <string>

#include <json.hpp>

#include "nplcm/core.hpp"
#include "nplcm/datagen.hpp"
#include "nplcm/model.hpp"
#include "nplcm/sampler.hpp"

namespace nplcm {

using Json = nlohmann::ordered_json;

inline constexpr const char* kEngineVersion = "0.1.0";

/// Throws ValidationError when the file is missing or not valid JSON.
Json read_json(const std::filesystem::path& path);
/// Throws Error on write failure.
void write_json(const std::filesystem::path& path, const Json& doc);

Dataset dataset_from_json(const Json& doc);
Json dataset_to_json(const Dataset& d);

ModelSpec model_from_json(const Json& doc);
Json model_to_json(const ModelSpec& m);

McmcSettings mcmc_from_json(const Json& doc);
Json mcmc_to_json(const McmcSettings& m);

SimulationRecipe recipe_from_json(const Json& doc);
Json recipe_to_json(const SimulationRecipe& r);
/// I and Z are written 1-based.
Json truth_to_json(const SimulationTruth& t);

/// Stable hash of the canonical JSON form of a model definition.
std::string spec_hash(const ModelSpec& m);

/// %.17g, "NA" for NaN.
std::string format_double(double v);

std::string samples_file(int chain);
std::string individual_file(int chain);
std::string acceptance_file(int chain);
std::string ppd_lor_file(const std::string& slice, int chain);
std::string ppd_patterns_file(const std::string& slice, int chain);

void write_run_inputs(const std::filesystem::path& dir, const Dataset& data, const ModelSpec& spec,
                      const McmcSettings& mcmc);
/// Individual predictions, PPD tables and the acceptance log of one chain.
void write_chain_outputs(const std::filesystem::path& dir, int chain, const CompiledModel& model,
                         const ChainOutput& out);
void write_manifest(const std::filesystem::path& dir, const PosteriorRun& run, const std::string& status);

/// Reads a run directory back. Throws ValidationError when the manifest is
/// missing or the run did not complete.
PosteriorRun load_run(const std::filesystem::path& dir);

}  // namespace nplcm
