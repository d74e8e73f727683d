#include "multires/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "multires/chain_io.hpp"
#include "multires/csv.hpp"
#include "multires/errors.hpp"
#include "multires/estimands.hpp"
#include "multires/synth.hpp"

namespace multires {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  if (auto l = spdlog::get("multires")) return l;
  auto l = spdlog::stderr_color_mt("multires");
  l->set_pattern("[%H:%M:%S] [%^%l%$] %v");
  return l;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json dataset_file_hashes(const fs::path& dir) {
  json out = json::object();
  for (const char* name : {"links.csv", "obs.csv", "predictors.csv", "periods.csv"})
    if (fs::exists(dir / name)) out[name] = sha256_file(dir / name);
  return out;
}

LoadOptions intercept_options(bool add_intercept) {
  LoadOptions o;
  o.add_intercept = add_intercept;
  return o;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  fs::path out;
  std::uint64_t seed = 1;
  SynthConfig synth;
  std::vector<double> tiers{0.2, 0.4, 0.4};
  std::vector<double> kappa{1.0, 2.0, 2.0};
  bool no_state_block = false;
};

void cmd_simulate(SimulateArgs& a) {
  if (a.tiers.size() != 3) throw ValidationError("--tiers needs three fractions");
  if (a.kappa.size() != 3) throw ValidationError("--truth-kappa needs three values");
  auto cfg = a.synth;
  cfg.seed = a.seed;
  cfg.tier_fractions = {a.tiers[0], a.tiers[1], a.tiers[2]};
  cfg.truth_kappa = {a.kappa[0], a.kappa[1], a.kappa[2]};
  cfg.state_block = !a.no_state_block;
  auto result = generate(cfg);
  write_dataset(result.data, a.out);
  write_truth(result.truth, result.data, a.out);
  json manifest = {{"command", "simulate"},
                   {"version", kVersion},
                   {"seed", a.seed},
                   {"config",
                    {{"counties", cfg.n_counties},
                     {"years", cfg.num_years},
                     {"predictors", cfg.num_predictors},
                     {"tiers", a.tiers},
                     {"regions", cfg.n_regions},
                     {"state_block", cfg.state_block},
                     {"truth_kappa", a.kappa},
                     {"truth_clusters", cfg.truth_clusters},
                     {"intercept_mean", cfg.truth_intercept_mean},
                     {"sigma2_base", cfg.sigma2_base},
                     {"noise_scale", cfg.noise_scale}}},
                   {"dataset_files", dataset_file_hashes(a.out)}};
  write_json(a.out / "manifest.json", manifest);
  logger()->info("wrote {} counties, {} observations to {}", result.data.num_counties(),
                 result.data.num_observations(), a.out.string());
}

// ----------------------------------------------------------------------- fit

struct FitArgs {
  fs::path data;
  fs::path out;
  std::string mode = "baseline";
  std::string b_update = "auto";
  ChainConfig chain;
  std::string resume;
  bool no_intercept = false;
  std::int64_t checkpoint_every = 0;
  int log_every = 500;
};

ChainConfig chain_config(const FitArgs& a) {
  ChainConfig c = a.chain;
  c.mode = parse_mode(a.mode);
  c.b_update = parse_b_update(a.b_update);
  c.validate();
  return c;
}

RunStats fit_dataset(const Dataset& data, const fs::path& data_dir, const FitArgs& a,
                     const fs::path& out, const std::string& command) {
  const ChainConfig cfg = chain_config(a);
  const auto started = utc_now();
  RunOptions opts;
  if (!a.resume.empty()) opts.resume = fs::path(a.resume);
  opts.checkpoint_every = a.checkpoint_every;
  opts.log_every = a.log_every;
  opts.progress = [](std::uint64_t sweep, int m) {
    logger()->info("sweep {} clusters {}", sweep, m);
  };
  logger()->info("fitting {} counties, {} observations ({} mode, {} sweeps)", data.num_counties(),
                 data.num_observations(), to_string(cfg.mode), cfg.total_sweeps());
  auto stats = run_chain(data, cfg, BaseMeasure::standard(data.num_predictors()), out, opts);
  if (stats.vanished_weight_events > 0)
    logger()->warn("{} label updates kept the current cluster because every weight vanished",
                   stats.vanished_weight_events);

  json manifest = {{"command", command},
                   {"version", kVersion},
                   {"seed", cfg.seed},
                   {"config",
                    {{"data", fs::absolute(data_dir).string()},
                     {"mode", to_string(cfg.mode)},
                     {"burn", cfg.n_burn},
                     {"keep", cfg.n_keep},
                     {"thin", cfg.thin},
                     {"c_star", cfg.c_star},
                     {"workers", cfg.workers},
                     {"slice_width", cfg.slice_width},
                     {"slice_max_steps", cfg.slice_max_steps},
                     {"jitter", cfg.jitter},
                     {"period_mean", cfg.period_mean},
                     {"b_update", to_string(cfg.b_update)},
                     {"warm_start", cfg.warm_start},
                     {"intercept", !a.no_intercept},
                     {"alpha_prior", {cfg.alpha_prior.shape, cfg.alpha_prior.rate}}}},
                   {"dataset_files", dataset_file_hashes(data_dir)},
                   {"dataset_digest", dataset_digest(data)},
                   {"resumed_from", a.resume.empty() ? json(nullptr) : json(a.resume)},
                   {"started_utc", started},
                   {"wall_seconds", stats.seconds},
                   {"timing",
                    {{"sweeps_run", stats.sweeps_run},
                     {"mean_sweep_ms", stats.mean_sweep_ms},
                     {"max_sweep_ms", stats.max_sweep_ms}}},
                   {"draws", stats.draws_written}};
  write_json(out / "manifest.json", manifest);
  logger()->info("kept {} draws in {:.1f}s", stats.draws_written, stats.seconds);
  return stats;
}

void cmd_fit(const FitArgs& a) {
  Dataset data = load_dataset(a.data, intercept_options(!a.no_intercept));
  fit_dataset(data, a.data, a, a.out, "fit");
}

// ----------------------------------------------------------------- summarize

struct SummarizeArgs {
  fs::path run;
  std::string data;
  std::string out;
  std::string rollup;
  std::string county;
  bool pseudo_only = false;
  std::uint64_t lpml_seed = 1;
};

Grouping read_grouping(const fs::path& path, const Dataset& data) {
  auto t = read_csv(path);
  auto c_county = t.column("county_id");
  auto c_group = t.column("group_id");
  Grouping g;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    auto l = data.graph().find_county(t.rows[i][c_county]);
    if (!l) throw ValidationError(t.where(i) + ": unknown county '" + t.rows[i][c_county] + "'");
    g[t.rows[i][c_group]].push_back(*l);
  }
  if (g.empty()) throw ValidationError(path.string() + ": no groups");
  return g;
}

void cmd_summarize(const SummarizeArgs& a) {
  json manifest;
  {
    std::ifstream in(a.run / "manifest.json");
    if (!in) throw ValidationError("missing " + (a.run / "manifest.json").string());
    manifest = json::parse(in);
  }
  const auto& cfg = manifest.at("config");
  const fs::path data_dir = a.data.empty() ? fs::path(cfg.at("data").get<std::string>()) : fs::path(a.data);
  const bool period_mean = cfg.value("period_mean", false);
  Dataset data = load_dataset(data_dir, intercept_options(cfg.value("intercept", true)));
  ChainData chain = load_chain(a.run);
  if (chain.county_ids != data.graph().county_ids || chain.years != data.grid().years)
    throw ValidationError("chain output does not match dataset " + data_dir.string());
  const fs::path out = a.out.empty() ? a.run : fs::path(a.out);
  fs::create_directories(out);

  std::optional<int> county;
  if (!a.county.empty()) {
    county = data.graph().find_county(a.county);
    if (!county) throw ValidationError("unknown county '" + a.county + "'");
  }

  auto summary = fitted_functions(chain.f);
  auto pseudo = pseudo_statistics(summary.mean, data, period_mean);
  if (county) std::erase_if(pseudo, [&](const PseudoStatistic& p) { return p.county != *county; });
  write_pseudo(out / "pseudo.csv", pseudo, data);
  if (a.pseudo_only) return;

  write_summaries(out / "summaries.csv", summary, chain.county_ids, chain.years);
  Grouping groups = a.rollup.empty() ? multi_county_blocks(data) : read_grouping(a.rollup, data);
  write_rollup(out / "rollup.csv", rollup(chain.f, data, groups), data.grid().years);
  LpmlOptions lo;
  lo.seed = a.lpml_seed;
  auto report = fit_report(chain.loglik, lo);
  if (!report.degenerate_lpml_observations.empty())
    logger()->warn("{} observations have degenerate CPO weights",
                   report.degenerate_lpml_observations.size());
  if (!report.infinite_dic_observations.empty())
    logger()->warn("DIC3 infinite: observation {} has zero posterior-mean density",
                   chain.observation_labels.at(report.infinite_dic_observations.front()));
  write_fit(out / "fit.json", report);
  logger()->info("-LPML {:.3f}  DIC3 {:.3f}  Dbar {:.3f}", report.neg_lpml, report.dic3,
                 report.mean_deviance);
}

// ------------------------------------------------------------------- holdout

struct HoldoutArgs {
  FitArgs fit;
  std::string county;
};

void cmd_holdout(const HoldoutArgs& a) {
  Dataset full = load_dataset(a.fit.data, intercept_options(!a.fit.no_intercept));
  auto county = full.graph().find_county(a.county);
  if (!county) throw ValidationError("unknown county '" + a.county + "'");
  if (!has_one_year_data(full, *county))
    throw ValidationError("county '" + a.county + "' has no 1-year data to exclude");
  Dataset reduced = make_holdout(full, *county);
  logger()->info("holding out {} observations of {}", full.num_observations() - reduced.num_observations(),
                 a.county);

  FitArgs fa = a.fit;
  fa.resume.clear();
  fit_dataset(full, a.fit.data, fa, a.fit.out / "with", "holdout");
  fit_dataset(reduced, a.fit.data, fa, a.fit.out / "without", "holdout");
  auto with_data = fitted_functions(load_chain(a.fit.out / "with").f);
  auto without_data = fitted_functions(load_chain(a.fit.out / "without").f);
  auto table = holdout_compare(full, *county, with_data, without_data);
  write_holdout(a.fit.out / "holdout.csv", table, full.grid().years);
  logger()->info("max relative gap {:.4f}; {} of {} years within the exclusion half-width",
                 table.max_relative_gap, table.years_within, table.rows.size());
}

void add_fit_options(CLI::App* sub, FitArgs& a) {
  sub->add_option("--data", a.data, "Dataset directory")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--mode", a.mode, "baseline or ppmx")->check(CLI::IsMember({"baseline", "ppmx"}));
  sub->add_option("--seed", a.chain.seed, "Random seed");
  sub->add_option("--b-update", a.b_update, "Coefficient update: auto, ess or joint")
      ->check(CLI::IsMember({"auto", "ess", "joint"}));
  sub->add_option("--burn", a.chain.n_burn, "Burn-in sweeps");
  sub->add_option("--keep", a.chain.n_keep, "Retained draws");
  sub->add_option("--thin", a.chain.thin, "Sweeps per retained draw");
  sub->add_option("--workers", a.chain.workers, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--c-star", a.chain.c_star, "Auxiliary locations per label update");
  sub->add_option("--slice-width", a.chain.slice_width, "Initial slice bracket width");
  sub->add_option("--alpha-shape", a.chain.alpha_prior.shape, "Gamma prior shape of alpha");
  sub->add_option("--alpha-rate", a.chain.alpha_prior.rate, "Gamma prior rate of alpha");
  sub->add_flag("--period-mean", a.chain.period_mean, "Average nested years instead of summing");
  sub->add_flag("--no-intercept", a.no_intercept, "Do not add an intercept predictor row");
  sub->add_option("--checkpoint-every", a.checkpoint_every, "Retained draws between checkpoints");
  sub->add_option("--log-every", a.log_every, "Sweeps between progress lines");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Bayesian multiresolution small-area estimation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a synthetic dataset with known truth");
  s->set_config("--config");
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--seed", sim.seed, "Random seed");
  s->add_option("--counties", sim.synth.n_counties, "Number of counties");
  s->add_option("--years", sim.synth.num_years, "Number of years");
  s->add_option("--predictors", sim.synth.num_predictors, "Predictor rows including the intercept");
  s->add_option("--tiers", sim.tiers, "Fractions of 1-, 3- and 5-year counties")->expected(3);
  s->add_option("--regions", sim.synth.n_regions, "Regional super-blocks");
  s->add_flag("--no-state-block", sim.no_state_block, "Omit the all-counties block");
  s->add_option("--truth-kappa", sim.kappa, "Generating kernel parameters")->expected(3);
  s->add_option("--truth-clusters", sim.synth.truth_clusters, "Generating clusters (0: one shared)");
  s->add_option("--intercept-mean", sim.synth.truth_intercept_mean, "Mean of the intercept row of B");
  s->add_option("--sigma2-base", sim.synth.sigma2_base, "Variance scale of the observations");
  s->add_option("--noise-scale", sim.synth.noise_scale, "Multiplier on the noise variance");
  s->add_option("--first-year", sim.synth.first_year, "Label of the first year");
  s->callback([&] { cmd_simulate(sim); });

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Run the sampler on a dataset");
  f->set_config("--config");
  add_fit_options(f, fit);
  f->add_option("--resume", fit.resume, "Checkpoint to continue from");
  f->callback([&] { cmd_fit(fit); });

  SummarizeArgs sum;
  auto* m = app.add_subcommand("summarize", "Summaries, pseudo-statistics, roll-ups and fit statistics");
  m->set_config("--config");
  m->add_option("--run", sum.run, "Directory written by fit")->required();
  m->add_option("--data", sum.data, "Dataset directory (default: the one recorded by fit)");
  m->add_option("--out", sum.out, "Output directory (default: the run directory)");
  m->add_option("--rollup", sum.rollup, "CSV with county_id,group_id");
  m->add_option("--county", sum.county, "Restrict pseudo.csv to one county");
  m->add_flag("--pseudo", sum.pseudo_only, "Only write pseudo.csv");
  m->add_option("--seed", sum.lpml_seed, "Seed of the CPO resampling step");
  m->callback([&] { cmd_summarize(sum); });

  HoldoutArgs hold;
  auto* h = app.add_subcommand("holdout", "Refit without one county's 1-year data and compare");
  h->set_config("--config");
  add_fit_options(h, hold.fit);
  h->add_option("--county", hold.county, "County whose 1-year data are excluded")->required();
  h->callback([&] { cmd_holdout(hold); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  } catch (const ValidationError& e) {
    logger()->error("{}", e.what());
    return kExitValidation;
  } catch (const NumericalError& e) {
    logger()->error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return 1;
  }
  return kExitOk;
}

}  // namespace multires
