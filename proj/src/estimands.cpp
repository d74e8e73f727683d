#include "multires/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "multires/csv.hpp"
#include "multires/errors.hpp"
#include "multires/rng.hpp"

namespace multires {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("cannot write " + path.string());
  return os;
}

double log_sum_exp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

std::optional<int> self_block(const Dataset& data, int county) {
  for (int b : data.graph().blocks_of_county[county])
    if (data.graph().members[b].size() == 1) return b;
  return std::nullopt;
}

}  // namespace

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

FunctionSummary fitted_functions(const std::vector<Matrix>& f_draws, std::size_t min_draws) {
  if (f_draws.empty() || f_draws.size() < min_draws)
    throw ValidationError("need at least " + std::to_string(std::max<std::size_t>(min_draws, 1)) +
                          " retained draws, have " + std::to_string(f_draws.size()));
  const auto N = f_draws.front().rows();
  const auto T = f_draws.front().cols();
  FunctionSummary s{Matrix::Zero(N, T), Matrix(N, T), Matrix(N, T)};
  std::vector<double> cell(f_draws.size());
  for (Eigen::Index l = 0; l < N; ++l)
    for (Eigen::Index j = 0; j < T; ++j) {
      double sum = 0.0;
      for (std::size_t g = 0; g < f_draws.size(); ++g) {
        cell[g] = f_draws[g](l, j);
        sum += cell[g];
      }
      s.mean(l, j) = sum / static_cast<double>(f_draws.size());
      s.lo(l, j) = quantile(cell, 0.025);
      s.hi(l, j) = quantile(cell, 0.975);
    }
  return s;
}

std::vector<PseudoStatistic> pseudo_statistics(const Matrix& f_mean, const Dataset& data,
                                               bool period_mean) {
  if (f_mean.rows() != data.num_counties() || f_mean.cols() != data.num_years())
    throw ValidationError("posterior-mean f has the wrong shape");
  std::vector<PseudoStatistic> out;
  for (int r = 0; r < data.num_observations(); ++r) {
    const auto& o = data.observations()[r];
    const auto& years = data.periods().years(o.period);
    const auto& members = data.graph().members[o.block];
    const double w = period_mean ? 1.0 / static_cast<double>(years.size()) : 1.0;
    double total = 0.0;
    for (int l : members)
      for (int j : years) total += f_mean(l, j);
    for (int l : members)
      for (int j : years) {
        PseudoStatistic p;
        p.county = l;
        p.year = j;
        p.block = o.block;
        p.period = o.period;
        p.subtracted = total - f_mean(l, j);
        p.value = o.y / w - p.subtracted;
        p.precision = w * w / o.sigma2;
        out.push_back(p);
      }
  }
  return out;
}

Grouping multi_county_blocks(const Dataset& data) {
  Grouping g;
  const auto& graph = data.graph();
  for (int b = 0; b < graph.num_blocks(); ++b)
    if (graph.members[b].size() > 1) g[graph.block_ids[b]] = graph.members[b];
  return g;
}

std::vector<RollupRow> rollup(const std::vector<Matrix>& f_draws, const Dataset& data,
                              const Grouping& groups) {
  if (f_draws.empty()) throw ValidationError("roll-up needs at least one draw");
  const auto& graph = data.graph();
  std::vector<RollupRow> out;
  for (const auto& [name, counties] : groups) {
    if (counties.empty()) throw ValidationError("group '" + name + "' has no counties");
    std::vector<int> sorted = counties;
    std::sort(sorted.begin(), sorted.end());
    for (int l : sorted)
      if (l < 0 || l >= data.num_counties()) throw ValidationError("group '" + name + "': bad county");
    std::optional<int> block;
    for (int b = 0; b < graph.num_blocks(); ++b)
      if (graph.members[b] == sorted) block = b;

    for (int j = 0; j < data.num_years(); ++j) {
      std::vector<double> sums(f_draws.size());
      double mean = 0.0;
      for (std::size_t g = 0; g < f_draws.size(); ++g) {
        double s = 0.0;
        for (int l : sorted) s += f_draws[g](l, j);
        sums[g] = s;
        mean += s;
      }
      RollupRow row;
      row.group = name;
      row.year = j;
      row.sum_mean = mean / static_cast<double>(f_draws.size());
      row.sum_lo = quantile(sums, 0.025);
      row.sum_hi = quantile(sums, 0.975);
      if (block) {
        if (auto q = data.periods().single_year_period(j)) {
          if (auto r = data.observation_index(*block, *q)) {
            row.observed = data.observations()[*r].y;
            if (*row.observed != 0.0)
              row.pct_diff = 100.0 * (*row.observed - row.sum_mean) / *row.observed;
          }
        }
      }
      out.push_back(std::move(row));
    }
  }
  return out;
}

Dic3 dic3(const Matrix& loglik) {
  const auto G = loglik.rows();
  const auto R = loglik.cols();
  if (G == 0 || R == 0) throw ValidationError("DIC needs at least one draw and one observation");
  Dic3 out;
  const double mean_ll = loglik.sum() / static_cast<double>(G);  // E[log f(y | theta)]
  double penalty = 0.0;
  std::vector<double> col(static_cast<std::size_t>(G));
  for (Eigen::Index r = 0; r < R; ++r) {
    for (Eigen::Index g = 0; g < G; ++g) col[g] = loglik(g, r);
    const double log_fhat = log_sum_exp(col.data(), col.size()) - std::log(static_cast<double>(G));
    if (!std::isfinite(log_fhat)) out.infinite_observations.push_back(static_cast<int>(r));
    penalty += log_fhat;
  }
  out.mean_deviance = -2.0 * mean_ll;
  out.dic3 = -4.0 * mean_ll + 2.0 * penalty;
  if (!out.infinite_observations.empty()) out.dic3 = std::numeric_limits<double>::infinity();
  return out;
}

Lpml lpml(const Matrix& loglik, const LpmlOptions& options) {
  const auto G = static_cast<std::size_t>(loglik.rows());
  const auto R = loglik.cols();
  if (G == 0 || R == 0) throw ValidationError("LPML needs at least one draw and one observation");
  Lpml out;
  out.log_cpo.resize(static_cast<std::size_t>(R));
  std::vector<double> w(G), lw(G), lwf(G);
  for (Eigen::Index r = 0; r < R; ++r) {
    // Importance weights 1/f, scaled so the largest is 1.
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < G; ++g) mx = std::max(mx, -loglik(g, r));
    for (std::size_t g = 0; g < G; ++g) w[g] = std::exp(-loglik(g, r) - mx);
    if (options.clip_quantile < 1.0) {
      const double cap = quantile(w, options.clip_quantile);
      for (auto& x : w) x = std::min(x, cap);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (*std::max_element(w.begin(), w.end()) > 0.99 * total && G > 1)
      out.degenerate.push_back(static_cast<int>(r));

    double log_cpo;
    if (options.resample) {
      const std::size_t S = options.resample_size > 0 ? options.resample_size : G;
      Rng rng = Rng::substream(options.seed, {static_cast<std::uint64_t>(r)});
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      std::vector<double> picked(S);
      for (std::size_t i = 0; i < S; ++i) picked[i] = loglik(pick(rng.engine()), r);
      log_cpo = log_sum_exp(picked.data(), S) - std::log(static_cast<double>(S));
    } else {
      for (std::size_t g = 0; g < G; ++g) {
        lw[g] = std::log(w[g]);
        lwf[g] = lw[g] + loglik(g, r);
      }
      log_cpo = log_sum_exp(lwf.data(), G) - log_sum_exp(lw.data(), G);
    }
    out.log_cpo[r] = log_cpo;
    out.lpml += log_cpo;
  }
  return out;
}

Lpml lpml_harmonic(const Matrix& loglik) {
  const auto G = static_cast<std::size_t>(loglik.rows());
  const auto R = loglik.cols();
  if (G == 0 || R == 0) throw ValidationError("LPML needs at least one draw and one observation");
  Lpml out;
  std::vector<double> neg(G);
  for (Eigen::Index r = 0; r < R; ++r) {
    for (std::size_t g = 0; g < G; ++g) neg[g] = -loglik(g, r);
    const double v = std::log(static_cast<double>(G)) - log_sum_exp(neg.data(), G);
    out.log_cpo.push_back(v);
    out.lpml += v;
  }
  return out;
}

FitReport fit_report(const Matrix& loglik, const LpmlOptions& options) {
  FitReport rep;
  auto d = dic3(loglik);
  auto l = lpml(loglik, options);
  rep.dic3 = d.dic3;
  rep.mean_deviance = d.mean_deviance;
  rep.infinite_dic_observations = std::move(d.infinite_observations);
  rep.neg_lpml = -l.lpml;
  rep.degenerate_lpml_observations = std::move(l.degenerate);
  return rep;
}

HoldoutTable holdout_compare(const Dataset& data, int county, const FunctionSummary& with_data,
                             const FunctionSummary& without_data) {
  if (county < 0 || county >= data.num_counties()) throw ValidationError("county out of range");
  auto b = self_block(data, county);
  bool has_one_year = false;
  if (b)
    for (int q : data.published_periods(*b))
      if (data.periods().length(q) == 1) has_one_year = true;
  if (!has_one_year)
    throw ValidationError("county " + data.graph().county_ids[county] + " has no 1-year data");
  if (with_data.mean.rows() != data.num_counties() || without_data.mean.rows() != data.num_counties())
    throw ValidationError("summaries do not match the dataset");

  HoldoutTable t;
  for (int j = 0; j < data.num_years(); ++j) {
    HoldoutRow row;
    row.year = j;
    row.mean_with = with_data.mean(county, j);
    row.mean_without = without_data.mean(county, j);
    row.lo_without = without_data.lo(county, j);
    row.hi_without = without_data.hi(county, j);
    const double gap = std::abs(row.mean_with - row.mean_without);
    row.within_half_width = gap < 0.5 * (row.hi_without - row.lo_without);
    if (row.within_half_width) ++t.years_within;
    const double scale = std::abs(row.mean_with);
    const double rel = scale > 0.0 ? gap / scale : (gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    t.max_relative_gap = std::max(t.max_relative_gap, rel);
    t.rows.push_back(row);
  }
  return t;
}

// ----------------------------------------------------------------- writers

void write_summaries(const fs::path& path, const FunctionSummary& s,
                     const std::vector<std::string>& county_ids, const std::vector<int>& years) {
  auto os = open_out(path);
  os << "county_id,year,mean,lo95,hi95\n";
  for (Eigen::Index l = 0; l < s.mean.rows(); ++l)
    for (Eigen::Index j = 0; j < s.mean.cols(); ++j)
      os << county_ids.at(l) << ',' << years.at(j) << ',' << format_double(s.mean(l, j)) << ','
         << format_double(s.lo(l, j)) << ',' << format_double(s.hi(l, j)) << '\n';
}

void write_pseudo(const fs::path& path, const std::vector<PseudoStatistic>& rows,
                  const Dataset& data) {
  auto os = open_out(path);
  os << "county_id,year,block_id,period_id,value,precision\n";
  for (const auto& p : rows)
    os << data.graph().county_ids[p.county] << ',' << data.grid().years[p.year] << ','
       << data.graph().block_ids[p.block] << ',' << data.periods().id(p.period) << ','
       << format_double(p.value) << ',' << format_double(p.precision) << '\n';
}

void write_rollup(const fs::path& path, const std::vector<RollupRow>& rows,
                  const std::vector<int>& years) {
  auto os = open_out(path);
  os << "group_id,year,sum_mean,sum_lo95,sum_hi95,obs,pct_diff\n";
  for (const auto& r : rows) {
    os << r.group << ',' << years.at(r.year) << ',' << format_double(r.sum_mean) << ','
       << format_double(r.sum_lo) << ',' << format_double(r.sum_hi) << ',';
    if (r.observed) os << format_double(*r.observed);
    os << ',';
    if (r.pct_diff) os << format_double(*r.pct_diff);
    os << '\n';
  }
}

void write_fit(const fs::path& path, const FitReport& report) {
  auto finite_or_null = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  nlohmann::json j = {{"neg_lpml", finite_or_null(report.neg_lpml)},
                      {"dic3", finite_or_null(report.dic3)},
                      {"mean_deviance", finite_or_null(report.mean_deviance)},
                      {"infinite_dic_observations", report.infinite_dic_observations},
                      {"degenerate_lpml_observations", report.degenerate_lpml_observations}};
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

void write_holdout(const fs::path& path, const HoldoutTable& table, const std::vector<int>& years) {
  auto os = open_out(path);
  os << "year,mean_with,mean_without,lo95_without,hi95_without,within_half_width\n";
  for (const auto& r : table.rows)
    os << years.at(r.year) << ',' << format_double(r.mean_with) << ','
       << format_double(r.mean_without) << ',' << format_double(r.lo_without) << ','
       << format_double(r.hi_without) << ',' << (r.within_half_width ? 1 : 0) << '\n';
}

}  // namespace multires
