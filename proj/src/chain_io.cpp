#include "multires/chain_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "multires/csv.hpp"
#include "multires/errors.hpp"

namespace multires {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_matrix_cells(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) os << ',' << format_double(m(i, k));
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode) {
  std::ofstream os(path, mode);
  if (!os) throw ValidationError("cannot write " + path.string());
  return os;
}

// Rewrites `path` keeping the header and every record whose leading draw
// field is <= keep, then returns a stream positioned for appending.
std::ofstream truncate_records(const fs::path& path, std::int64_t keep) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot resume: missing " + path.string());
  std::vector<std::string> lines;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      lines.push_back(line);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::int64_t draw = std::stoll(line.substr(0, line.find(',')));
    if (draw <= keep) lines.push_back(line);
  }
  in.close();
  auto out = open_out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
  return out;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != cols)
      throw ValidationError("checkpoint: ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

json config_to_json(const ChainConfig& c) {
  return {{"n_burn", c.n_burn},
          {"n_keep", c.n_keep},
          {"thin", c.thin},
          {"seed", c.seed},
          {"c_star", c.c_star},
          {"mode", to_string(c.mode)},
          {"slice_width", c.slice_width},
          {"slice_max_steps", c.slice_max_steps},
          {"jitter", c.jitter},
          {"period_mean", c.period_mean},
          {"warm_start", c.warm_start},
          {"b_update", to_string(c.b_update)},
          {"alpha_prior", {c.alpha_prior.shape, c.alpha_prior.rate}}};
}

ChainConfig config_from_json(const json& j) {
  ChainConfig c;
  c.n_burn = j.at("n_burn").get<int>();
  c.n_keep = j.at("n_keep").get<int>();
  c.thin = j.at("thin").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.c_star = j.at("c_star").get<int>();
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.slice_width = j.at("slice_width").get<double>();
  c.slice_max_steps = j.at("slice_max_steps").get<int>();
  c.jitter = j.at("jitter").get<double>();
  c.period_mean = j.at("period_mean").get<bool>();
  c.warm_start = j.at("warm_start").get<bool>();
  c.b_update = parse_b_update(j.at("b_update").get<std::string>());
  c.alpha_prior = {j.at("alpha_prior").at(0).get<double>(), j.at("alpha_prior").at(1).get<double>()};
  return c;
}

// Settings that must agree for a resumed chain to continue the same run.
void check_resume_compatible(const ChainConfig& saved, const ChainConfig& now) {
  auto fail = [](const std::string& what) {
    throw ValidationError("checkpoint resume mismatch: " + what + " differs");
  };
  if (saved.seed != now.seed) fail("seed");
  if (saved.mode != now.mode) fail("mode");
  if (saved.n_burn != now.n_burn) fail("burn-in");
  if (saved.thin != now.thin) fail("thin");
  if (saved.c_star != now.c_star) fail("c_star");
  if (saved.period_mean != now.period_mean) fail("period-mean setting");
  if (saved.jitter != now.jitter) fail("jitter");
  if (saved.b_update != now.b_update) fail("coefficient update");
  if (saved.slice_width != now.slice_width || saved.slice_max_steps != now.slice_max_steps)
    fail("slice settings");
  if (saved.alpha_prior.shape != now.alpha_prior.shape ||
      saved.alpha_prior.rate != now.alpha_prior.rate)
    fail("alpha prior");
}

}  // namespace

// ------------------------------------------------------------- DrawRecord

DrawRecord make_record(std::int64_t draw, const ModelState& state, const Dataset& data,
                       bool period_mean) {
  DrawRecord rec;
  rec.draw = draw;
  rec.sweep = state.sweep;
  rec.alpha = state.clusters.alpha;
  const auto& labels = state.clusters.labels;
  rec.labels = canonical_labels(labels);
  const int M = state.clusters.num_clusters();
  rec.locations.resize(M);
  rec.sizes.assign(M, 0);
  for (std::size_t l = 0; l < labels.size(); ++l) {
    rec.locations[rec.labels[l]] = state.clusters.locations[labels[l]];
    ++rec.sizes[rec.labels[l]];
  }
  const int N = data.num_counties();
  rec.f.resize(N, data.num_years());
  for (int l = 0; l < N; ++l)
    rec.f.row(l) = county_function(data.predictors(l), state.coeffs.B[l]).transpose();
  rec.loglik = observation_loglik(data, state.coeffs.B, period_mean);
  return rec;
}

// ------------------------------------------------------------ ChainWriter

ChainWriter::ChainWriter(const fs::path& dir, const Dataset& data, Mode mode,
                         std::optional<std::int64_t> keep_draws)
    : mode_(mode) {
  fs::create_directories(dir);
  if (keep_draws) {
    chain_ = truncate_records(dir / "chain.csv", *keep_draws);
    clusters_ = truncate_records(dir / "clusters.csv", *keep_draws);
    loglik_ = truncate_records(dir / "loglik.csv", *keep_draws);
    return;
  }
  chain_ = open_out(dir / "chain.csv", std::ios::trunc);
  clusters_ = open_out(dir / "clusters.csv", std::ios::trunc);
  loglik_ = open_out(dir / "loglik.csv", std::ios::trunc);

  const auto& ids = data.graph().county_ids;
  chain_ << "draw,sweep,alpha,M";
  for (const auto& c : ids) chain_ << ",s_" << c;
  for (const auto& c : ids)
    for (int y : data.grid().years) chain_ << ",f_" << c << '_' << y;
  chain_ << '\n';

  const int P = data.num_predictors();
  clusters_ << "draw,cluster,size,kappa1,kappa2,kappa3";
  for (int i = 1; i <= P; ++i)
    for (int k = 1; k <= P; ++k) clusters_ << ",lambda_y_" << i << '_' << k;
  if (mode == Mode::ppmx) {
    clusters_ << ",tau,rho";
    for (int i = 1; i <= P; ++i)
      for (int k = 1; k <= P; ++k) clusters_ << ",lambda_x_" << i << '_' << k;
  }
  clusters_ << '\n';

  loglik_ << "draw";
  for (int r = 0; r < data.num_observations(); ++r) loglik_ << ',' << data.observation_label(r);
  loglik_ << '\n';
}

void ChainWriter::write(const DrawRecord& rec) {
  chain_ << rec.draw << ',' << rec.sweep << ',' << format_double(rec.alpha) << ','
         << rec.num_clusters();
  for (int s : rec.labels) chain_ << ',' << s;
  write_matrix_cells(chain_, rec.f);
  chain_ << '\n';

  for (int m = 0; m < rec.num_clusters(); ++m) {
    const auto& loc = rec.locations[m];
    clusters_ << rec.draw << ',' << m << ',' << rec.sizes[m];
    for (int d = 0; d < 3; ++d) clusters_ << ',' << format_double(loc.kappa[d]);
    write_matrix_cells(clusters_, loc.lambda_y);
    if (mode_ == Mode::ppmx) {
      clusters_ << ',' << format_double(loc.tau_x) << ',' << format_double(loc.rho_x);
      write_matrix_cells(clusters_, loc.lambda_x);
    }
    clusters_ << '\n';
  }

  loglik_ << rec.draw;
  for (double v : rec.loglik) loglik_ << ',' << format_double(v);
  loglik_ << '\n';
  if (!chain_ || !clusters_ || !loglik_) throw ValidationError("failed writing chain output");
}

void ChainWriter::flush() {
  chain_.flush();
  clusters_.flush();
  loglik_.flush();
}

// -------------------------------------------------------------- load_chain

ChainData load_chain(const fs::path& dir) {
  ChainData out;
  const CsvTable chain = read_csv(dir / "chain.csv");
  const CsvTable ll = read_csv(dir / "loglik.csv");
  const auto& h = chain.header;
  if (h.size() < 4 || h[0] != "draw" || h[3] != "M")
    throw ValidationError(chain.source.string() + ": unexpected header");
  std::size_t col = 4;
  while (col < h.size() && h[col].rfind("s_", 0) == 0) out.county_ids.push_back(h[col++].substr(2));
  const std::size_t N = out.county_ids.size();
  if (N == 0) throw ValidationError(chain.source.string() + ": no label columns");
  const std::size_t nf = h.size() - col;
  if (nf == 0 || nf % N != 0) throw ValidationError(chain.source.string() + ": bad f columns");
  const std::size_t T = nf / N;
  const std::string prefix = "f_" + out.county_ids[0] + "_";
  for (std::size_t j = 0; j < T; ++j) {
    const auto& name = h[col + j];
    if (name.rfind(prefix, 0) != 0) throw ValidationError(chain.source.string() + ": bad f column " + name);
    out.years.push_back(std::stoi(name.substr(prefix.size())));
  }

  for (std::size_t i = 0; i < chain.rows.size(); ++i) {
    out.draw.push_back(static_cast<std::int64_t>(chain.number(i, 0)));
    out.alpha.push_back(chain.number(i, 2));
    out.num_clusters.push_back(static_cast<int>(chain.number(i, 3)));
    std::vector<int> s(N);
    for (std::size_t l = 0; l < N; ++l) s[l] = static_cast<int>(chain.number(i, 4 + l));
    out.labels.push_back(std::move(s));
    Matrix f(N, T);
    for (std::size_t l = 0; l < N; ++l)
      for (std::size_t j = 0; j < T; ++j) f(l, j) = chain.number(i, col + l * T + j);
    out.f.push_back(std::move(f));
  }

  if (ll.rows.size() != chain.rows.size())
    throw ValidationError("loglik.csv and chain.csv disagree on draw count");
  out.observation_labels.assign(ll.header.begin() + 1, ll.header.end());
  out.loglik.resize(static_cast<Eigen::Index>(ll.rows.size()),
                    static_cast<Eigen::Index>(out.observation_labels.size()));
  for (std::size_t i = 0; i < ll.rows.size(); ++i) {
    if (static_cast<std::int64_t>(ll.number(i, 0)) != out.draw[i])
      throw ValidationError(ll.where(i) + ": draw index does not match chain.csv");
    for (std::size_t r = 0; r < out.observation_labels.size(); ++r)
      out.loglik(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = ll.number(i, r + 1);
  }
  return out;
}

// -------------------------------------------------------------- checkpoint

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto& st = ckpt.state;
  json j;
  j["format"] = "multires-checkpoint";
  j["version"] = ckpt.version;
  j["config"] = config_to_json(ckpt.config);
  j["dataset_digest"] = ckpt.dataset_digest;
  j["draws_written"] = ckpt.draws_written;
  j["sweep"] = st.sweep;
  json b = json::array();
  for (const auto& m : st.coeffs.B) b.push_back(matrix_to_json(m));
  j["B"] = std::move(b);
  json d = json::array();
  for (const auto& m : st.coeffs.delta) d.push_back(matrix_to_json(m));
  j["delta"] = std::move(d);
  j["h_x"] = matrix_to_json(st.coeffs.h_x);
  j["labels"] = st.clusters.labels;
  j["alpha"] = st.clusters.alpha;
  j["mode"] = to_string(st.clusters.mode);
  json locs = json::array();
  for (const auto& loc : st.clusters.locations)
    locs.push_back({{"lambda_y", matrix_to_json(loc.lambda_y)},
                    {"kappa", {loc.kappa[0], loc.kappa[1], loc.kappa[2]}},
                    {"lambda_x", matrix_to_json(loc.lambda_x)},
                    {"tau_x", loc.tau_x},
                    {"rho_x", loc.rho_x}});
  j["locations"] = std::move(locs);

  const fs::path tmp = path.string() + ".tmp";
  {
    auto os = open_out(tmp, std::ios::trunc);
    os << j.dump(1) << '\n';
    if (!os) throw ValidationError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  try {
    if (j.value("format", "") != "multires-checkpoint")
      throw ValidationError(path.string() + ": not a checkpoint file");
    Checkpoint c;
    c.version = j.at("version").get<int>();
    if (c.version != kCheckpointVersion)
      throw ValidationError(path.string() + ": unsupported checkpoint version " +
                            std::to_string(c.version));
    c.config = config_from_json(j.at("config"));
    c.dataset_digest = j.at("dataset_digest").get<std::string>();
    c.draws_written = j.at("draws_written").get<std::int64_t>();
    auto& st = c.state;
    st.sweep = j.at("sweep").get<std::uint64_t>();
    for (const auto& m : j.at("B")) st.coeffs.B.push_back(matrix_from_json(m));
    for (const auto& m : j.at("delta")) st.coeffs.delta.push_back(matrix_from_json(m));
    st.coeffs.h_x = matrix_from_json(j.at("h_x"));
    st.clusters.labels = j.at("labels").get<std::vector<int>>();
    st.clusters.alpha = j.at("alpha").get<double>();
    st.clusters.mode = parse_mode(j.at("mode").get<std::string>());
    for (const auto& l : j.at("locations")) {
      ClusterLocation loc;
      loc.lambda_y = matrix_from_json(l.at("lambda_y"));
      for (int d = 0; d < 3; ++d) loc.kappa[d] = l.at("kappa").at(d).get<double>();
      loc.lambda_x = matrix_from_json(l.at("lambda_x"));
      loc.tau_x = l.at("tau_x").get<double>();
      loc.rho_x = l.at("rho_x").get<double>();
      st.clusters.locations.push_back(std::move(loc));
    }
    st.clusters.counts.assign(st.clusters.locations.size(), 0);
    for (int s : st.clusters.labels) {
      if (s < 0 || s >= static_cast<int>(st.clusters.counts.size()))
        throw ValidationError(path.string() + ": label out of range");
      ++st.clusters.counts[s];
    }
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------ hashes

std::string sha256_string(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_string(ss.str());
}

std::string dataset_digest(const Dataset& data) {
  std::ostringstream os;
  const auto& g = data.graph();
  for (int y : data.grid().years) os << y << ' ';
  for (double t : data.grid().time_points) os << format_double(t) << ' ';
  os << '\n';
  for (int q = 0; q < data.periods().size(); ++q) {
    os << data.periods().id(q) << ':';
    for (int j : data.periods().years(q)) os << j << ' ';
  }
  os << '\n';
  for (int b = 0; b < g.num_blocks(); ++b) {
    os << g.block_ids[b] << ':';
    for (int l : g.members[b]) os << g.county_ids[l] << ' ';
    os << '\n';
  }
  for (int r = 0; r < data.num_observations(); ++r) {
    const auto& o = data.observations()[r];
    os << data.observation_label(r) << ' ' << format_double(o.y) << ' ' << format_double(o.sigma2)
       << '\n';
  }
  for (int l = 0; l < data.num_counties(); ++l) {
    const auto& x = data.predictors(l);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index k = 0; k < x.cols(); ++k) os << format_double(x(i, k)) << ' ';
    os << '\n';
  }
  return sha256_string(os.str());
}

// --------------------------------------------------------------- run_chain

RunStats run_chain(const Dataset& data, const ChainConfig& config, const BaseMeasure& base,
                   const fs::path& out_dir, const RunOptions& options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const std::string digest = dataset_digest(data);

  ModelState state;
  std::int64_t written = 0;
  std::optional<std::int64_t> keep;
  if (options.resume) {
    Checkpoint ckpt = load_checkpoint(*options.resume);
    check_resume_compatible(ckpt.config, config);
    if (ckpt.dataset_digest != digest)
      throw ValidationError("checkpoint resume mismatch: dataset differs");
    if (ckpt.draws_written > config.n_keep)
      throw ValidationError("checkpoint resume mismatch: checkpoint already holds " +
                            std::to_string(ckpt.draws_written) + " draws");
    state = std::move(ckpt.state);
    if (static_cast<int>(state.coeffs.B.size()) != data.num_counties())
      throw ValidationError("checkpoint resume mismatch: county count differs");
    check_state(state, data);
    written = ckpt.draws_written;
    keep = written;
  } else {
    state = initial_state(data, config, base);
  }

  ChainWriter writer(out_dir, data, config.mode, keep);
  RunStats stats;
  auto checkpoint = [&] {
    writer.flush();
    save_checkpoint({kCheckpointVersion, config, digest, written, state}, out_dir / "checkpoint.json");
  };

  const auto total = static_cast<std::uint64_t>(config.total_sweeps());
  const auto burn = static_cast<std::uint64_t>(config.n_burn);
  double total_ms = 0.0;
  while (state.sweep < total) {
    const auto t0 = std::chrono::steady_clock::now();
    auto diag = gibbs_sweep(state, data, config, base);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    total_ms += ms;
    stats.max_sweep_ms = std::max(stats.max_sweep_ms, ms);
    stats.vanished_weight_events += diag.assignment.all_weights_vanished;
    ++stats.sweeps_run;

    const auto s = state.sweep;
    if (s > burn && (s - burn) % static_cast<std::uint64_t>(config.thin) == 0) {
      ++written;
      writer.write(make_record(written, state, data, config.period_mean));
      if (options.checkpoint_every > 0 && written % options.checkpoint_every == 0) checkpoint();
    }
    if (options.progress && options.log_every > 0 && s % options.log_every == 0)
      options.progress(s, state.clusters.num_clusters());
  }
  checkpoint();

  stats.draws_written = written;
  stats.mean_sweep_ms = stats.sweeps_run > 0 ? total_ms / stats.sweeps_run : 0.0;
  stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return stats;
}

}  // namespace multires
