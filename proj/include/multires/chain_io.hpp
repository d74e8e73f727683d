#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "multires/samplers.hpp"

namespace multires {

inline constexpr int kCheckpointVersion = 1;

/// One retained draw as written to the chain files.
struct DrawRecord {
  std::int64_t draw = 0;  // 1-based retained index
  std::uint64_t sweep = 0;
  double alpha = 0.0;
  std::vector<int> labels;                  // canonical
  std::vector<ClusterLocation> locations;   // in canonical order
  std::vector<int> sizes;
  Matrix f;                                 // N x T
  std::vector<double> loglik;               // per observation

  int num_clusters() const { return static_cast<int>(locations.size()); }
};

DrawRecord make_record(std::int64_t draw, const ModelState& state, const Dataset& data,
                       bool period_mean);

/// Streams chain.csv, clusters.csv and loglik.csv.
class ChainWriter {
 public:
  // Creates the files with headers, or (when `keep_draws` is set) keeps the
  // first `*keep_draws` records of existing files and appends after them.
  ChainWriter(const std::filesystem::path& dir, const Dataset& data, Mode mode,
              std::optional<std::int64_t> keep_draws = std::nullopt);

  void write(const DrawRecord& record);
  void flush();

 private:
  Mode mode_;
  std::ofstream chain_;
  std::ofstream clusters_;
  std::ofstream loglik_;
};

/// Chain files read back for post-processing.
struct ChainData {
  std::vector<std::string> county_ids;
  std::vector<int> years;
  std::vector<std::string> observation_labels;
  std::vector<std::int64_t> draw;
  std::vector<double> alpha;
  std::vector<int> num_clusters;
  std::vector<std::vector<int>> labels;
  std::vector<Matrix> f;          // per draw, N x T
  Matrix loglik;                  // draws x observations

  std::size_t num_draws() const { return draw.size(); }
};

ChainData load_chain(const std::filesystem::path& dir);

// Full sampler state plus the run position, as a versioned JSON document.
struct Checkpoint {
  int version = kCheckpointVersion;
  ChainConfig config;
  std::string dataset_digest;
  std::int64_t draws_written = 0;
  ModelState state;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_string(const std::string& bytes);
// Digest over observations, links and predictors in a fixed textual form.
std::string dataset_digest(const Dataset& data);

struct RunOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::int64_t checkpoint_every = 0;            // kept draws between checkpoints; 0 = end only
  int log_every = 0;                            // sweeps between progress callbacks
  std::function<void(std::uint64_t sweep, int num_clusters)> progress;
};

struct RunStats {
  std::uint64_t sweeps_run = 0;
  std::int64_t draws_written = 0;
  double seconds = 0.0;
  double mean_sweep_ms = 0.0;
  double max_sweep_ms = 0.0;
  int vanished_weight_events = 0;
};

// Runs (or resumes) a chain, writing the chain files and checkpoint.json
// into `out_dir`. A draw is kept after sweep s when s > burn and
// (s - burn) is a multiple of thin.
RunStats run_chain(const Dataset& data, const ChainConfig& config, const BaseMeasure& base,
                   const std::filesystem::path& out_dir, const RunOptions& options = {});

}  // namespace multires
