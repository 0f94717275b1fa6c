#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "profiler/hiermodel.hpp"
#include "profiler/registry.hpp"
#include "profiler/rng.hpp"
#include "profiler/stats.hpp"

namespace profiler {

struct ChainConfig {
  int burn_in = 5000;
  int keep = 3000;
  int thin = 1;
  int chains = 4;
  uint64_t seed = 1;
  int adapt_window = 50;
  double target_accept = 0.44;
  bool joint_beta1 = false;  // blocked slope update shaped by the MLE covariance

  void validate() const;
};

struct ParamDiag {
  double rhat = 1.0;
  double ess = 0.0;
};

struct BlockAcceptance {
  std::string name;
  std::vector<double> rate;  // per chain, post-burn-in
  double overall = 0.0;
};

struct PosteriorDraws {
  int keep = 0;
  int chains = 0;
  uint64_t seed = 0;
  std::vector<std::string> names;
  // values[p] holds keep draws per chain, chain-major: [chain*keep + k]
  std::vector<std::vector<double>> values;
  std::vector<BlockAcceptance> acceptance;
  std::vector<ParamDiag> diags;  // parallel to names; empty when not computed
  bool converged = true;
  std::vector<std::string> notes;

  int n_draws() const { return keep * chains; }
  int param_index(std::string_view name) const;
  const std::vector<double>& series(std::string_view name) const;
  std::span<const double> chain_series(int p, int chain) const {
    return {values[p].data() + static_cast<size_t>(chain) * keep, static_cast<size_t>(keep)};
  }
  stats::SummaryStat summary(std::string_view name) const;
};

// One chain's mutable state behind the Metropolis-within-Gibbs engine. Blocks
// are visited in declaration order; scalar blocks get adaptive random-walk
// proposals (log-scale walk for positive blocks, Jacobian handled by the
// engine), custom blocks draw themselves (conjugate steps, joint moves).
class MwgModel {
 public:
  enum class BlockKind { scalar, scalar_positive, custom };
  struct Block {
    std::string name;
    BlockKind kind = BlockKind::scalar;
    int size = 1;
    std::vector<double> init_scale;  // per scalar; ignored for custom
  };

  virtual ~MwgModel() = default;
  virtual const std::vector<Block>& blocks() const = 0;
  virtual double value(int b, int i) const = 0;
  // log target density difference for replacing scalar (b,i) with prop
  virtual double log_ratio(int b, int i, double prop) = 0;
  virtual void commit(int b, int i, double v) = 0;
  virtual void custom_update(int b, Rng& rng, bool adapting, bool* accepted) = 0;
  // periodic exact recompute of cached state (bounds fp drift)
  virtual void refresh() {}
  virtual const std::vector<std::string>& param_names() const = 0;
  virtual void record(std::vector<double>& out) const = 0;
};

using ModelFactory = std::function<std::unique_ptr<MwgModel>(int chain)>;

// Runs cfg.chains independent chains (parallel; chain c draws from the
// substream (seed, c)) and collects kept draws. Deterministic for a given
// config regardless of thread count.
PosteriorDraws run_chains(const ChainConfig& cfg, const ModelFactory& factory);

// split-chain potential scale reduction and autocorrelation ESS
std::vector<ParamDiag> diagnostics(const PosteriorDraws& draws);
ParamDiag split_rhat_ess(const PosteriorDraws& draws, int param);

// Random-intercept logistic sampler. Update order: each beta0_i, each beta1
// component (or one joint move), mu, then tau (conjugate Gibbs under the
// gamma-on-precision prior, log-scale random walk otherwise).
PosteriorDraws sample_hier(const HierSpec& spec, const Cohort& cohort, const ChainConfig& cfg);

void export_draws_csv(const PosteriorDraws& draws, const std::string& path);
std::string draws_summary_json(const PosteriorDraws& draws);

}  // namespace profiler
