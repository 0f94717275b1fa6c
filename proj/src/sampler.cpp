#include "profiler/sampler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "profiler/classical.hpp"
#include "profiler/kernels.hpp"
#include "profiler/linalg.hpp"

namespace profiler {

using nlohmann::json;

void ChainConfig::validate() const {
  if (burn_in < 0 || keep < 1 || thin < 1 || chains < 1)
    fail(Errc::invalid_input, "chain config: need burn_in >= 0, keep >= 1, thin >= 1, chains >= 1");
  if (adapt_window < 1) fail(Errc::invalid_input, "chain config: adapt_window >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    fail(Errc::invalid_input, "chain config: target_accept in (0,1)");
}

int PosteriorDraws::param_index(std::string_view name) const {
  for (size_t p = 0; p < names.size(); ++p)
    if (names[p] == name) return static_cast<int>(p);
  return -1;
}

const std::vector<double>& PosteriorDraws::series(std::string_view name) const {
  const int p = param_index(name);
  if (p < 0) fail(Errc::invalid_input, "no parameter named '" + std::string(name) + "'");
  return values[p];
}

stats::SummaryStat PosteriorDraws::summary(std::string_view name) const {
  return stats::summarize_draws(series(name));
}

// ---- engine -----------------------------------------------------------------

namespace {

struct ScalarAdapt {
  std::vector<double> log_sd;
  std::vector<int> win_acc, win_n;
  long post_acc = 0, post_n = 0;
};

void run_one_chain(const ChainConfig& cfg, MwgModel& model, int chain,
                   std::vector<std::vector<double>>& values, std::vector<double>& acc_rates) {
  Rng rng = Rng(cfg.seed).stream(chain);
  const auto& blocks = model.blocks();
  const int nb = static_cast<int>(blocks.size());

  std::vector<ScalarAdapt> ad(nb);
  std::vector<long> custom_acc(nb, 0), custom_n(nb, 0);
  for (int b = 0; b < nb; ++b) {
    if (blocks[b].kind == MwgModel::BlockKind::custom) continue;
    ad[b].log_sd.resize(blocks[b].size);
    for (int i = 0; i < blocks[b].size; ++i)
      ad[b].log_sd[i] = std::log(std::clamp(blocks[b].init_scale[i], 1e-3, 5.0));
    ad[b].win_acc.assign(blocks[b].size, 0);
    ad[b].win_n.assign(blocks[b].size, 0);
  }

  const long total = static_cast<long>(cfg.burn_in) + static_cast<long>(cfg.keep) * cfg.thin;
  int window_round = 0;
  int rec = 0;
  std::vector<double> row;
  for (long s = 0; s < total; ++s) {
    const bool adapting = s < cfg.burn_in;
    for (int b = 0; b < nb; ++b) {
      if (blocks[b].kind == MwgModel::BlockKind::custom) {
        bool acc = false;
        model.custom_update(b, rng, adapting, &acc);
        if (!adapting) {
          custom_acc[b] += acc;
          ++custom_n[b];
        }
        continue;
      }
      const bool positive = blocks[b].kind == MwgModel::BlockKind::scalar_positive;
      for (int i = 0; i < blocks[b].size; ++i) {
        const double cur = model.value(b, i);
        const double sd = std::exp(ad[b].log_sd[i]);
        double prop, lr;
        if (positive) {
          const double step = sd * rng.normal();
          prop = cur * std::exp(step);
          lr = model.log_ratio(b, i, prop) + step;  // log-walk Jacobian
        } else {
          prop = cur + sd * rng.normal();
          lr = model.log_ratio(b, i, prop);
        }
        const double u = rng.uniform();
        const bool acc = std::log(u) < lr;
        if (acc) model.commit(b, i, prop);
        ad[b].win_acc[i] += acc;
        ad[b].win_n[i] += 1;
        if (!adapting) {
          ad[b].post_acc += acc;
          ++ad[b].post_n;
        }
      }
    }
    if (adapting && (s + 1) % cfg.adapt_window == 0) {
      ++window_round;
      const double delta = std::min(0.25, 1.0 / std::sqrt(static_cast<double>(window_round)));
      for (int b = 0; b < nb; ++b) {
        if (blocks[b].kind == MwgModel::BlockKind::custom) continue;
        for (int i = 0; i < blocks[b].size; ++i) {
          if (ad[b].win_n[i] == 0) continue;
          const double rate = static_cast<double>(ad[b].win_acc[i]) / ad[b].win_n[i];
          ad[b].log_sd[i] += rate > cfg.target_accept ? delta : -delta;
          ad[b].log_sd[i] = std::clamp(ad[b].log_sd[i], -12.0, 6.0);
          ad[b].win_acc[i] = 0;
          ad[b].win_n[i] = 0;
        }
      }
    }
    if ((s + 1) % 256 == 0) model.refresh();
    if (s >= cfg.burn_in && (s - cfg.burn_in) % cfg.thin == cfg.thin - 1) {
      row.clear();
      model.record(row);
      for (size_t p = 0; p < row.size(); ++p)
        values[p][static_cast<size_t>(chain) * cfg.keep + rec] = row[p];
      ++rec;
    }
  }
  for (int b = 0; b < nb; ++b) {
    if (blocks[b].kind == MwgModel::BlockKind::custom)
      acc_rates[b] = custom_n[b] > 0 ? static_cast<double>(custom_acc[b]) / custom_n[b] : 1.0;
    else
      acc_rates[b] = ad[b].post_n > 0 ? static_cast<double>(ad[b].post_acc) / ad[b].post_n : 0.0;
  }
}

}  // namespace

PosteriorDraws run_chains(const ChainConfig& cfg, const ModelFactory& factory) {
  cfg.validate();
  std::vector<std::unique_ptr<MwgModel>> models;
  models.reserve(cfg.chains);
  for (int c = 0; c < cfg.chains; ++c) models.push_back(factory(c));

  PosteriorDraws out;
  out.keep = cfg.keep;
  out.chains = cfg.chains;
  out.seed = cfg.seed;
  out.names = models[0]->param_names();
  out.values.assign(out.names.size(),
                    std::vector<double>(static_cast<size_t>(cfg.keep) * cfg.chains));

  const auto& blocks = models[0]->blocks();
  std::vector<std::vector<double>> acc(cfg.chains, std::vector<double>(blocks.size(), 0.0));

  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1)
  for (int c = 0; c < cfg.chains; ++c) {
    try {
      run_one_chain(cfg, *models[c], c, out.values, acc[c]);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  for (size_t b = 0; b < blocks.size(); ++b) {
    BlockAcceptance ba;
    ba.name = blocks[b].name;
    double s = 0.0;
    for (int c = 0; c < cfg.chains; ++c) {
      ba.rate.push_back(acc[c][b]);
      s += acc[c][b];
    }
    ba.overall = s / cfg.chains;
    out.acceptance.push_back(std::move(ba));
  }
  return out;
}

// ---- diagnostics --------------------------------------------------------------

ParamDiag split_rhat_ess(const PosteriorDraws& draws, int param) {
  const int L = draws.keep / 2;
  const int M = draws.chains * 2;
  std::vector<std::span<const double>> seqs;
  for (int c = 0; c < draws.chains; ++c) {
    const auto full = draws.chain_series(param, c);
    seqs.push_back(full.subspan(0, L));
    seqs.push_back(full.subspan(draws.keep - L, L));
  }
  std::vector<double> m(M), v(M);
  for (int s = 0; s < M; ++s) {
    m[s] = stats::mean(seqs[s]);
    v[s] = stats::sample_var(seqs[s]);
  }
  const double w = stats::mean(v);
  const double b = static_cast<double>(L) * stats::sample_var(m);
  const double varp = (L - 1.0) / L * w + b / L;

  ParamDiag d;
  if (varp <= 0.0 || w <= 0.0) {
    // zero within-sequence variance: constant parameter unless means disagree
    const bool constant = b <= 1e-300;
    d.rhat = constant ? 1.0 : std::numeric_limits<double>::infinity();
    d.ess = constant ? static_cast<double>(M) * L : 0.0;
    return d;
  }
  d.rhat = std::sqrt(varp / w);

  // variogram autocorrelations with Geyer pairwise truncation
  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int t = 1; t + 1 < L; t += 2) {
    double rho_sum = 0.0;
    bool stop = false;
    double pair = 0.0;
    for (int dt = t; dt <= t + 1; ++dt) {
      double vg = 0.0;
      for (int s = 0; s < M; ++s)
        for (int k = 0; k + dt < L; ++k) {
          const double diff = seqs[s][k] - seqs[s][k + dt];
          vg += diff * diff;
        }
      vg /= static_cast<double>(M) * (L - dt);
      pair += 1.0 - vg / (2.0 * varp);
    }
    if (pair < 0.0) stop = true;
    pair = std::min(pair, prev_pair);  // enforce monotone initial sequence
    if (!stop) {
      rho_sum = pair;
      tau += 2.0 * rho_sum;
      prev_pair = pair;
    }
    if (stop) break;
  }
  const double total = static_cast<double>(M) * L;
  d.ess = std::clamp(total / std::max(tau, 1e-12), 1.0, total);
  return d;
}

std::vector<ParamDiag> diagnostics(const PosteriorDraws& draws) {
  if (draws.chains < 2 || draws.keep < 10)
    fail(Errc::insufficient_draws, "diagnostics need >= 2 chains and keep >= 10");
  std::vector<ParamDiag> out(draws.names.size());
  for (size_t p = 0; p < draws.names.size(); ++p)
    out[p] = split_rhat_ess(draws, static_cast<int>(p));
  return out;
}

// ---- hierarchical model chain ---------------------------------------------------

namespace {

struct HierShared {
  const Cohort* cohort = nullptr;
  HierSpec spec;
  bool joint_beta1 = false;
  bool fixed = false;
  bool collapse = false;  // fixed tau == 0
  double tau_fixed = 0.0;
  double age_scale = 1.0;  // internal design divides column 0 by this

  std::vector<double> design;  // n x 18, age column scaled
  std::array<std::vector<std::pair<int, double>>, kDesignCols> columns;

  // initial state (internal scale)
  double mu0 = 0.0, tau_sq0 = 0.01;
  std::array<double, kDesignCols> beta10{};
  std::vector<double> beta00;

  // proposal scales
  double mu_scale = 0.1;
  std::array<double, kDesignCols> beta1_scale{};
  std::vector<double> beta0_scale;
  std::vector<double> joint_chol;  // 18x18 lower, internal scale
};

class HierChainModel final : public MwgModel {
 public:
  explicit HierChainModel(const HierShared* sh) : sh_(sh) {
    const auto& c = *sh_->cohort;
    beta0_ = sh_->beta00;
    beta1_ = sh_->beta10;
    mu_ = sh_->mu0;
    tau_sq_ = sh_->tau_sq0;
    eta_.resize(c.n_patients());
    scratch_.resize(c.n_patients());
    rebuild_eta();
    build_blocks();
    build_names();
  }

  const std::vector<Block>& blocks() const override { return blocks_; }
  const std::vector<std::string>& param_names() const override { return names_; }

  double value(int b, int i) const override {
    switch (block_id_[b]) {
      case kBeta0: return beta0_[i];
      case kBeta1: return beta1_[i];
      case kMu: return mu_;
      case kTauWalk: return std::sqrt(tau_sq_);
      default: return 0.0;
    }
  }

  double log_ratio(int b, int i, double prop) override {
    switch (block_id_[b]) {
      case kBeta0: return lr_beta0(i, prop);
      case kBeta1: return lr_beta1(i, prop);
      case kMu: return sh_->collapse ? lr_mu_collapse(prop) : lr_mu(prop);
      case kTauWalk: return lr_tau(prop);
      default: return 0.0;
    }
  }

  void commit(int b, int i, double v) override {
    switch (block_id_[b]) {
      case kBeta0: {
        const double d = v - beta0_[i];
        for (int j : sh_->cohort->rows_of(i)) eta_[j] += d;
        beta0_[i] = v;
        break;
      }
      case kBeta1: {
        const double d = v - beta1_[i];
        for (const auto& [j, x] : sh_->columns[i]) eta_[j] += d * x;
        beta1_[i] = v;
        break;
      }
      case kMu: {
        if (sh_->collapse) {
          const double d = v - mu_;
          for (auto& e : eta_) e += d;
        }
        mu_ = v;
        break;
      }
      case kTauWalk:
        tau_sq_ = v * v;
        break;
      default:
        break;
    }
  }

  void custom_update(int b, Rng& rng, bool adapting, bool* accepted) override {
    if (block_id_[b] == kTauGibbs) {
      const int I = static_cast<int>(beta0_.size());
      double s = 0.0;
      for (double v : beta0_) s += (v - mu_) * (v - mu_);
      const double lambda =
          rng.gamma(sh_->spec.tau_prior.shape + 0.5 * I, sh_->spec.tau_prior.rate + 0.5 * s);
      tau_sq_ = 1.0 / lambda;
      *accepted = true;
      return;
    }
    // joint beta1 move
    const auto& cols = sh_->columns;
    std::array<double, kDesignCols> z;
    for (auto& v : z) v = rng.normal();
    std::array<double, kDesignCols> step;
    linalg::lower_mul(sh_->joint_chol, kDesignCols, z, step);
    const double s = std::exp(joint_log_s_);
    std::copy(eta_.begin(), eta_.end(), scratch_.begin());
    for (int k = 0; k < kDesignCols; ++k) {
      const double d = s * step[k];
      if (d == 0.0) continue;
      for (const auto& [j, x] : cols[k]) scratch_[j] += d * x;
    }
    const auto y = sh_->cohort->deaths();
    const double ll_old = kernels::bernoulli_loglik_serial(eta_, y);
    const double ll_new = kernels::bernoulli_loglik_serial(scratch_, y);
    double lr = ll_new - ll_old;
    for (int k = 0; k < kDesignCols; ++k) {
      const double nb = beta1_[k] + s * step[k];
      lr += (beta1_[k] * beta1_[k] - nb * nb) / (2.0 * sh_->spec.beta_prior_var);
    }
    const double u = rng.uniform();
    const bool acc = std::log(u) < lr;
    if (acc) {
      eta_.swap(scratch_);
      for (int k = 0; k < kDesignCols; ++k) beta1_[k] += s * step[k];
    }
    *accepted = acc;
    if (adapting) {
      joint_acc_ += acc;
      if (++joint_n_ == 50) {
        ++joint_round_;
        const double delta = std::min(0.25, 1.0 / std::sqrt(static_cast<double>(joint_round_)));
        joint_log_s_ += joint_acc_ > 50 * 0.25 ? delta : -delta;
        joint_log_s_ = std::clamp(joint_log_s_, -10.0, 3.0);
        joint_acc_ = 0;
        joint_n_ = 0;
      }
    }
  }

  void refresh() override { rebuild_eta(); }

  void record(std::vector<double>& out) const override {
    out.push_back(mu_);
    out.push_back(sh_->fixed ? sh_->tau_fixed * sh_->tau_fixed : tau_sq_);
    for (int k = 0; k < kDesignCols; ++k)
      out.push_back(k == 0 ? beta1_[k] / sh_->age_scale : beta1_[k]);
    if (sh_->collapse)
      out.insert(out.end(), beta0_.size(), mu_);
    else
      out.insert(out.end(), beta0_.begin(), beta0_.end());
  }

 private:
  enum BlockId { kBeta0, kBeta1, kMu, kTauGibbs, kTauWalk, kJoint };

  void build_blocks() {
    const int I = sh_->cohort->n_hospitals();
    if (!sh_->collapse) {
      Block b0{"beta0", BlockKind::scalar, I, sh_->beta0_scale};
      blocks_.push_back(std::move(b0));
      block_id_.push_back(kBeta0);
    }
    if (sh_->joint_beta1) {
      blocks_.push_back({"beta1", BlockKind::custom, 1, {}});
      block_id_.push_back(kJoint);
    } else {
      Block b1{"beta1", BlockKind::scalar, kDesignCols,
               std::vector<double>(sh_->beta1_scale.begin(), sh_->beta1_scale.end())};
      blocks_.push_back(std::move(b1));
      block_id_.push_back(kBeta1);
    }
    blocks_.push_back({"mu", BlockKind::scalar, 1, {sh_->mu_scale}});
    block_id_.push_back(kMu);
    if (!sh_->fixed) {
      if (sh_->spec.tau_prior.kind == PriorSpec::Kind::gamma_on_precision) {
        blocks_.push_back({"tau", BlockKind::custom, 1, {}});
        block_id_.push_back(kTauGibbs);
      } else {
        blocks_.push_back({"tau", BlockKind::scalar_positive, 1, {0.5}});
        block_id_.push_back(kTauWalk);
      }
    }
  }

  void build_names() {
    names_.push_back("mu");
    names_.push_back("tau_sq");
    for (int k = 0; k < kDesignCols; ++k)
      names_.push_back("beta1[" + std::string(kDesignNames[k]) + "]");
    for (int i = 0; i < sh_->cohort->n_hospitals(); ++i)
      names_.push_back("beta0[" + sh_->cohort->hospital_ids()[i] + "]");
  }

  void rebuild_eta() {
    const auto& c = *sh_->cohort;
    const int n = c.n_patients();
    for (int j = 0; j < n; ++j) {
      const double* x = sh_->design.data() + static_cast<size_t>(j) * kDesignCols;
      double e = sh_->collapse ? mu_ : beta0_[c.hospital_of(j)];
      for (int k = 0; k < kDesignCols; ++k) e += beta1_[k] * x[k];
      eta_[j] = e;
    }
  }

  double lr_beta0(int i, double prop) {
    const auto& c = *sh_->cohort;
    const double cur = beta0_[i];
    const double d = prop - cur;
    double lr = 0.0;
    for (int j : c.rows_of(i)) {
      const double e = eta_[j];
      lr += c.deaths()[j] * d - stats::log1pexp(e + d) + stats::log1pexp(e);
    }
    const double tau_sq = sh_->fixed ? sh_->tau_fixed * sh_->tau_fixed : tau_sq_;
    lr += ((cur - mu_) * (cur - mu_) - (prop - mu_) * (prop - mu_)) / (2.0 * tau_sq);
    return lr;
  }

  double lr_beta1(int k, double prop) {
    const auto& c = *sh_->cohort;
    const double cur = beta1_[k];
    const double d = prop - cur;
    double lr = 0.0;
    for (const auto& [j, x] : sh_->columns[k]) {
      const double e = eta_[j];
      lr += c.deaths()[j] * d * x - stats::log1pexp(e + d * x) + stats::log1pexp(e);
    }
    lr += (cur * cur - prop * prop) / (2.0 * sh_->spec.beta_prior_var);
    return lr;
  }

  double lr_mu(double prop) {
    const double tau_sq = sh_->fixed ? sh_->tau_fixed * sh_->tau_fixed : tau_sq_;
    double lr = 0.0;
    for (double b : beta0_)
      lr += ((b - mu_) * (b - mu_) - (b - prop) * (b - prop)) / (2.0 * tau_sq);
    lr += (mu_ * mu_ - prop * prop) / (2.0 * sh_->spec.mu_prior_var);
    return lr;
  }

  double lr_mu_collapse(double prop) {
    const auto& c = *sh_->cohort;
    const double d = prop - mu_;
    double lr = 0.0;
    const auto y = c.deaths();
    for (size_t j = 0; j < eta_.size(); ++j)
      lr += y[j] * d - stats::log1pexp(eta_[j] + d) + stats::log1pexp(eta_[j]);
    lr += (mu_ * mu_ - prop * prop) / (2.0 * sh_->spec.mu_prior_var);
    return lr;
  }

  double lr_tau(double prop_tau) {
    const double cur_tau = std::sqrt(tau_sq_);
    double lr = log_prior_tau_sd(sh_->spec.tau_prior, prop_tau) -
                log_prior_tau_sd(sh_->spec.tau_prior, cur_tau);
    if (!std::isfinite(lr)) return -std::numeric_limits<double>::infinity();
    const double t2n = prop_tau * prop_tau;
    double s = 0.0;
    for (double b : beta0_) s += (b - mu_) * (b - mu_);
    const int I = static_cast<int>(beta0_.size());
    lr += -0.5 * I * (std::log(t2n) - std::log(tau_sq_)) -
          0.5 * s * (1.0 / t2n - 1.0 / tau_sq_);
    return lr;
  }

  const HierShared* sh_;
  std::vector<double> beta0_;
  std::array<double, kDesignCols> beta1_{};
  double mu_ = 0.0, tau_sq_ = 0.01;
  std::vector<double> eta_, scratch_;
  std::vector<Block> blocks_;
  std::vector<int> block_id_;
  std::vector<std::string> names_;
  double joint_log_s_ = std::log(2.38 / std::sqrt(static_cast<double>(kDesignCols)));
  int joint_acc_ = 0, joint_n_ = 0, joint_round_ = 0;
};

double continuity_logit(int deaths, int n) {
  return stats::logit((deaths + 0.5) / (n + 1.0));
}

HierShared build_shared(const HierSpec& spec, const Cohort& cohort, const ChainConfig& cfg) {
  spec.tau_prior.validate();
  HierShared sh;
  sh.cohort = &cohort;
  sh.spec = spec;
  sh.joint_beta1 = cfg.joint_beta1;
  sh.fixed = spec.tau_is_fixed();
  sh.tau_fixed = sh.fixed ? spec.tau_prior.tau : 0.0;
  sh.collapse = sh.fixed && sh.tau_fixed == 0.0;

  const int n = cohort.n_patients();
  sh.design.assign(cohort.design().begin(), cohort.design().end());
  if (spec.standardize_age) {
    std::vector<double> age(n);
    for (int j = 0; j < n; ++j) age[j] = sh.design[static_cast<size_t>(j) * kDesignCols];
    const double sd = stats::sample_sd(age);
    if (sd > 0.0) {
      sh.age_scale = sd;
      for (int j = 0; j < n; ++j) sh.design[static_cast<size_t>(j) * kDesignCols] /= sd;
    }
  }
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < kDesignCols; ++k) {
      const double x = sh.design[static_cast<size_t>(j) * kDesignCols + k];
      if (x != 0.0) sh.columns[k].emplace_back(j, x);
    }

  // initialize at the fixed-effects MLE when available
  const int deaths = cohort.total_deaths();
  double se0 = 0.3;
  std::array<double, kDesignCols> se{};
  se.fill(0.1);
  bool have_mle = false;
  FixedFit fit;
  try {
    fit = fit_logistic_mle(cohort);
    have_mle = true;
  } catch (const Error&) {
    // degenerate or rank-deficient cohort: fall back to crude-rate start
  }
  if (have_mle) {
    sh.mu0 = fit.intercept;
    for (int k = 0; k < kDesignCols; ++k)
      sh.beta10[k] = k == 0 ? fit.slopes[k] * sh.age_scale : fit.slopes[k];
    se0 = std::max(fit.se_intercept(), 1e-3);
    for (int k = 0; k < kDesignCols; ++k) {
      const double s = fit.se_slope(k) * (k == 0 ? sh.age_scale : 1.0);
      se[k] = fit.active[k] ? std::max(s, 1e-3) : 0.1;
    }
  } else {
    sh.mu0 = continuity_logit(deaths, n);
    sh.beta10.fill(0.0);
  }
  sh.tau_sq0 = sh.fixed ? sh.tau_fixed * sh.tau_fixed : 0.01;

  const int I = cohort.n_hospitals();
  const double pooled_logit = continuity_logit(deaths, n);
  sh.beta00.resize(I);
  sh.beta0_scale.resize(I);
  for (int i = 0; i < I; ++i) {
    const auto& rows = cohort.rows_of(i);
    int di = 0;
    for (int j : rows) di += cohort.deaths()[j];
    const double ni = static_cast<double>(rows.size());
    const double shrink = ni / (ni + 100.0);
    sh.beta00[i] =
        sh.mu0 + shrink * (continuity_logit(di, static_cast<int>(ni)) - pooled_logit);
    const double pbar = std::clamp((di + 0.5) / (ni + 1.0), 1e-4, 1.0 - 1e-4);
    sh.beta0_scale[i] = std::clamp(2.4 / std::sqrt(ni * pbar * (1.0 - pbar)), 0.02, 2.0);
  }
  if (sh.collapse) sh.beta00.assign(I, sh.mu0);

  sh.mu_scale = std::clamp(2.4 * se0, 0.01, 2.0);
  for (int k = 0; k < kDesignCols; ++k) sh.beta1_scale[k] = std::clamp(2.4 * se[k], 0.01, 5.0);

  if (cfg.joint_beta1) {
    std::vector<double> cov(kDesignCols * kDesignCols, 0.0);
    for (int a = 0; a < kDesignCols; ++a) {
      const double sa = a == 0 ? sh.age_scale : 1.0;
      for (int bq = 0; bq < kDesignCols; ++bq) {
        const double sb = bq == 0 ? sh.age_scale : 1.0;
        cov[a * kDesignCols + bq] =
            have_mle ? fit.covariance[(a + 1) * 19 + (bq + 1)] * sa * sb : 0.0;
      }
      if (cov[a * kDesignCols + a] <= 0.0) {
        for (int bq = 0; bq < kDesignCols; ++bq)
          cov[a * kDesignCols + bq] = cov[bq * kDesignCols + a] = 0.0;
        cov[a * kDesignCols + a] = 1e-2;
      }
    }
    if (!linalg::cholesky(cov, kDesignCols)) {
      std::fill(cov.begin(), cov.end(), 0.0);
      for (int a = 0; a < kDesignCols; ++a) cov[a * kDesignCols + a] = 0.1;
    }
    sh.joint_chol = std::move(cov);
  }
  return sh;
}

}  // namespace

PosteriorDraws sample_hier(const HierSpec& spec, const Cohort& cohort, const ChainConfig& cfg) {
  cfg.validate();
  HierShared sh = build_shared(spec, cohort, cfg);

  // the initial state must have finite posterior density (e.g. tau starts at
  // 0.1, which a narrow uniform prior may exclude)
  HierParams init;
  init.mu = sh.mu0;
  init.tau_sq = sh.fixed ? sh.tau_fixed * sh.tau_fixed : sh.tau_sq0;
  for (int k = 0; k < kDesignCols; ++k)
    init.beta1[k] = k == 0 ? sh.beta10[k] / sh.age_scale : sh.beta10[k];
  init.beta0 = sh.beta00;
  if (!std::isfinite(log_posterior(init, spec, cohort)))
    fail(Errc::non_finite_log_posterior,
         "log posterior not finite at the initial state (check prior support)");

  PosteriorDraws draws =
      run_chains(cfg, [&sh](int) { return std::make_unique<HierChainModel>(&sh); });

  if (cfg.chains >= 2 && cfg.keep >= 10) {
    draws.diags = diagnostics(draws);
    for (size_t p = 0; p < draws.names.size(); ++p)
      if (!(draws.diags[p].rhat <= 1.05)) {
        draws.converged = false;
        draws.notes.push_back("rhat above 1.05 for " + draws.names[p]);
      }
  } else {
    draws.notes.push_back("diagnostics skipped: need >= 2 chains and keep >= 10");
  }
  return draws;
}

// ---- exports -------------------------------------------------------------------

namespace {
std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
}  // namespace

void export_draws_csv(const PosteriorDraws& draws, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::invalid_input, "cannot write " + path);
  out << "chain,iteration,parameter,value\n";
  for (int c = 0; c < draws.chains; ++c)
    for (int k = 0; k < draws.keep; ++k)
      for (size_t p = 0; p < draws.names.size(); ++p)
        out << c + 1 << ',' << k + 1 << ',' << draws.names[p] << ','
            << fmt(draws.values[p][static_cast<size_t>(c) * draws.keep + k]) << '\n';
}

std::string draws_summary_json(const PosteriorDraws& draws) {
  json j;
  j["keep"] = draws.keep;
  j["chains"] = draws.chains;
  j["seed"] = draws.seed;
  j["converged"] = draws.converged;
  j["notes"] = draws.notes;
  json params;
  for (size_t p = 0; p < draws.names.size(); ++p) {
    const auto s = stats::summarize_draws(draws.values[p]);
    json e;
    e["mean"] = s.mean;
    e["median"] = s.median;
    e["p2.5"] = s.lo;
    e["p97.5"] = s.hi;
    if (!draws.diags.empty()) {
      e["rhat"] = std::isfinite(draws.diags[p].rhat) ? json(draws.diags[p].rhat) : json();
      e["ess"] = draws.diags[p].ess;
    }
    params[draws.names[p]] = e;
  }
  j["params"] = params;
  json acc;
  for (const auto& a : draws.acceptance) acc[a.name] = a.overall;
  j["acceptance"] = acc;
  return j.dump(2) + "\n";
}

}  // namespace profiler
