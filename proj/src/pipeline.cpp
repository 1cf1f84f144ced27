#include <iomanip>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drip/harness.hpp"
#include "drip/parallel.hpp"
#include "drip/scene_io.hpp"

namespace drip::harness {

namespace fs = std::filesystem;
using diffusion::NoiseSchedule;
using nnet::Vec;

// --- scene sets -------------------------------------------------------------

namespace {

std::vector<sim::Scenario> make_split(const ExperimentConfig& cfg, std::uint64_t base_seed,
                                      int n_normal, int n_medium, int n_hard) {
  std::vector<sim::Scenario> out;
  sim::ScenarioGenConfig gen;
  gen.vehicle = cfg.env.vehicle;
  struct TierSpec {
    sim::Difficulty tier;
    int count;
  };
  const TierSpec tiers[3] = {{sim::Difficulty::Normal, n_normal},
                             {sim::Difficulty::Medium, n_medium},
                             {sim::Difficulty::Hard, n_hard}};
  std::uint64_t seed = base_seed;
  for (const auto& [tier, count] : tiers) {
    for (int i = 0; i < count; ++i, ++seed) {
      Rng pick(seed);
      const sim::SlotKind kind = pick.uniform() < cfg.vertical_fraction
                                     ? sim::SlotKind::Vertical
                                     : sim::SlotKind::Parallel;
      out.push_back(sim::generate_scenario(seed, tier, kind, gen));
    }
  }
  return out;
}

}  // namespace

SceneSet generate_scene_set(const ExperimentConfig& cfg) {
  SceneSet set;
  set.train = make_split(cfg, cfg.scene_seed, cfg.scenes_normal, cfg.scenes_medium,
                         cfg.scenes_hard);
  set.val = make_split(cfg, cfg.scene_seed + 10000, cfg.val_normal, cfg.val_medium,
                       cfg.val_hard);
  set.test = make_split(cfg, cfg.scene_seed + 20000, cfg.test_normal, cfg.test_medium,
                        cfg.test_hard);
  return set;
}

void save_scene_set(const SceneSet& set, const std::string& dir) {
  for (const auto& [name, scenes] :
       {std::pair<std::string, const std::vector<sim::Scenario>*>{"train", &set.train},
        {"val", &set.val},
        {"test", &set.test}}) {
    const fs::path sub = fs::path(dir) / name;
    fs::create_directories(sub);
    int idx = 0;
    for (const auto& s : *scenes) {
      std::ostringstream name_os;
      name_os << std::setw(4) << std::setfill('0') << idx++ << "_" << s.id << ".json";
      sim::save_scenario(s, (sub / name_os.str()).string());
    }
  }
}

std::vector<sim::Scenario> load_scene_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  std::vector<sim::Scenario> scenes;
  scenes.reserve(files.size());
  for (const auto& f : files) scenes.push_back(sim::load_scenario(f));
  return scenes;
}

SceneSet load_scene_set(const std::string& dir) {
  SceneSet set;
  set.train = load_scene_dir((fs::path(dir) / "train").string());
  set.val = load_scene_dir((fs::path(dir) / "val").string());
  set.test = load_scene_dir((fs::path(dir) / "test").string());
  return set;
}

// --- diffusion policy --------------------------------------------------------

sim::Action DiffusionPolicy::act(const sim::Observation& o, const rl::PolicyBundle& prior,
                                 Rng& rng, bool truncated) const {
  const Vec cond = cond_encoder.feature(o);
  Vec a_init(denoiser.action_dim);
  int j_start = 0;
  if (truncated) {
    const rl::GaussianPrior p = prior.prior(o);
    const double mean_scale = scaled_mean_init ? sched.sqrt_ab(k_star_train) : 1.0;
    for (std::size_t i = 0; i < a_init.size(); ++i)
      a_init[i] = mean_scale * p.mean[i] + p.sigma[i] * rng.normal();
    j_start = k_star_inf;
  } else {
    for (double& v : a_init) v = rng.normal();
    j_start = static_cast<int>(sub_indices.size());
  }
  Vec a0 = diffusion::chain_forward(denoiser, sched, sub_indices, j_start, a_init, cond);
  for (double& v : a0) v = std::clamp(v, -1.0, 1.0);
  return rl::denormalize_action(a0, prior.vehicle);
}

void DiffusionPolicy::save(const std::string& path) const {
  nnet::Checkpoint ck;
  ck.nets["cond_encoder"] = cond_encoder.net;
  ck.nets["denoiser"] = denoiser.net;
  ck.meta["kind"] = "drip-diffusion";
  ck.meta["schedule"] = diffusion::to_string(sched.kind);
  ck.meta_numbers["train_steps"] = sched.K;
  ck.meta_numbers["beta_lo"] = sched.beta_lo;
  ck.meta_numbers["beta_hi"] = sched.beta_hi;
  ck.meta_numbers["inference_steps"] = static_cast<double>(sub_indices.size());
  ck.meta_numbers["k_star_inf"] = k_star_inf;
  ck.meta_numbers["k_star_train"] = k_star_train;
  ck.meta_numbers["sigma_rl_scalar"] = sigma_rl_scalar;
  ck.meta_numbers["scaled_mean_init"] = scaled_mean_init ? 1.0 : 0.0;
  ck.meta_numbers["temb_dim"] = static_cast<double>(denoiser.temb_dim);
  ck.meta_numbers["cond_dim"] = static_cast<double>(denoiser.cond_dim);
  ck.meta_numbers["action_dim"] = static_cast<double>(denoiser.action_dim);
  ck.meta_numbers["raster_pool"] = cond_encoder.pool;
  ck.save(path);
}

DiffusionPolicy DiffusionPolicy::load(const std::string& path, const sim::ObsConfig& obs_cfg) {
  nnet::Checkpoint ck = nnet::Checkpoint::load(path);
  DiffusionPolicy p;
  p.cond_encoder.obs_cfg = obs_cfg;
  p.cond_encoder.pool = static_cast<int>(ck.meta_numbers.at("raster_pool"));
  p.cond_encoder.net = ck.nets.at("cond_encoder");
  p.denoiser.net = ck.nets.at("denoiser");
  p.denoiser.temb_dim = static_cast<std::size_t>(ck.meta_numbers.at("temb_dim"));
  p.denoiser.cond_dim = static_cast<std::size_t>(ck.meta_numbers.at("cond_dim"));
  p.denoiser.action_dim = static_cast<std::size_t>(ck.meta_numbers.at("action_dim"));
  p.sched = diffusion::build_schedule(
      diffusion::schedule_kind_from_string(ck.meta.at("schedule")),
      static_cast<int>(ck.meta_numbers.at("train_steps")), ck.meta_numbers.at("beta_lo"),
      ck.meta_numbers.at("beta_hi"));
  p.sub_indices = diffusion::ddim_subsequence(
      p.sched, static_cast<int>(ck.meta_numbers.at("inference_steps")));
  p.k_star_inf = static_cast<int>(ck.meta_numbers.at("k_star_inf"));
  p.k_star_train = static_cast<int>(ck.meta_numbers.at("k_star_train"));
  p.sigma_rl_scalar = ck.meta_numbers.at("sigma_rl_scalar");
  p.scaled_mean_init = ck.meta_numbers.at("scaled_mean_init") != 0.0;
  return p;
}

// --- diffusion training -------------------------------------------------------

namespace {

struct Pair {
  Vec enc_input;      // shared featurizer input
  Vec a0;             // executed action, normalized
  Vec mu;             // frozen prior mean
  Vec sigma;          // frozen prior std
  Vec frozen_feature; // prior encoder feature (critic conditioning)
};

struct TransitionRef {
  std::size_t obs_pair;   // index into pairs
  std::size_t next_pair;  // index into pairs or finals
  bool next_is_final = false;
  double reward = 0.0;
  bool done = false;
};

}  // namespace

DiffusionTrainResult train_diffusion(const rl::DemoDataset& demos,
                                     const rl::PolicyBundle& prior,
                                     const sim::EnvConfig& env_cfg,
                                     const DiffusionTrainConfig& cfg, LossMode loss_mode,
                                     Paradigm paradigm, bool encoder_from_prior,
                                     std::uint64_t seed, int threads,
                                     std::optional<int> kstar_override_inf) {
  if (demos.pair_count() == 0) throw std::runtime_error("train_diffusion: empty demo dataset");
  Rng root(seed);
  Rng rng_init = root.substream("dp-init");
  Rng rng_plan = root.substream("dp-plan");

  // Precompute per-pair tensors once; the prior is frozen throughout.
  std::vector<Pair> pairs;
  std::vector<Pair> finals;  // episode-final observations, critic targets only
  std::vector<TransitionRef> transitions;
  pairs.reserve(demos.pair_count());
  for (const auto& e : demos.episodes) {
    const std::size_t base = pairs.size();
    for (std::size_t t = 0; t < e.steps.size(); ++t) {
      Pair pr;
      pr.enc_input = prior.encoder.assemble(e.steps[t].obs);
      pr.a0 = rl::normalize_action(e.steps[t].action, env_cfg.vehicle);
      pr.frozen_feature = prior.encoder.net.forward(pr.enc_input);
      const rl::GaussianPrior gp = prior.prior_from_feature(pr.frozen_feature);
      pr.mu = gp.mean;
      pr.sigma = gp.sigma;
      pairs.push_back(std::move(pr));
    }
    Pair fin;
    fin.enc_input = prior.encoder.assemble(e.final_obs);
    fin.frozen_feature = prior.encoder.net.forward(fin.enc_input);
    const rl::GaussianPrior gp = prior.prior_from_feature(fin.frozen_feature);
    fin.mu = gp.mean;
    fin.sigma = gp.sigma;
    finals.push_back(std::move(fin));

    for (std::size_t t = 0; t < e.steps.size(); ++t) {
      TransitionRef tr;
      tr.obs_pair = base + t;
      tr.next_is_final = t + 1 == e.steps.size();
      tr.next_pair = tr.next_is_final ? finals.size() - 1 : base + t + 1;
      tr.reward = e.steps[t].reward;
      tr.done = e.steps[t].terminal;
      transitions.push_back(tr);
    }
  }

  const NoiseSchedule sched = diffusion::build_schedule(
      diffusion::schedule_kind_from_string(cfg.schedule), cfg.train_steps, cfg.beta_lo,
      cfg.beta_hi);
  const std::vector<int> sub = diffusion::ddim_subsequence(sched, cfg.inference_steps);

  // Truncation step: computed once, before the training loop.
  double sigma_scalar = 0.0;
  int j_star = cfg.kstar;
  {
    auto median_of = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v.empty() ? 0.0 : v[v.size() / 2];
    };
    if (cfg.sigma_reduction == "per_dim") {
      std::vector<double> s0, s1;
      for (const auto& p : pairs) {
        s0.push_back(p.sigma[0]);
        s1.push_back(p.sigma[1]);
      }
      const int j0 = diffusion::select_truncation_subgrid(sched, sub, median_of(s0));
      const int j1 = diffusion::select_truncation_subgrid(sched, sub, median_of(s1));
      sigma_scalar = 0.5 * (median_of(s0) + median_of(s1));
      if (cfg.kstar_mode == "auto") j_star = (j0 + j1 + 1) / 2;
    } else {
      std::vector<double> sm;
      for (const auto& p : pairs) sm.push_back(0.5 * (p.sigma[0] + p.sigma[1]));
      sigma_scalar = median_of(sm);
      if (cfg.kstar_mode == "auto")
        j_star = diffusion::select_truncation_subgrid(sched, sub, sigma_scalar);
    }
    if (kstar_override_inf) j_star = *kstar_override_inf;
    j_star = std::clamp(j_star, 1, static_cast<int>(sub.size()));
  }
  const int k_star_train = sub[static_cast<std::size_t>(j_star - 1)];

  // Conditioning encoder: fine-tuned copy; the prior itself stays frozen.
  rl::ObsEncoder enc = prior.encoder;
  if (!encoder_from_prior) {
    enc = rl::ObsEncoder::create(prior.encoder.obs_cfg, prior.encoder.pool, {128, 128},
                                 prior.encoder.feature_dim(), rng_init);
  }
  diffusion::Denoiser denoiser = diffusion::Denoiser::create(
      2, static_cast<std::size_t>(cfg.temb_dim), enc.feature_dim(), cfg.hidden, rng_init);

  rl::TwinCritics critics =
      rl::TwinCritics::create(enc.feature_dim(), 2, {128, 128}, rng_init);
  critics.tau = cfg.critic_tau;

  nnet::AdamW den_opt = nnet::AdamW::create(denoiser.net, cfg.lr, cfg.weight_decay);
  nnet::AdamW enc_opt = nnet::AdamW::create(enc.net, cfg.encoder_lr, cfg.weight_decay);
  nnet::AdamW q1_opt = nnet::AdamW::create(critics.q1, cfg.critic_lr);
  nnet::AdamW q2_opt = nnet::AdamW::create(critics.q2, cfg.critic_lr);

  const std::size_t batch = static_cast<std::size_t>(cfg.batch);
  const std::size_t n_pairs = pairs.size();
  const std::size_t batches_per_epoch = std::max<std::size_t>(1, n_pairs / batch);
  const bool dql = paradigm == Paradigm::OfflineRL;

  struct Worker {
    nnet::Mlp::Grads den, enc, q1, q2;
    double loss = 0.0;
  };
  std::vector<Worker> workers(static_cast<std::size_t>(std::max(1, threads)));
  for (auto& w : workers)
    w = Worker{denoiser.net.zero_grads(), enc.net.zero_grads(), critics.q1.zero_grads(),
               critics.q2.zero_grads()};

  struct Draw {
    std::size_t pair_idx;
    int k;
    double eps[2];
    double chain_xi[2];
    std::size_t trans_idx;
    double next_xi[2];
  };
  std::vector<Draw> draws(batch);

  DiffusionTrainResult result;
  std::vector<std::size_t> order(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;

  const int nthreads = std::max(1, threads);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Shuffle pair order; k and noise stay i.i.d. per sample.
    for (std::size_t i = n_pairs; i > 1; --i) {
      const std::size_t j = rng_plan.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;

    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      for (std::size_t bi = 0; bi < batch; ++bi) {
        Draw& d = draws[bi];
        d.pair_idx = order[(b * batch + bi) % n_pairs];
        d.k = rng_plan.uniform_int(1, sched.K);
        for (int i = 0; i < 2; ++i) d.eps[i] = rng_plan.normal();
        for (int i = 0; i < 2; ++i) d.chain_xi[i] = rng_plan.normal();
        d.trans_idx = rng_plan.uniform_index(transitions.size());
        for (int i = 0; i < 2; ++i) d.next_xi[i] = rng_plan.normal();
      }

      // Critic TD step first (offline RL only).
      if (dql) {
        for (auto& w : workers) {
          w.q1.zero();
          w.q2.zero();
          w.loss = 0.0;
        }
        std::vector<std::size_t> part(batch);
        for (std::size_t i = 0; i < batch; ++i)
          part[i] = i * static_cast<std::size_t>(nthreads) / batch;
        parallel_for(static_cast<std::size_t>(nthreads), nthreads, [&](std::size_t wi) {
          Worker& w = workers[wi];
          nnet::Mlp::Cache q1_cache, q2_cache;
          for (std::size_t bi = 0; bi < batch; ++bi) {
            if (part[bi] != wi) continue;
            const auto& tr = transitions[draws[bi].trans_idx];
            const Pair& po = pairs[tr.obs_pair];
            const Pair& pn = tr.next_is_final ? finals[tr.next_pair] : pairs[tr.next_pair];

            double y = tr.reward;
            if (!tr.done) {
              // Next action from the truncated-chain policy at the next state.
              Vec a_init(2);
              for (int i = 0; i < 2; ++i)
                a_init[static_cast<std::size_t>(i)] =
                    pn.mu[static_cast<std::size_t>(i)] +
                    pn.sigma[static_cast<std::size_t>(i)] * draws[bi].next_xi[i];
              const Vec cond = enc.net.forward(pn.enc_input);
              Vec a_next =
                  diffusion::chain_forward(denoiser, sched, sub, j_star, a_init, cond);
              for (double& v : a_next) v = std::clamp(v, -1.0, 1.0);
              y += cfg.gamma * critics.min_q_target(pn.frozen_feature, a_next);
            }
            Vec qin = po.frozen_feature;
            qin.insert(qin.end(), po.a0.begin(), po.a0.end());
            const double q1v = critics.q1.forward(qin, q1_cache)[0];
            const double q2v = critics.q2.forward(qin, q2_cache)[0];
            const double scale = 2.0 / static_cast<double>(batch);
            critics.q1.backward(q1_cache, Vec{scale * (q1v - y)}, w.q1);
            critics.q2.backward(q2_cache, Vec{scale * (q2v - y)}, w.q2);
            w.loss += (q1v - y) * (q1v - y) + (q2v - y) * (q2v - y);
          }
        });
        auto q1g = critics.q1.zero_grads();
        auto q2g = critics.q2.zero_grads();
        double closs = 0.0;
        for (const auto& w : workers) {
          q1g.add(w.q1);
          q2g.add(w.q2);
          closs += w.loss;
        }
        if (!std::isfinite(closs))
          throw std::runtime_error("train_diffusion: non-finite critic loss");
        q1_opt.update(critics.q1, q1g);
        q2_opt.update(critics.q2, q2g);
        critics.soft_update();
      }

      // Denoiser (+ conditioning encoder) step.
      for (auto& w : workers) {
        w.den.zero();
        w.enc.zero();
        w.loss = 0.0;
      }
      std::vector<std::size_t> part(batch);
      for (std::size_t i = 0; i < batch; ++i)
        part[i] = i * static_cast<std::size_t>(nthreads) / batch;
      parallel_for(static_cast<std::size_t>(nthreads), nthreads, [&](std::size_t wi) {
        Worker& w = workers[wi];
        nnet::Mlp::Cache enc_cache, den_cache;
        for (std::size_t bi = 0; bi < batch; ++bi) {
          if (part[bi] != wi) continue;
          const Draw& d = draws[bi];
          const Pair& pr = pairs[d.pair_idx];
          const Vec f = enc.net.forward(pr.enc_input, enc_cache);

          const Vec eps{d.eps[0], d.eps[1]};
          Vec a_k, target;
          if (loss_mode == LossMode::Aligned) {
            a_k = diffusion::forward_aligned(pr.a0, pr.mu, d.k, sched, k_star_train, eps);
            target = diffusion::aligned_target(eps, d.k, pr.a0, pr.mu, sched, k_star_train);
          } else {
            a_k = diffusion::forward_standard(pr.a0, d.k, sched, eps);
            target = eps;
          }
          const Vec eps_hat = denoiser.eval(a_k, d.k, f, den_cache);
          Vec up(eps_hat.size());
          for (std::size_t i = 0; i < eps_hat.size(); ++i) {
            const double r = eps_hat[i] - target[i];
            w.loss += r * r;
            up[i] = 2.0 * r / static_cast<double>(batch);
          }
          Vec in_grad;
          denoiser.net.backward(den_cache, up, w.den, &in_grad);
          Vec enc_up(f.size());
          const std::size_t off = denoiser.action_dim + denoiser.temb_dim;
          for (std::size_t i = 0; i < f.size(); ++i) enc_up[i] = in_grad[off + i];

          if (dql) {
            // Value term through the unrolled truncated chain.
            Vec a_init(2);
            for (int i = 0; i < 2; ++i)
              a_init[static_cast<std::size_t>(i)] =
                  pr.mu[static_cast<std::size_t>(i)] +
                  pr.sigma[static_cast<std::size_t>(i)] * d.chain_xi[i];
            diffusion::ChainTrace trace;
            const Vec a0_hat =
                diffusion::chain_forward(denoiser, sched, sub, j_star, a_init, f, &trace);
            Vec qin = pr.frozen_feature;
            qin.insert(qin.end(), a0_hat.begin(), a0_hat.end());
            nnet::Mlp::Cache qc;
            const double q1v = critics.q1.forward(qin, qc)[0];
            nnet::Mlp::Cache qc2;
            const double q2v = critics.q2.forward(qin, qc2)[0];
            const bool use1 = q1v <= q2v;
            w.loss += -cfg.lambda * std::min(q1v, q2v) * 2.0;  // scaled into the mean below
            Vec qin_grad;
            (use1 ? critics.q1 : critics.q2)
                .backward(use1 ? qc : qc2, Vec{-cfg.lambda / static_cast<double>(batch)},
                          use1 ? w.q1 : w.q2, &qin_grad);
            Vec dl_da0(2);
            for (int i = 0; i < 2; ++i)
              dl_da0[static_cast<std::size_t>(i)] =
                  qin_grad[pr.frozen_feature.size() + static_cast<std::size_t>(i)];
            Vec cond_grad;
            diffusion::chain_backward(denoiser, sched, sub, j_star, trace, dl_da0, w.den,
                                      &cond_grad);
            for (std::size_t i = 0; i < f.size(); ++i) enc_up[i] += cond_grad[i];
          }
          enc.net.backward(enc_cache, enc_up, w.enc);
        }
      });
      auto dgrads = denoiser.net.zero_grads();
      auto egrads = enc.net.zero_grads();
      double loss = 0.0;
      for (const auto& w : workers) {
        dgrads.add(w.den);
        egrads.add(w.enc);
        loss += w.loss;
      }
      loss /= static_cast<double>(batch);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_diffusion: non-finite loss at epoch " +
                                 std::to_string(epoch));
      den_opt.update(denoiser.net, dgrads);
      enc_opt.update(enc.net, egrads);
      epoch_loss += loss;
      ++result.updates;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches_per_epoch));
  }

  result.policy.cond_encoder = std::move(enc);
  result.policy.denoiser = std::move(denoiser);
  result.policy.sched = sched;
  result.policy.sub_indices = sub;
  result.policy.k_star_inf = j_star;
  result.policy.k_star_train = k_star_train;
  result.policy.sigma_rl_scalar = sigma_scalar;
  result.policy.scaled_mean_init = cfg.scaled_mean_init;
  result.critics = std::move(critics);
  return result;
}

// --- pipeline ------------------------------------------------------------------

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  return h;
}

namespace {

bool stage_fresh(const fs::path& manifest, const std::vector<std::string>& inputs,
                 const std::vector<std::string>& outputs) {
  for (const auto& o : outputs)
    if (!fs::exists(o)) return false;
  std::ifstream in(manifest);
  if (!in) return false;
  std::string line;
  std::map<std::string, std::uint64_t> recorded;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    if (sp == std::string::npos) continue;
    recorded[line.substr(sp + 1)] = std::stoull(line.substr(0, sp));
  }
  for (const auto& i : inputs) {
    const auto it = recorded.find(i);
    if (it == recorded.end() || it->second != file_hash(i)) return false;
  }
  return true;
}

void write_manifest(const fs::path& manifest, const std::vector<std::string>& inputs) {
  std::ofstream out(manifest);
  for (const auto& i : inputs) out << file_hash(i) << " " << i << "\n";
}

}  // namespace

PipelineArtifacts run_pipeline(const ExperimentConfig& cfg, Paradigm paradigm,
                               const std::vector<std::string>& eval_arms) {
  PipelineArtifacts art;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  fs::create_directories(out / "figures");

  {
    std::ofstream cf(out / "config.resolved");
    cf << cfg.serialize();
  }
  const std::string config_path = (out / "config.resolved").string();

  // Stage: scenes.
  art.scenes_dir = (out / "scenes").string();
  if (!stage_fresh(out / "stage_scenes.manifest", {config_path},
                   {art.scenes_dir + "/train", art.scenes_dir + "/val",
                    art.scenes_dir + "/test"})) {
    const SceneSet set = generate_scene_set(cfg);
    save_scene_set(set, art.scenes_dir);
    write_manifest(out / "stage_scenes.manifest", {config_path});
  }
  SceneSet scenes = load_scene_set(art.scenes_dir);

  // Stage: pretrain.
  art.policy_ckpt = (out / "policy.ckpt.json").string();
  art.untrained_ckpt = (out / "policy_untrained.ckpt.json").string();
  if (!stage_fresh(out / "stage_pretrain.manifest", {config_path},
                   {art.policy_ckpt, art.untrained_ckpt})) {
    rl::SacConfig sac = cfg.sac;
    sac.threads = cfg.threads;
    {
      rl::SacConfig init_only = sac;
      init_only.max_env_steps = 0;
      const rl::SacResult untrained = rl::sac_train(scenes.train, cfg.env, init_only, cfg.seed);
      untrained.policy.save(art.untrained_ckpt);
    }
    const rl::SacResult res = rl::sac_train(scenes.train, cfg.env, sac, cfg.seed);
    res.policy.save(art.policy_ckpt);
    std::ofstream curve(out / "sac_returns.csv");
    curve << "episode,return\n";
    for (std::size_t i = 0; i < res.episode_returns.size(); ++i)
      curve << i << "," << res.episode_returns[i] << "\n";
    write_manifest(out / "stage_pretrain.manifest", {config_path});
  }
  const rl::PolicyBundle policy =
      rl::PolicyBundle::load(art.policy_ckpt, cfg.env.obs, cfg.env.vehicle);
  const rl::PolicyBundle untrained =
      rl::PolicyBundle::load(art.untrained_ckpt, cfg.env.obs, cfg.env.vehicle);

  // Stage: collect.
  art.demos_file = (out / "demos.jsonl").string();
  if (!stage_fresh(out / "stage_collect.manifest", {config_path, art.policy_ckpt},
                   {art.demos_file})) {
    rl::CollectConfig cc = cfg.collect;
    cc.threads = cfg.threads;
    const rl::DemoDataset demos =
        collect_demos(policy, scenes.train, cfg.env, cc, cfg.seed + 1);
    if (demos.pair_count() == 0)
      throw std::runtime_error("pipeline: demo collection produced no successful episodes");
    demos.save(art.demos_file, art.scenes_dir);
    write_manifest(out / "stage_collect.manifest", {config_path, art.policy_ckpt});
  }
  const rl::DemoDataset demos = rl::DemoDataset::load(art.demos_file);

  // Stage: diffusion arms.
  struct ArmSpec {
    std::string name;
    LossMode loss;
    bool encoder_from_prior;
    std::optional<int> kstar_override;
  };
  std::vector<ArmSpec> arms;
  const bool rl_paradigm = paradigm == Paradigm::OfflineRL;
  arms.push_back({rl_paradigm ? "dp" : "dp", LossMode::Standard, false, std::nullopt});
  arms.push_back({"dp_rl_init", LossMode::Standard, true, std::nullopt});
  arms.push_back({rl_paradigm ? "drip_rl" : "drip_il", LossMode::Aligned, true, std::nullopt});

  auto train_arm = [&](const ArmSpec& arm) {
    const std::string ckpt = (out / (arm.name + ".ckpt.json")).string();
    const fs::path manifest = out / ("stage_" + arm.name + ".manifest");
    if (!stage_fresh(manifest, {config_path, art.demos_file, art.policy_ckpt}, {ckpt})) {
      const DiffusionTrainResult res = train_diffusion(
          demos, policy, cfg.env, cfg.diffusion, arm.loss, paradigm, arm.encoder_from_prior,
          cfg.seed + 2, cfg.threads, arm.kstar_override);
      res.policy.save(ckpt);
      write_manifest(manifest, {config_path, art.demos_file, art.policy_ckpt});
    }
    art.diffusion_ckpts[arm.name] = ckpt;
  };
  for (const auto& arm : arms) {
    const bool needed =
        eval_arms.empty() ||
        std::find(eval_arms.begin(), eval_arms.end(), arm.name) != eval_arms.end() ||
        (arm.name == "dp_rl_init" &&
         std::find(eval_arms.begin(), eval_arms.end(), "prior_init_only") != eval_arms.end());
    if (needed) train_arm(arm);
  }

  // Stage: evaluation.
  const std::vector<std::string> arms_to_eval =
      eval_arms.empty() ? std::vector<std::string>{"untrained", "prior", "dp_rl_init",
                                                   rl_paradigm ? "drip_rl" : "drip_il",
                                                   "prior_init_only"}
                        : eval_arms;
  for (const std::string& arm : arms_to_eval) {
    Planner planner;
    std::optional<DiffusionPolicy> dp;
    if (arm == "untrained") {
      planner = make_planner(PlannerKind::Prior, &untrained, nullptr);
      planner.name = "untrained";
    } else if (arm == "prior") {
      planner = make_planner(PlannerKind::Prior, &policy, nullptr);
    } else if (arm == "dp" || arm == "dp_rl_init") {
      dp = DiffusionPolicy::load(art.diffusion_ckpts.at(arm), cfg.env.obs);
      planner = make_planner(arm == "dp" ? PlannerKind::Dp : PlannerKind::DpRlInit, &policy,
                             &*dp);
    } else if (arm == "drip_il" || arm == "drip_rl") {
      dp = DiffusionPolicy::load(art.diffusion_ckpts.at(arm), cfg.env.obs);
      planner = make_planner(arm == "drip_il" ? PlannerKind::DripIl : PlannerKind::DripRl,
                             &policy, &*dp);
    } else if (arm == "prior_init_only") {
      dp = DiffusionPolicy::load(art.diffusion_ckpts.at("dp_rl_init"), cfg.env.obs);
      planner = make_planner(PlannerKind::PriorInitOnly, &policy, &*dp);
    } else {
      throw std::runtime_error("unknown eval arm: " + arm);
    }
    EvalReport rep = run_eval(planner, scenes.train, cfg.env, cfg.eval_repeats,
                              cfg.eval_expansion, cfg.seed + 3, cfg.threads);
    save_report(rep, (out / ("report_" + arm)).string());
    art.reports[arm] = std::move(rep);
  }
  return art;
}

std::vector<AblationRow> run_truncation_ablation(const ExperimentConfig& cfg,
                                                 const std::vector<double>& ratios) {
  // Shares the prior and demos across arms via the pipeline's resumable
  // stages, then trains one aligned model per ratio.
  ExperimentConfig base = cfg;
  PipelineArtifacts art = run_pipeline(base, Paradigm::Imitation, {"dp_rl_init"});
  const SceneSet scenes = load_scene_set(art.scenes_dir);
  const rl::PolicyBundle policy =
      rl::PolicyBundle::load(art.policy_ckpt, cfg.env.obs, cfg.env.vehicle);
  const rl::DemoDataset demos = rl::DemoDataset::load(art.demos_file);

  std::vector<AblationRow> rows;
  {
    // Full-chain baseline row (k*/K = 1.0).
    DiffusionPolicy dp = DiffusionPolicy::load(art.diffusion_ckpts.at("dp_rl_init"),
                                               cfg.env.obs);
    const Planner planner = make_planner(PlannerKind::DpRlInit, &policy, &dp);
    EvalReport rep = run_eval(planner, scenes.train, cfg.env, cfg.eval_repeats,
                              cfg.eval_expansion, cfg.seed + 3, cfg.threads);
    rows.push_back({"dp_rl_init", 1.0, std::move(rep)});
    // Prior init only: same standard model, truncated inference.
    const Planner pio = make_planner(PlannerKind::PriorInitOnly, &policy, &dp);
    EvalReport rep2 = run_eval(pio, scenes.train, cfg.env, cfg.eval_repeats,
                               cfg.eval_expansion, cfg.seed + 3, cfg.threads);
    rows.push_back({"prior_init_only",
                    static_cast<double>(dp.k_star_inf) / static_cast<double>(dp.sub_indices.size()),
                    std::move(rep2)});
  }
  for (double ratio : ratios) {
    const int kstar = std::max(1, static_cast<int>(std::llround(
                                       ratio * cfg.diffusion.inference_steps)));
    const DiffusionTrainResult res =
        train_diffusion(demos, policy, cfg.env, cfg.diffusion, LossMode::Aligned,
                        Paradigm::Imitation, true, cfg.seed + 2, cfg.threads, kstar);
    const fs::path ckpt = fs::path(cfg.out_dir) / ("drip_il_r" + std::to_string(kstar) + ".ckpt.json");
    res.policy.save(ckpt.string());
    DiffusionPolicy dp = res.policy;
    const Planner planner = make_planner(PlannerKind::DripIl, &policy, &dp);
    EvalReport rep = run_eval(planner, scenes.train, cfg.env, cfg.eval_repeats,
                              cfg.eval_expansion, cfg.seed + 3, cfg.threads);
    rows.push_back({"drip_il", ratio, std::move(rep)});
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "method            k*/K    hard  medium  normal    avg\n";
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s %5.2f  %6.1f  %6.1f  %6.1f  %6.1f\n",
                  r.method.c_str(), r.ratio, r.report.success_hard, r.report.success_medium,
                  r.report.success_normal, r.report.success_overall);
    os << line;
  }
  return os.str();
}

}  // namespace drip::harness
