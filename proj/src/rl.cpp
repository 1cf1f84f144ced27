#include "drip/rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "drip/parallel.hpp"
#include "drip/scene_io.hpp"

namespace drip::rl {

using json = nlohmann::ordered_json;

Vec normalize_action(const sim::Action& a, const sim::VehicleParams& veh) {
  const double vs = std::max(std::abs(veh.v_min), veh.v_max);
  return {a.v / vs, a.steer / veh.steer_max};
}

sim::Action denormalize_action(const Vec& a, const sim::VehicleParams& veh) {
  const double vs = std::max(std::abs(veh.v_min), veh.v_max);
  return veh.clamp({a[0] * vs, a[1] * veh.steer_max});
}

ObsEncoder ObsEncoder::create(const sim::ObsConfig& obs_cfg, int pool,
                              const std::vector<std::size_t>& hidden, std::size_t feature_dim,
                              Rng& rng) {
  ObsEncoder enc;
  enc.obs_cfg = obs_cfg;
  enc.pool = pool;
  std::vector<std::size_t> widths;
  widths.push_back(enc.input_dim());
  for (std::size_t h : hidden) widths.push_back(h);
  widths.push_back(feature_dim);
  enc.net = nnet::Mlp::create(std::move(widths), nnet::Activation::Relu, rng);
  return enc;
}

std::size_t ObsEncoder::input_dim() const {
  const std::size_t grid = static_cast<std::size_t>(obs_cfg.raster_size / pool);
  return grid * grid + static_cast<std::size_t>(obs_cfg.ray_count) + 6;
}

Vec ObsEncoder::assemble(const sim::Observation& o) const {
  Vec in;
  in.reserve(input_dim());
  const int grid = obs_cfg.raster_size / pool;
  const double inv = 1.0 / (pool * pool);
  for (int gr = 0; gr < grid; ++gr) {
    for (int gc = 0; gc < grid; ++gc) {
      int sum = 0;
      for (int r = gr * pool; r < (gr + 1) * pool; ++r)
        for (int c = gc * pool; c < (gc + 1) * pool; ++c)
          sum += o.raster[static_cast<std::size_t>(r) * o.raster_w + c];
      in.push_back(sum * inv);
    }
  }
  for (double r : o.rays) in.push_back(r / obs_cfg.max_range);
  const double pos_scale = obs_cfg.raster_size * obs_cfg.raster_cell / 2.0;
  in.push_back(o.rel_x / pos_scale);
  in.push_back(o.rel_y / pos_scale);
  in.push_back(std::cos(o.rel_theta));
  in.push_back(std::sin(o.rel_theta));
  in.push_back(std::cos(o.slot_theta));
  in.push_back(std::sin(o.slot_theta));
  return in;
}

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

struct ActorHead {
  Vec mu;       // tanh-squashed
  Vec log_std;  // bounded to [ln sigma_min, ln sigma_max]
  Vec sigma;
  Vec raw;
};

ActorHead actor_transform(const Vec& raw, double sigma_min, double sigma_max) {
  ActorHead h;
  h.raw = raw;
  const double ls_min = std::log(sigma_min), ls_max = std::log(sigma_max);
  const std::size_t dim = raw.size() / 2;
  h.mu.resize(dim);
  h.log_std.resize(dim);
  h.sigma.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    h.mu[i] = std::tanh(raw[i]);
    h.log_std[i] = ls_min + 0.5 * (ls_max - ls_min) * (std::tanh(raw[dim + i]) + 1.0);
    h.sigma[i] = std::exp(h.log_std[i]);
  }
  return h;
}

}  // namespace

GaussianPrior PolicyBundle::prior_from_feature(const Vec& feature) const {
  const ActorHead h = actor_transform(actor.forward(feature), sigma_min, sigma_max);
  return {h.mu, h.sigma};
}

GaussianPrior PolicyBundle::prior(const sim::Observation& o) const {
  return prior_from_feature(encoder.feature(o));
}

std::pair<sim::Action, GaussianPrior> PolicyBundle::sample_prior(const sim::Observation& o,
                                                                 Rng& rng) const {
  const GaussianPrior p = prior(o);
  Vec a(p.mean.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    a[i] = std::clamp(p.mean[i] + p.sigma[i] * rng.normal(), -1.0, 1.0);
  return {denormalize_action(a, vehicle), p};
}

void PolicyBundle::save(const std::string& path) const {
  nnet::Checkpoint ck;
  ck.nets["encoder"] = encoder.net;
  ck.nets["actor"] = actor;
  ck.meta["kind"] = "drip-policy";
  ck.meta_numbers["sigma_min"] = sigma_min;
  ck.meta_numbers["sigma_max"] = sigma_max;
  ck.meta_numbers["raster_pool"] = encoder.pool;
  ck.save(path);
}

PolicyBundle PolicyBundle::load(const std::string& path, const sim::ObsConfig& obs_cfg,
                                const sim::VehicleParams& veh) {
  nnet::Checkpoint ck = nnet::Checkpoint::load(path);
  PolicyBundle p;
  p.encoder.obs_cfg = obs_cfg;
  p.encoder.pool = static_cast<int>(ck.meta_numbers.at("raster_pool"));
  p.encoder.net = ck.nets.at("encoder");
  p.actor = ck.nets.at("actor");
  p.vehicle = veh;
  p.sigma_min = ck.meta_numbers.at("sigma_min");
  p.sigma_max = ck.meta_numbers.at("sigma_max");
  return p;
}

TwinCritics TwinCritics::create(std::size_t feature_dim, std::size_t action_dim,
                                const std::vector<std::size_t>& hidden, Rng& rng) {
  TwinCritics c;
  std::vector<std::size_t> widths;
  widths.push_back(feature_dim + action_dim);
  for (std::size_t h : hidden) widths.push_back(h);
  widths.push_back(1);
  c.q1 = nnet::Mlp::create(widths, nnet::Activation::Relu, rng);
  c.q2 = nnet::Mlp::create(widths, nnet::Activation::Relu, rng);
  c.q1_target = c.q1;
  c.q2_target = c.q2;
  return c;
}

void TwinCritics::soft_update() {
  auto blend = [this](nnet::Mlp& target, const nnet::Mlp& online) {
    for (std::size_t li = 0; li < target.layers.size(); ++li) {
      for (std::size_t i = 0; i < target.layers[li].w.size(); ++i)
        target.layers[li].w.data[i] =
            (1.0 - tau) * target.layers[li].w.data[i] + tau * online.layers[li].w.data[i];
      for (std::size_t i = 0; i < target.layers[li].b.size(); ++i)
        target.layers[li].b.data[i] =
            (1.0 - tau) * target.layers[li].b.data[i] + tau * online.layers[li].b.data[i];
    }
  };
  blend(q1_target, q1);
  blend(q2_target, q2);
}

namespace {

Vec critic_input(const Vec& feature, const Vec& action) {
  Vec in;
  in.reserve(feature.size() + action.size());
  in.insert(in.end(), feature.begin(), feature.end());
  in.insert(in.end(), action.begin(), action.end());
  return in;
}

}  // namespace

double TwinCritics::min_q(const Vec& feature, const Vec& action) const {
  const Vec in = critic_input(feature, action);
  return std::min(q1.forward(in)[0], q2.forward(in)[0]);
}

double TwinCritics::min_q_target(const Vec& feature, const Vec& action) const {
  const Vec in = critic_input(feature, action);
  return std::min(q1_target.forward(in)[0], q2_target.forward(in)[0]);
}

// --- SAC ----------------------------------------------------------------

namespace {

struct Replay {
  struct Item {
    std::vector<float> input;
    std::vector<float> next_input;
    double action[2];
    double reward;
    bool done;
  };
  std::vector<Item> items;
  std::size_t capacity = 0;
  std::size_t next = 0;

  void push(Item item) {
    if (items.size() < capacity) {
      items.push_back(std::move(item));
    } else {
      items[next] = std::move(item);
      next = (next + 1) % capacity;
    }
  }
};

Vec to_double(const std::vector<float>& v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

std::vector<float> to_float(const Vec& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace

SacResult sac_train(const std::vector<sim::Scenario>& scenes, const sim::EnvConfig& env_cfg,
                    const SacConfig& cfg, std::uint64_t seed,
                    const std::function<void(long, double)>& progress) {
  if (scenes.empty()) throw std::runtime_error("sac_train: empty scene set");
  Rng root(seed);
  Rng rng_init = root.substream("sac-init");
  Rng rng_env = root.substream("sac-env");
  Rng rng_update = root.substream("sac-update");

  ObsEncoder enc = ObsEncoder::create(env_cfg.obs, cfg.raster_pool, cfg.encoder_hidden, 128,
                                      rng_init);
  nnet::Mlp enc_target = enc.net;
  std::vector<std::size_t> actor_widths{enc.feature_dim()};
  for (std::size_t h : cfg.actor_hidden) actor_widths.push_back(h);
  actor_widths.push_back(4);
  nnet::Mlp actor = nnet::Mlp::create(actor_widths, nnet::Activation::Relu, rng_init);
  TwinCritics critics = TwinCritics::create(enc.feature_dim(), 2, cfg.critic_hidden, rng_init);
  critics.tau = cfg.tau;

  nnet::AdamW enc_opt = nnet::AdamW::create(enc.net, cfg.lr);
  nnet::AdamW actor_opt = nnet::AdamW::create(actor, cfg.lr);
  nnet::AdamW q1_opt = nnet::AdamW::create(critics.q1, cfg.lr);
  nnet::AdamW q2_opt = nnet::AdamW::create(critics.q2, cfg.lr);
  double log_alpha = std::log(cfg.init_alpha);

  Replay replay;
  replay.capacity = cfg.replay_capacity;

  SacResult result;
  result.policy.vehicle = env_cfg.vehicle;
  result.policy.sigma_min = cfg.sigma_min;
  result.policy.sigma_max = cfg.sigma_max;

  auto act_with_policy = [&](const Vec& input, Rng& rng) {
    const Vec feature = enc.net.forward(input);
    const ActorHead h = actor_transform(actor.forward(feature), cfg.sigma_min, cfg.sigma_max);
    Vec a(2);
    for (int i = 0; i < 2; ++i)
      a[static_cast<std::size_t>(i)] =
          std::clamp(h.mu[static_cast<std::size_t>(i)] +
                         h.sigma[static_cast<std::size_t>(i)] * rng.normal(),
                     -1.0, 1.0);
    return a;
  };

  const int threads = std::max(1, cfg.threads);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch);

  // Scratch buffers per update, per worker.
  struct WorkerGrads {
    nnet::Mlp::Grads enc, actor, q1, q2;
    double logp_sum = 0.0;
    double loss_sum = 0.0;
  };

  // Per-worker gradient buffers and caches live for the whole run; each
  // update only zeroes them.
  std::vector<WorkerGrads> workers(static_cast<std::size_t>(threads));
  for (auto& w : workers)
    w = WorkerGrads{enc.net.zero_grads(), actor.zero_grads(), critics.q1.zero_grads(),
                    critics.q2.zero_grads()};
  std::vector<Vec> batch_features(batch);

  auto update = [&]() {
    // Pre-draw everything on the control thread so worker count cannot
    // change the random stream.
    struct Draw {
      std::size_t idx;
      double next_xi[2];
      double actor_xi[2];
    };
    std::vector<Draw> draws(batch);
    for (auto& d : draws) {
      d.idx = rng_update.uniform_index(replay.items.size());
      for (int i = 0; i < 2; ++i) d.next_xi[i] = rng_update.normal();
      for (int i = 0; i < 2; ++i) d.actor_xi[i] = rng_update.normal();
    }
    const double alpha = std::exp(log_alpha);

    // --- critic step ---
    for (auto& w : workers) {
      w.enc.zero();
      w.actor.zero();
      w.q1.zero();
      w.q2.zero();
      w.logp_sum = 0.0;
      w.loss_sum = 0.0;
    }
    {
      std::vector<std::size_t> partition(batch);
      for (std::size_t i = 0; i < batch; ++i)
        partition[i] = i * static_cast<std::size_t>(threads) / batch;
      parallel_for(static_cast<std::size_t>(threads), threads, [&](std::size_t wi) {
        WorkerGrads& w = workers[wi];
        nnet::Mlp::Cache enc_cache, q1_cache, q2_cache;
        Vec input, next_input;
        for (std::size_t bi = 0; bi < batch; ++bi) {
          if (partition[bi] != wi) continue;
          const auto& item = replay.items[draws[bi].idx];
          input.assign(item.input.begin(), item.input.end());
          next_input.assign(item.next_input.begin(), item.next_input.end());

          const Vec f = enc.net.forward(input, enc_cache);
          batch_features[bi] = f;

          double y = item.reward;
          if (!item.done) {
            const Vec f_next = enc_target.forward(next_input);
            const ActorHead h =
                actor_transform(actor.forward(f_next), cfg.sigma_min, cfg.sigma_max);
            Vec a_next(2);
            double logp = 0.0;
            for (int i = 0; i < 2; ++i) {
              const double xi = draws[bi].next_xi[i];
              a_next[static_cast<std::size_t>(i)] = std::clamp(
                  h.mu[static_cast<std::size_t>(i)] + h.sigma[static_cast<std::size_t>(i)] * xi,
                  -1.0, 1.0);
              logp += -h.log_std[static_cast<std::size_t>(i)] - 0.5 * xi * xi - kHalfLog2Pi;
            }
            const double qt = critics.min_q_target(f_next, a_next);
            y += cfg.gamma * (qt - alpha * logp);
          }

          const Vec a{item.action[0], item.action[1]};
          const Vec qin = critic_input(f, a);
          const double q1v = critics.q1.forward(qin, q1_cache)[0];
          const double q2v = critics.q2.forward(qin, q2_cache)[0];
          w.loss_sum += (q1v - y) * (q1v - y) + (q2v - y) * (q2v - y);

          const double scale = 2.0 / static_cast<double>(batch);
          Vec in_grad1, in_grad2;
          critics.q1.backward(q1_cache, Vec{scale * (q1v - y)}, w.q1, &in_grad1);
          critics.q2.backward(q2_cache, Vec{scale * (q2v - y)}, w.q2, &in_grad2);
          Vec enc_up(f.size());
          for (std::size_t i = 0; i < f.size(); ++i) enc_up[i] = in_grad1[i] + in_grad2[i];
          enc.net.backward(enc_cache, enc_up, w.enc);
        }
      });
    }
    auto enc_grads = enc.net.zero_grads();
    auto q1_grads = critics.q1.zero_grads();
    auto q2_grads = critics.q2.zero_grads();
    double critic_loss = 0.0;
    for (const auto& w : workers) {
      enc_grads.add(w.enc);
      q1_grads.add(w.q1);
      q2_grads.add(w.q2);
      critic_loss += w.loss_sum;
    }
    critic_loss /= static_cast<double>(batch);
    if (!std::isfinite(critic_loss))
      throw std::runtime_error("sac_train: non-finite critic loss at update " +
                               std::to_string(result.updates));
    q1_opt.update(critics.q1, q1_grads);
    q2_opt.update(critics.q2, q2_grads);
    enc_opt.update(enc.net, enc_grads);

    // --- actor step (encoder detached; features reused from the critic
    // pass, which ran before the encoder update) ---
    for (auto& w : workers) {
      w.actor.zero();
      w.q1.zero();
      w.q2.zero();
      w.logp_sum = 0.0;
      w.loss_sum = 0.0;
    }
    {
      std::vector<std::size_t> partition(batch);
      for (std::size_t i = 0; i < batch; ++i)
        partition[i] = i * static_cast<std::size_t>(threads) / batch;
      parallel_for(static_cast<std::size_t>(threads), threads, [&](std::size_t wi) {
        WorkerGrads& w = workers[wi];
        nnet::Mlp::Cache actor_cache, q1_cache, q2_cache;
        for (std::size_t bi = 0; bi < batch; ++bi) {
          if (partition[bi] != wi) continue;
          const Vec& f = batch_features[bi];

          const Vec raw = actor.forward(f, actor_cache);
          const ActorHead h = actor_transform(raw, cfg.sigma_min, cfg.sigma_max);

          Vec z(2), a(2);
          double logp = 0.0;
          for (int i = 0; i < 2; ++i) {
            const double xi = draws[bi].actor_xi[i];
            z[static_cast<std::size_t>(i)] =
                h.mu[static_cast<std::size_t>(i)] + h.sigma[static_cast<std::size_t>(i)] * xi;
            a[static_cast<std::size_t>(i)] = std::clamp(z[static_cast<std::size_t>(i)], -1.0, 1.0);
            logp += -h.log_std[static_cast<std::size_t>(i)] - 0.5 * xi * xi - kHalfLog2Pi;
          }
          w.logp_sum += logp;

          const Vec qin = critic_input(f, a);
          const double q1v = critics.q1.forward(qin, q1_cache)[0];
          const double q2v = critics.q2.forward(qin, q2_cache)[0];
          w.loss_sum += alpha * logp - std::min(q1v, q2v);

          // d(-minQ)/da through the selected critic only; the w.q1/w.q2
          // buffers serve as scratch, their contents are unused here.
          Vec in_grad;
          (q1v <= q2v ? critics.q1 : critics.q2)
              .backward(q1v <= q2v ? q1_cache : q2_cache,
                        Vec{-1.0 / static_cast<double>(batch)}, q1v <= q2v ? w.q1 : w.q2,
                        &in_grad);

          const double ls_min = std::log(cfg.sigma_min), ls_max = std::log(cfg.sigma_max);
          Vec up(4, 0.0);
          for (int i = 0; i < 2; ++i) {
            const std::size_t si = static_cast<std::size_t>(i);
            const double da = in_grad[f.size() + si];
            const double dz = std::abs(z[si]) <= 1.0 ? da : 0.0;
            const double dmu = dz;
            const double dls = dz * h.sigma[si] * draws[bi].actor_xi[i] -
                               alpha / static_cast<double>(batch);
            up[si] = dmu * (1.0 - h.mu[si] * h.mu[si]);
            const double t = std::tanh(raw[2 + si]);
            up[2 + si] = dls * 0.5 * (ls_max - ls_min) * (1.0 - t * t);
          }
          actor.backward(actor_cache, up, w.actor);
        }
      });
    }
    auto actor_grads = actor.zero_grads();
    double logp_mean = 0.0, actor_loss = 0.0;
    for (const auto& w : workers) {
      actor_grads.add(w.actor);
      logp_mean += w.logp_sum;
      actor_loss += w.loss_sum;
    }
    logp_mean /= static_cast<double>(batch);
    actor_loss /= static_cast<double>(batch);
    if (!std::isfinite(actor_loss))
      throw std::runtime_error("sac_train: non-finite actor loss at update " +
                               std::to_string(result.updates));
    actor_opt.update(actor, actor_grads);

    // Temperature: push entropy toward the target.
    log_alpha += cfg.alpha_lr * (logp_mean + cfg.target_entropy);
    log_alpha = std::clamp(log_alpha, std::log(1e-4), std::log(10.0));

    // Soft updates.
    critics.soft_update();
    for (std::size_t li = 0; li < enc_target.layers.size(); ++li) {
      for (std::size_t i = 0; i < enc_target.layers[li].w.size(); ++i)
        enc_target.layers[li].w.data[i] = (1.0 - cfg.tau) * enc_target.layers[li].w.data[i] +
                                          cfg.tau * enc.net.layers[li].w.data[i];
      for (std::size_t i = 0; i < enc_target.layers[li].b.size(); ++i)
        enc_target.layers[li].b.data[i] = (1.0 - cfg.tau) * enc_target.layers[li].b.data[i] +
                                          cfg.tau * enc.net.layers[li].b.data[i];
    }
    ++result.updates;
  };

  // --- environment loop ---
  const auto footprint = env_cfg.vehicle.footprint();
  auto spawn_episode = [&]() {
    const std::size_t scene_idx = rng_env.uniform_index(scenes.size());
    sim::Scenario scene = scenes[scene_idx];
    if (rng_env.uniform() < cfg.curriculum_near_frac) {
      for (int attempt = 0; attempt < 60; ++attempt) {
        const double r = cfg.curriculum_near_radius;
        const geom::Pose probe(scene.slot.target.x + rng_env.uniform(-r, r),
                               rng_env.uniform(-0.5, 4.0),
                               (rng_env.uniform() < 0.5 ? 0.0 : geom::kPi) +
                                   rng_env.uniform(-0.6, 0.6));
        bool clear = true;
        for (const auto& obs : scene.obstacles)
          if (geom::collides(footprint.at(probe), obs)) {
            clear = false;
            break;
          }
        if (!clear) continue;
        scene.start = probe;
        break;
      }
    }
    return std::make_unique<sim::Episode>(std::move(scene), env_cfg);
  };

  long episodes_done = 0;
  double episode_return = 0.0;
  auto episode = spawn_episode();
  std::vector<float> input = to_float(enc.assemble(episode->observation()));

  // Pending expansion actions are executed one per env step and stored as
  // off-policy transitions; they make the success bonus reachable during
  // training just as the evaluation protocol allows.
  std::vector<sim::Action> pending;
  std::size_t pending_next = 0;

  for (long step = 1; step <= cfg.max_env_steps && episodes_done < cfg.pretrain_episodes;
       ++step) {
    sim::Action act{};
    bool scripted = false;
    if (pending_next < pending.size()) {
      act = pending[pending_next++];
      scripted = true;
    } else if (cfg.use_expansion) {
      if (auto seq = sim::analytic_expansion(*episode); seq && !seq->empty()) {
        pending = std::move(*seq);
        pending_next = 0;
        act = pending[pending_next++];
        scripted = true;
      }
    }
    if (!scripted) {
      Vec a_norm(2);
      if (step <= cfg.warmup_steps) {
        a_norm[0] = rng_env.uniform(-1.0, 1.0);
        a_norm[1] = rng_env.uniform(-1.0, 1.0);
      } else {
        a_norm = act_with_policy(to_double(input), rng_env);
      }
      act = denormalize_action(a_norm, env_cfg.vehicle);
    }
    const sim::StepOutcome out = episode->step(act);
    episode_return += out.reward;
    const bool done =
        out.terminal == sim::Terminal::Success || out.terminal == sim::Terminal::Collision;

    std::vector<float> next_input = to_float(enc.assemble(out.next_obs));
    Replay::Item item;
    item.input = std::move(input);
    item.next_input = next_input;
    const Vec executed = normalize_action(episode->actions().back(), env_cfg.vehicle);
    item.action[0] = executed[0];
    item.action[1] = executed[1];
    item.reward = out.reward;
    item.done = done;
    replay.push(std::move(item));

    if (episode->is_terminal()) {
      result.episode_returns.push_back(episode_return);
      episode_return = 0.0;
      ++episodes_done;
      pending.clear();
      pending_next = 0;
      episode = spawn_episode();
      input = to_float(enc.assemble(episode->observation()));
    } else {
      input = std::move(next_input);
    }

    if (step > cfg.warmup_steps && step % cfg.update_every == 0 &&
        replay.items.size() >= batch) {
      update();
    }
    if (progress && step % 1000 == 0) {
      double recent = 0.0;
      const std::size_t n = std::min<std::size_t>(result.episode_returns.size(), 20);
      for (std::size_t i = result.episode_returns.size() - n; i < result.episode_returns.size();
           ++i)
        recent += result.episode_returns[i];
      progress(step, n ? recent / static_cast<double>(n) : 0.0);
    }
    result.env_steps = step;
  }

  result.episodes = episodes_done;
  result.final_alpha = std::exp(log_alpha);
  result.policy.encoder = std::move(enc);
  result.policy.actor = std::move(actor);
  result.critics = std::move(critics);
  return result;
}

// --- demo collection ------------------------------------------------------

std::size_t DemoDataset::pair_count() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.steps.size();
  return n;
}

std::vector<DemoDataset::Transition> DemoDataset::transitions() const {
  std::vector<Transition> out;
  out.reserve(pair_count());
  for (const auto& e : episodes) {
    for (std::size_t t = 0; t < e.steps.size(); ++t) {
      Transition tr;
      tr.obs = &e.steps[t].obs;
      tr.next_obs = t + 1 < e.steps.size() ? &e.steps[t + 1].obs : &e.final_obs;
      tr.action = &e.steps[t].action;
      tr.reward = e.steps[t].reward;
      tr.done = e.steps[t].terminal;
      out.push_back(tr);
    }
  }
  return out;
}

void DemoDataset::save(const std::string& path, const std::string& scenes_path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write demos: " + path);
  json header;
  header["version"] = "drip-demos/1";
  header["scenes"] = scenes_path;
  header["episodes"] = episodes.size();
  header["pairs"] = pair_count();
  out << json{{"header", header}}.dump() << "\n";
  for (const auto& e : episodes) {
    out << json{{"episode", {{"scenario_id", e.scenario_id}}}}.dump() << "\n";
    for (const auto& s : e.steps) {
      json js;
      js["obs"] = sim::observation_to_json(s.obs);
      js["action"] = json::array({s.action.v, s.action.steer});
      js["reward"] = s.reward;
      js["terminal"] = s.terminal;
      out << json{{"step", js}}.dump() << "\n";
    }
    out << json{{"episode_end", {{"final_obs", sim::observation_to_json(e.final_obs)}}}}.dump()
        << "\n";
  }
}

DemoDataset DemoDataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read demos: " + path);
  DemoDataset ds;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.contains("header")) {
      if (j.at("header").at("version").get<std::string>() != "drip-demos/1")
        throw std::runtime_error("unsupported demos version in " + path);
      saw_header = true;
    } else if (j.contains("episode")) {
      DemoEpisode e;
      e.scenario_id = j.at("episode").at("scenario_id").get<std::string>();
      ds.episodes.push_back(std::move(e));
    } else if (j.contains("step")) {
      const auto& js = j.at("step");
      DemoStep s;
      s.obs = sim::observation_from_json(js.at("obs"));
      s.action = {js.at("action")[0].get<double>(), js.at("action")[1].get<double>()};
      s.reward = js.at("reward").get<double>();
      s.terminal = js.at("terminal").get<bool>();
      ds.episodes.back().steps.push_back(std::move(s));
    } else if (j.contains("episode_end")) {
      ds.episodes.back().final_obs =
          sim::observation_from_json(j.at("episode_end").at("final_obs"));
    }
  }
  if (!saw_header) throw std::runtime_error("demos file missing header: " + path);
  return ds;
}

DemoDataset collect_demos(const PolicyBundle& policy, const std::vector<sim::Scenario>& scenes,
                          const sim::EnvConfig& env_cfg, const CollectConfig& cfg,
                          std::uint64_t seed) {
  const std::size_t total = scenes.size() * static_cast<std::size_t>(cfg.rollouts_per_scene);
  std::vector<std::optional<DemoEpisode>> slots(total);
  Rng root(seed);

  parallel_for(total, cfg.threads, [&](std::size_t idx) {
    const std::size_t scene_i = idx / static_cast<std::size_t>(cfg.rollouts_per_scene);
    Rng rng = root.substream("collect", idx);
    sim::Episode episode(scenes[scene_i], env_cfg);

    DemoEpisode demo;
    demo.scenario_id = scenes[scene_i].id;
    sim::Observation obs = episode.observation();

    while (!episode.is_terminal()) {
      bool expanded = false;
      if (cfg.use_expansion) {
        if (const auto seq = sim::analytic_expansion(episode)) {
          for (const auto& a : *seq) {
            if (episode.is_terminal()) break;
            const auto out = episode.step(a);
            demo.steps.push_back(
                {obs, episode.actions().back(), out.reward, out.terminal != sim::Terminal::None});
            obs = out.next_obs;
          }
          expanded = true;
        }
      }
      if (expanded) continue;
      const auto [act, prior] = policy.sample_prior(obs, rng);
      const auto out = episode.step(act);
      demo.steps.push_back(
          {obs, episode.actions().back(), out.reward, out.terminal != sim::Terminal::None});
      obs = out.next_obs;
    }

    if (episode.terminal() == sim::Terminal::Success) {
      demo.final_obs = obs;
      slots[idx] = std::move(demo);
    }
  });

  DemoDataset ds;
  for (auto& slot : slots)
    if (slot) ds.episodes.push_back(std::move(*slot));
  return ds;
}

}  // namespace drip::rl
