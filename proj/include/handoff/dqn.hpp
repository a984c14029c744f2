#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "handoff/net.hpp"
#include "handoff/rng.hpp"

namespace handoff::mgr {

struct DqnConfig {
  long episodes = 300;
  double gamma = 0.99;
  long replay_capacity = 50000;
  int batch_size = 64;
  long target_sync_steps = 1000;  // environment steps between target syncs
  long update_every = 4;          // environment steps per gradient step
  long min_replay = 500;          // warmup before updates start
  double lr = 1e-3;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.6;  // of episodes spent annealing
};

struct CurveRow {
  long episode = 0;
  double reward = 0.0;
  double epsilon = 0.0;
  double loss = 0.0;
};

using LearningCurve = std::vector<CurveRow>;

/// Experience replay ring that shares successor observations: a transition's
/// next state is the observation stored in the following slot. Entries are
/// sampleable once their successor (or terminal flag) is in place.
template <typename Obs>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(long capacity) : capacity_(capacity), entries_(size_t(capacity)) {}

  void push(Obs obs, int action, double reward, bool done) {
    Entry& e = entries_[size_t(next_seq_ % capacity_)];
    e.obs = std::move(obs);
    e.action = action;
    e.reward = reward;
    e.done = done;
    e.seq = next_seq_;
    ++next_seq_;
    filled_ = std::min(filled_ + 1, capacity_);
  }

  long size() const { return filled_; }

  /// Sample one valid transition index; returns false if none are valid.
  bool sample(Rng& rng, long* index) const {
    if (filled_ == 0) return false;
    for (int tries = 0; tries < 64; ++tries) {
      const long i = long(rng.uniform_index(uint64_t(filled_)));
      const long slot = (next_seq_ - filled_ + i) % capacity_;
      if (valid(slot)) {
        *index = slot;
        return true;
      }
    }
    return false;
  }

  const Obs& obs(long slot) const { return entries_[size_t(slot)].obs; }
  int action(long slot) const { return entries_[size_t(slot)].action; }
  double reward(long slot) const { return entries_[size_t(slot)].reward; }
  bool done(long slot) const { return entries_[size_t(slot)].done; }
  const Obs& next_obs(long slot) const { return entries_[size_t((slot + 1) % capacity_)].obs; }

 private:
  struct Entry {
    Obs obs{};
    int action = 0;
    double reward = 0.0;
    bool done = false;
    long seq = -1;
  };

  bool valid(long slot) const {
    const Entry& e = entries_[size_t(slot)];
    if (e.seq < 0) return false;
    if (e.done) return true;
    const Entry& succ = entries_[size_t((slot + 1) % capacity_)];
    return succ.seq == e.seq + 1;
  }

  long capacity_;
  std::vector<Entry> entries_;
  long next_seq_ = 0;
  long filled_ = 0;
};

/// One Q-learning minibatch update. Returns the MSE loss on chosen actions.
template <typename T, typename Model, typename Obs>
double dqn_update(Model& online, Model& target, const ReplayBuffer<Obs>& replay,
                  const DqnConfig& cfg, Rng& rng, net::Adam<T>& optimizer) {
  std::vector<long> idx;
  idx.reserve(size_t(cfg.batch_size));
  for (int i = 0; i < cfg.batch_size; ++i) {
    long slot = 0;
    if (!replay.sample(rng, &slot)) return 0.0;
    idx.push_back(slot);
  }
  const int n = int(idx.size());

  std::vector<const Obs*> next_batch;
  next_batch.reserve(size_t(n));
  for (long slot : idx) next_batch.push_back(&replay.next_obs(slot));
  const net::Mat<T> q_next = target.forward(next_batch, /*train=*/false);

  std::vector<double> targets(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const long slot = idx[size_t(i)];
    double y = replay.reward(slot);
    if (!replay.done(slot)) {
      double best = double(q_next.row(i)[0]);
      for (int a = 1; a < q_next.features; ++a) best = std::max(best, double(q_next.row(i)[a]));
      y += cfg.gamma * best;
    }
    targets[size_t(i)] = y;
  }

  std::vector<const Obs*> batch;
  batch.reserve(size_t(n));
  for (long slot : idx) batch.push_back(&replay.obs(slot));
  const net::Mat<T> q = online.forward(batch, /*train=*/true);

  net::Mat<T> grad(n, q.features);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int a = replay.action(idx[size_t(i)]);
    const double diff = double(q.row(i)[a]) - targets[size_t(i)];
    loss += diff * diff / n;
    grad.row(i)[a] = T(2.0 * diff / n);
  }
  if (!std::isfinite(loss)) throw net::TrainingDivergedError();

  optimizer.zero_grad();
  online.backward(grad);
  optimizer.step();
  return loss;
}

/// Experience-replay Q-learning with a periodically synced target network
/// and linear epsilon annealing. `Env` supplies `Obs reset(uint64_t seed)`
/// and `Step step(int action)`; rewards arrive only on terminal steps in the
/// delegation environment, but the loop is agnostic to that.
template <typename T, typename Model, typename Env>
LearningCurve train_dqn(Model& online, Model& target, Env& env, const DqnConfig& cfg,
                        uint64_t seed,
                        const std::function<void(const CurveRow&)>& on_episode = nullptr) {
  Rng rng(derive_seed(seed, 0x747261696eULL));
  ReplayBuffer<typename Env::Obs> replay(cfg.replay_capacity);
  net::Adam<T> optimizer(online.params(), cfg.lr);
  target.sync_from(online);

  LearningCurve curve;
  long global_step = 0;
  const long anneal_episodes =
      std::max<long>(1, long(std::ceil(double(cfg.episodes) * cfg.epsilon_fraction)));

  for (long episode = 0; episode < cfg.episodes; ++episode) {
    const double frac = std::min(1.0, double(episode) / double(anneal_episodes));
    const double epsilon = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;

    typename Env::Obs obs = env.reset(derive_seed(seed, uint64_t(episode) + 1));
    double episode_reward = 0.0;
    double loss_sum = 0.0;
    long loss_count = 0;
    bool done = false;

    while (!done) {
      int action;
      if (rng.uniform() < epsilon) {
        action = int(rng.uniform_index(uint64_t(online.n_actions())));
      } else {
        std::vector<const typename Env::Obs*> single{&obs};
        const net::Mat<T> q = online.forward(single, /*train=*/false);
        action = 0;
        for (int a = 1; a < q.features; ++a)
          if (q.row(0)[a] > q.row(0)[action]) action = a;
      }

      auto step = env.step(action);
      episode_reward += step.reward;
      replay.push(std::move(obs), action, step.reward, step.done);
      obs = std::move(step.obs);
      done = step.done;
      ++global_step;

      if (replay.size() >= cfg.min_replay && global_step % cfg.update_every == 0) {
        loss_sum += dqn_update<T>(online, target, replay, cfg, rng, optimizer);
        ++loss_count;
      }
      if (global_step % cfg.target_sync_steps == 0) target.sync_from(online);
    }

    CurveRow row;
    row.episode = episode;
    row.reward = episode_reward;
    row.epsilon = epsilon;
    row.loss = loss_count > 0 ? loss_sum / double(loss_count) : 0.0;
    curve.push_back(row);
    if (on_episode) on_episode(row);
  }
  return curve;
}

/// Plain MLP Q-model over flat float observations; fulfills the same model
/// concept as the manager network (used by small-scale diagnostics).
template <typename T>
class MlpQNet {
 public:
  using Obs = std::vector<T>;

  MlpQNet(int in_dim, const std::vector<int>& hidden, int actions, uint64_t seed, int threads = 1)
      : in_dim_(in_dim), actions_(actions) {
    Rng rng(seed);
    int prev = in_dim;
    for (int h : hidden) {
      seq_.add(std::make_unique<net::Linear<T>>(prev, h, rng, threads));
      seq_.add(std::make_unique<net::Relu<T>>());
      prev = h;
    }
    seq_.add(std::make_unique<net::Linear<T>>(prev, actions, rng, threads));
  }

  int n_actions() const { return actions_; }

  net::Mat<T> forward(const std::vector<const Obs*>& batch, bool train) {
    net::Mat<T> in(int(batch.size()), in_dim_);
    for (int s = 0; s < in.n; ++s)
      std::copy(batch[size_t(s)]->begin(), batch[size_t(s)]->end(), in.row(s));
    return seq_.forward(in, train);
  }

  void backward(const net::Mat<T>& grad) { seq_.backward(grad); }

  std::vector<net::ParamView<T>> params() { return seq_.params(); }

  void sync_from(MlpQNet& src) { net::copy_weights(seq_, src.seq_); }

 private:
  int in_dim_;
  int actions_;
  net::Sequential<T> seq_;
};

}  // namespace handoff::mgr
