#include <catch2/catch_amalgamated.hpp>

#include "handoff/net.hpp"
#include "handoff/qnet.hpp"
#include "handoff/dqn.hpp"
#include "handoff/rng.hpp"

#include <cstdio>

using namespace handoff;
using namespace handoff::net;

namespace {

mgr::QNetArch micro_arch() {
  mgr::QNetArch a;
  a.image_res = 9;
  a.context_dim = 3;
  a.conv_channels = {2, 3};
  a.kernel = 3;
  a.stride = 2;
  a.hidden = {5};
  a.actions = 2;
  return a;
}

mgr::ManagerObs random_obs(Rng& rng, const mgr::QNetArch& arch) {
  mgr::ManagerObs o;
  const int n = 3 * arch.image_res * arch.image_res;
  o.human.resize(size_t(n));
  o.ai.resize(size_t(n));
  for (auto& v : o.human) v = uint8_t(rng.uniform_index(256));
  for (auto& v : o.ai) v = uint8_t(rng.uniform_index(256));
  o.context.resize(size_t(arch.context_dim));
  for (auto& v : o.context) v = float(rng.uniform(-1.0, 1.0));
  return o;
}

/// Weighted-sum loss L = sum_ij w_ij * Q_ij; dL/dQ = w.
template <typename Model, typename Obs>
double weighted_loss(Model& model, const std::vector<const Obs*>& batch, const Mat<double>& w) {
  const Mat<double> q = model.forward(batch, /*train=*/true);
  double loss = 0.0;
  for (size_t i = 0; i < q.data.size(); ++i) loss += w.data[i] * q.data[i];
  return loss;
}

template <typename Model, typename Obs>
void check_gradients(Model& model, const std::vector<const Obs*>& batch, uint64_t seed) {
  Rng rng(seed);
  const Mat<double> q0 = model.forward(batch, true);
  Mat<double> w(q0.n, q0.features);
  for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);

  auto params = model.params();
  for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
  model.forward(batch, true);
  model.backward(w);

  const double h = 1e-5;
  long checked = 0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& val = *params[pi].value;
    auto& grad = *params[pi].grad;
    for (size_t k = 0; k < val.size(); ++k) {
      const double keep = val[k];
      val[k] = keep + h;
      const double fp = weighted_loss(model, batch, w);
      val[k] = keep - h;
      const double fm = weighted_loss(model, batch, w);
      val[k] = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = grad[k];
      INFO("param tensor " << pi << " index " << k << " analytic " << analytic << " numeric "
                           << numeric);
      // Structurally zero gradients (e.g. conv bias ahead of batch norm)
      // drown in finite-difference noise; accept them on absolute terms.
      if (std::abs(analytic) < 1e-7 && std::abs(numeric) < 1e-7) {
        ++checked;
        continue;
      }
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      REQUIRE(std::abs(analytic - numeric) / denom <= 1e-4);
      ++checked;
    }
  }
  REQUIRE(checked > 50);
}

}  // namespace

TEST_CASE("linear layer matches a hand computation") {
  Rng rng(1);
  Linear<double> lin(2, 2, rng, 1);
  auto params = lin.params();
  *params[0].value = {1.0, 2.0, 3.0, 4.0};  // row-major [out][in]
  *params[1].value = {0.5, -0.5};
  Mat<double> in(1, 2);
  in.row(0)[0] = 10.0;
  in.row(0)[1] = 20.0;
  Mat<double> out;
  lin.forward(in, out, true);
  REQUIRE_THAT(out.row(0)[0], Catch::Matchers::WithinAbs(10.0 + 40.0 + 0.5, 1e-12));
  REQUIRE_THAT(out.row(0)[1], Catch::Matchers::WithinAbs(30.0 + 80.0 - 0.5, 1e-12));
}

TEST_CASE("conv layer matches a hand computation") {
  Rng rng(2);
  Conv2d<double> conv(1, 3, 3, 1, 3, 2, rng, 1);
  auto params = conv.params();
  std::vector<double> w(9);
  for (int i = 0; i < 9; ++i) w[size_t(i)] = i + 1;
  *params[0].value = w;
  *params[1].value = {0.25};
  Mat<double> in(1, 9);
  for (int i = 0; i < 9; ++i) in.row(0)[i] = 10.0 + i;
  Mat<double> out;
  conv.forward(in, out, true);
  double expect = 0.25;
  for (int i = 0; i < 9; ++i) expect += (i + 1) * (10.0 + i);
  REQUIRE(out.features == 1);
  REQUIRE_THAT(out.row(0)[0], Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("batch norm normalizes over the batch in training mode") {
  BatchNorm<double> bn(1, 4);
  Mat<double> in(3, 4);
  Rng rng(3);
  for (auto& v : in.data) v = rng.uniform(-5.0, 5.0);
  Mat<double> out;
  bn.forward(in, out, true);
  double mean = 0.0, var = 0.0;
  for (double v : out.data) mean += v;
  mean /= double(out.data.size());
  for (double v : out.data) var += (v - mean) * (v - mean);
  var /= double(out.data.size());
  REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-9));
  REQUIRE_THAT(var, Catch::Matchers::WithinAbs(1.0, 1e-2));  // eps-shrunk
}

TEST_CASE("batch norm inference uses running statistics deterministically") {
  BatchNorm<double> bn(2, 2);
  Rng rng(4);
  for (int it = 0; it < 20; ++it) {
    Mat<double> in(5, 4);
    for (auto& v : in.data) v = rng.uniform(0.0, 3.0);
    Mat<double> out;
    bn.forward(in, out, true);
  }
  Mat<double> in(1, 4);
  for (auto& v : in.data) v = 1.5;
  Mat<double> a, b;
  bn.forward(in, a, false);
  bn.forward(in, b, false);
  REQUIRE(a.data == b.data);
}

TEST_CASE("finite differences confirm gradients through the full manager net") {
  mgr::ManagerQNet<double> model(micro_arch(), 71, 1);
  Rng rng(5);
  std::vector<mgr::ManagerObs> storage;
  for (int i = 0; i < 3; ++i) storage.push_back(random_obs(rng, micro_arch()));
  std::vector<const mgr::ManagerObs*> batch;
  for (const auto& o : storage) batch.push_back(&o);
  check_gradients(model, batch, 99);
}

TEST_CASE("finite differences confirm gradients through the MLP") {
  mgr::MlpQNet<double> model(4, {6, 5}, 3, 11, 1);
  Rng rng(6);
  std::vector<std::vector<double>> storage;
  for (int i = 0; i < 4; ++i) {
    std::vector<double> v(4);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    storage.push_back(v);
  }
  std::vector<const std::vector<double>*> batch;
  for (const auto& o : storage) batch.push_back(&o);
  check_gradients(model, batch, 100);
}

TEST_CASE("zero final layer collapses Q to its bias") {
  mgr::ManagerQNet<double> model(micro_arch(), 7, 1);
  auto params = model.params();
  auto& wlast = *params[params.size() - 2].value;
  auto& blast = *params[params.size() - 1].value;
  std::fill(wlast.begin(), wlast.end(), 0.0);
  blast = {0.3, -0.7};
  Rng rng(8);
  const mgr::ManagerObs obs = random_obs(rng, micro_arch());
  const auto q = model.q_values(obs);
  REQUIRE_THAT(q[0], Catch::Matchers::WithinAbs(0.3, 1e-12));
  REQUIRE_THAT(q[1], Catch::Matchers::WithinAbs(-0.7, 1e-12));
}

TEST_CASE("identical inputs produce identical Q values") {
  mgr::ManagerQNet<float> model(micro_arch(), 13, 2);
  Rng rng(9);
  const mgr::ManagerObs obs = random_obs(rng, micro_arch());
  REQUIRE(model.q_values(obs) == model.q_values(obs));
}

TEST_CASE("two nets with the same seed agree; different seeds differ") {
  mgr::ManagerQNet<float> a(micro_arch(), 21, 1);
  mgr::ManagerQNet<float> b(micro_arch(), 21, 2);
  mgr::ManagerQNet<float> c(micro_arch(), 22, 1);
  Rng rng(10);
  const mgr::ManagerObs obs = random_obs(rng, micro_arch());
  REQUIRE(a.q_values(obs) == b.q_values(obs));
  REQUIRE(a.q_values(obs) != c.q_values(obs));
}

TEST_CASE("sync_from copies weights exactly") {
  mgr::ManagerQNet<float> online(micro_arch(), 31, 1);
  mgr::ManagerQNet<float> target(micro_arch(), 32, 1);
  Rng rng(11);
  const mgr::ManagerObs obs = random_obs(rng, micro_arch());
  REQUIRE(online.q_values(obs) != target.q_values(obs));
  target.sync_from(online);
  REQUIRE(online.q_values(obs) == target.q_values(obs));
}

TEST_CASE("checkpoint round trip restores Q outputs bit-exactly") {
  const std::string path = "/tmp/handoff_qnet_test.ckpt";
  mgr::ManagerQNet<float> a(micro_arch(), 41, 1);
  a.save(path);
  mgr::ManagerQNet<float> b(micro_arch(), 999, 1);
  b.load(path);
  Rng rng(12);
  for (int i = 0; i < 5; ++i) {
    const mgr::ManagerObs obs = random_obs(rng, micro_arch());
    REQUIRE(a.q_values(obs) == b.q_values(obs));
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint with a different architecture is rejected") {
  const std::string path = "/tmp/handoff_qnet_mismatch.ckpt";
  mgr::ManagerQNet<float> a(micro_arch(), 51, 1);
  a.save(path);
  mgr::QNetArch other = micro_arch();
  other.hidden = {6};
  mgr::ManagerQNet<float> b(other, 52, 1);
  REQUIRE_THROWS_AS(b.load(path), mgr::ShapeError);
  std::remove(path.c_str());
}

TEST_CASE("adam reduces a quadratic loss") {
  // Minimize ||x - t||^2 through the optimizer plumbing.
  std::vector<double> x{5.0, -3.0, 2.0};
  std::vector<double> g(3, 0.0);
  Adam<double> adam({{&x, &g}}, 0.05);
  const std::vector<double> t{1.0, 1.0, 1.0};
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 400; ++it) {
    double loss = 0.0;
    for (int i = 0; i < 3; ++i) {
      g[size_t(i)] = 2.0 * (x[size_t(i)] - t[size_t(i)]);
      loss += (x[size_t(i)] - t[size_t(i)]) * (x[size_t(i)] - t[size_t(i)]);
    }
    if (it == 0) first = loss;
    last = loss;
    adam.step();
  }
  REQUIRE(last < 1e-3);
  REQUIRE(first > 1.0);
}

TEST_CASE("replay buffer shares successor observations and respects validity") {
  mgr::ReplayBuffer<int> replay(4);
  Rng rng(13);
  long idx = 0;
  REQUIRE_FALSE(replay.sample(rng, &idx));
  replay.push(10, 0, 0.0, false);
  // Newest nonterminal entry has no successor yet.
  REQUIRE_FALSE(replay.sample(rng, &idx));
  replay.push(11, 1, 0.0, false);
  REQUIRE(replay.sample(rng, &idx));
  REQUIRE(replay.obs(idx) == 10);
  REQUIRE(replay.next_obs(idx) == 11);
  replay.push(12, 0, -5.0, true);  // terminal: sampleable without successor
  replay.push(20, 1, 0.0, false);  // new episode
  replay.push(21, 0, 0.0, false);  // wraps, overwrites obs 10
  int seen_terminal = 0;
  for (int i = 0; i < 200; ++i) {
    REQUIRE(replay.sample(rng, &idx));
    if (replay.done(idx)) {
      ++seen_terminal;
      REQUIRE(replay.obs(idx) == 12);
    } else {
      // Valid nonterminal pairs only: (11->12) or (20->21).
      REQUIRE((replay.obs(idx) == 11 || replay.obs(idx) == 20));
      REQUIRE(replay.next_obs(idx) == replay.obs(idx) + 1);
    }
  }
  REQUIRE(seen_terminal > 0);
}
