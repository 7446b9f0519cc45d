#include <doctest.h>

#include <filesystem>

#include "actpc/error.hpp"
#include "actpc/pc_net.hpp"
#include "oracles.hpp"

using namespace actpc;

namespace {
PCConfig small_config(std::uint64_t seed = 1) {
  PCConfig c;
  c.layers = {{4, Activation::identity}, {3, Activation::tanh}, {2, Activation::tanh}};
  c.eta_z = 0.05;
  c.eta_w = 0.01;
  c.seed = seed;
  return c;
}
}  // namespace

TEST_SUITE("pc_net") {
  TEST_CASE("config validation") {
    PCConfig c;
    CHECK_THROWS_AS(PCNetwork{c}, ConfigError);
    c.layers = {{3, Activation::tanh}};
    CHECK_THROWS_AS(PCNetwork{c}, ConfigError);
    c = small_config();
    c.eta_z = -1.0;
    CHECK_THROWS_AS(PCNetwork{c}, ConfigError);
  }

  TEST_CASE("construction is seed-deterministic") {
    CHECK(PCNetwork(small_config(3)) == PCNetwork(small_config(3)));
    CHECK_FALSE(PCNetwork(small_config(3)) == PCNetwork(small_config(4)));
  }

  TEST_CASE("gradients with a reward term match central differences") {
    PCNetwork net(small_config(5));
    std::mt19937_64 rng(5);
    for (int l = 0; l < net.num_layers(); ++l) net.state(l) = gaussian_vec(rng, net.dim(l));
    const Vec goal = gaussian_vec(rng, 2);
    RewardTerm r;
    r.alpha = 0.3;
    r.value = [&](const PCNetwork& n) { return -(n.state(2) - goal).squaredNorm(); };
    r.gradient = [&](const PCNetwork& n) {
      Gradients g;
      g.states = {Vec::Zero(4), Vec::Zero(3), -2.0 * (n.state(2) - goal)};
      return g;
    };
    const Gradients g = loss_gradients(net, &r);
    const Vec at = net.state(2);
    const Vec fd = oracle::central_difference(
        [&](const Vec& v) {
          net.state(2) = v;
          const double f = total_loss(net, &r);
          net.state(2) = at;
          return f;
        },
        at);
    CHECK((fd - g.states[2]).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("micro-iterations lower the prediction loss") {
    PCNetwork net(small_config(6));
    std::mt19937_64 rng(6);
    const Vec x = gaussian_vec(rng, 4);
    MicroOptions o;
    o.iterations = 50;
    const auto r = micro_iterate(net, x, o);
    CHECK(r.trace.size() == 51);
    CHECK(r.trace.back() < r.trace.front());
    CHECK(net.state(0) == x);  // bottom stays clamped
  }

  TEST_CASE("settle mode leaves weights alone until the last iteration") {
    PCNetwork a(small_config(7));
    const auto w0 = a.weights();
    std::mt19937_64 rng(7);
    const Vec x = gaussian_vec(rng, 4);
    MicroOptions o;
    o.iterations = 5;
    o.order = UpdateOrder::settle_states_first;
    o.update_weights = false;
    micro_iterate(a, x, o);
    CHECK(a.weights() == w0);
    o.update_weights = true;
    micro_iterate(a, x, o);
    CHECK_FALSE(a.weights() == w0);
  }

  TEST_CASE("clamped top stays fixed") {
    PCNetwork net(small_config(8));
    Vec top(2);
    top << 0.3, -0.2;
    net.clamp_top(top);
    MicroOptions o;
    o.iterations = 10;
    micro_iterate(net, Vec::Ones(4), o);
    CHECK(net.state(2) == top);
  }

  TEST_CASE("predict_from_top is a pure feed-forward pass") {
    PCNetwork net(small_config(9));
    Vec top(2);
    top << 0.5, 0.1;
    const Vec h = (net.weight(1) * top).array().tanh().matrix();
    const Vec x = net.weight(0) * h;
    CHECK((net.predict_from_top(top) - x).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("divergence is reported") {
    PCConfig c = small_config(10);
    c.eta_z = 1e6;
    c.eta_w = 1e6;
    PCNetwork net(c);
    MicroOptions o;
    o.iterations = 200;
    CHECK_THROWS_AS(micro_iterate(net, Vec::Constant(4, 10.0), o), DivergenceError);
  }

  TEST_CASE("checkpoint round trip is bit-exact") {
    PCNetwork net(small_config(11));
    micro_iterate(net, Vec::Ones(4), MicroOptions{3});
    const auto path = std::filesystem::temp_directory_path() / "actpc_ckpt.bin";
    save_checkpoint(net, path);
    CHECK(load_checkpoint(path) == net);
  }

  TEST_CASE("config json round trip") {
    auto c = small_config(12);
    c.order = UpdateOrder::settle_states_first;
    const auto back = pc_config_from_json(pc_config_to_json(c));
    CHECK(back.layers.size() == 3);
    CHECK(back.order == UpdateOrder::settle_states_first);
    CHECK(back.seed == 12);
  }
}
