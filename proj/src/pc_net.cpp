#include "actpc/pc_net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "actpc/error.hpp"
#include "actpc/io.hpp"

namespace actpc {

void PCConfig::validate() const {
  if (layers.size() < 2) throw ConfigError("a network needs at least two layers");
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (layers[l].dim < 1)
      throw ConfigError("layer " + std::to_string(l) + " has non-positive dimension");
  if (!(eta_z >= 0.0) || !(eta_w >= 0.0) || !std::isfinite(eta_z) || !std::isfinite(eta_w))
    throw ConfigError("step sizes must be finite and non-negative");
  if (top_prior && top_prior->size() != layers.back().dim)
    throw ConfigError("top prior dimension does not match the top layer");
}

PCNetwork::PCNetwork(PCConfig config) : config_(std::move(config)) {
  config_.validate();
  const int L = static_cast<int>(config_.layers.size());
  Rng rng(config_.seed);
  weights_.reserve(L - 1);
  for (int l = 0; l + 1 < L; ++l) {
    const int out = config_.layers[l].dim;
    const int in = config_.layers[l + 1].dim;
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-s, s);
    Mat w(out, in);
    for (int j = 0; j < in; ++j)
      for (int i = 0; i < out; ++i) w(i, j) = u(rng);
    weights_.push_back(std::move(w));
  }
  states_.reserve(L);
  for (int l = 0; l < L; ++l) states_.push_back(Vec::Zero(config_.layers[l].dim));
}

void PCNetwork::set_step_sizes(double eta_z, double eta_w) {
  config_.eta_z = eta_z;
  config_.eta_w = eta_w;
  config_.validate();
}

Vec PCNetwork::top_prior() const {
  return config_.top_prior ? *config_.top_prior : Vec::Zero(config_.layers.back().dim);
}

void PCNetwork::clamp_bottom(const Vec& input) {
  if (input.size() != dim(0))
    throw ConfigError("input dimension " + std::to_string(input.size()) +
                      " does not match bottom layer " + std::to_string(dim(0)));
  states_.front() = input;
}

void PCNetwork::clamp_top(const Vec& value) {
  if (value.size() != dim(num_layers() - 1))
    throw ConfigError("top clamp dimension does not match the top layer");
  states_.back() = value;
  top_clamped_ = true;
}

Vec PCNetwork::sweep_down() {
  for (int l = num_layers() - 2; l >= 1; --l) {
    Vec a = weights_[l] * states_[l + 1];
    states_[l] = a.unaryExpr([act = activation(l)](double x) { return apply_activation(act, x); });
  }
  Vec a = weights_[0] * states_[1];
  return a.unaryExpr([act = activation(0)](double x) { return apply_activation(act, x); });
}

Vec PCNetwork::predict_from_top(const Vec& top) const {
  if (top.size() != dim(num_layers() - 1)) throw ConfigError("top dimension mismatch");
  Vec z = top;
  for (int l = num_layers() - 2; l >= 0; --l) {
    Vec a = weights_[l] * z;
    z = a.unaryExpr([act = activation(l)](double x) { return apply_activation(act, x); });
  }
  return z;
}

std::size_t PCNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += static_cast<std::size_t>(w.size());
  return n;
}

void PCNetwork::check_consistent() const {
  const int L = num_layers();
  if (static_cast<int>(weights_.size()) != L - 1) throw ConfigError("weight count mismatch");
  for (int l = 0; l + 1 < L; ++l) {
    if (weights_[l].rows() != dim(l) || weights_[l].cols() != dim(l + 1))
      throw ConfigError("W[" + std::to_string(l) + "] must be " + std::to_string(dim(l)) + "x" +
                        std::to_string(dim(l + 1)));
  }
  for (int l = 0; l < L; ++l)
    if (states_[l].size() != dim(l))
      throw ConfigError("state " + std::to_string(l) + " has wrong dimension");
}

bool PCNetwork::operator==(const PCNetwork& other) const {
  if (weights_.size() != other.weights_.size() || states_.size() != other.states_.size())
    return false;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    if (weights_[l].rows() != other.weights_[l].rows() ||
        weights_[l].cols() != other.weights_[l].cols() || weights_[l] != other.weights_[l])
      return false;
  for (std::size_t l = 0; l < states_.size(); ++l)
    if (states_[l].size() != other.states_[l].size() || states_[l] != other.states_[l])
      return false;
  return true;
}

double apply_activation(Activation a, double x) {
  return a == Activation::tanh ? std::tanh(x) : x;
}

double activation_derivative(Activation a, double x) {
  if (a == Activation::identity) return 1.0;
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

std::vector<Vec> forward_predict(const PCNetwork& net) {
  net.check_consistent();
  const int L = net.num_layers();
  std::vector<Vec> pred(L);
  for (int l = 0; l + 1 < L; ++l) {
    Vec a = net.weight(l) * net.state(l + 1);
    pred[l] = a.unaryExpr([act = net.activation(l)](double x) { return apply_activation(act, x); });
  }
  pred[L - 1] = net.top_prior();
  return pred;
}

ErrorField compute_errors(const PCNetwork& net, const std::vector<Vec>& predictions) {
  const int L = net.num_layers();
  if (static_cast<int>(predictions.size()) != L) throw ConfigError("prediction count mismatch");
  ErrorField field;
  field.errors.reserve(L);
  for (int l = 0; l < L; ++l) {
    if (predictions[l].size() != net.dim(l)) throw ConfigError("prediction dimension mismatch");
    field.errors.push_back(net.state(l) - predictions[l]);
    field.loss += field.errors.back().squaredNorm();
  }
  return field;
}

ErrorField compute_errors(const PCNetwork& net) { return compute_errors(net, forward_predict(net)); }

Gradients loss_gradients(const PCNetwork& net, const RewardTerm* reward) {
  net.check_consistent();
  const int L = net.num_layers();
  Gradients g;
  g.states.resize(L);
  g.weights.resize(L - 1);

  std::vector<Vec> delta(L - 1);  // act'(a[l]) * e[l]
  std::vector<Vec> err(L);
  for (int l = 0; l + 1 < L; ++l) {
    Vec a = net.weight(l) * net.state(l + 1);
    const auto act = net.activation(l);
    Vec pred = a.unaryExpr([act](double x) { return apply_activation(act, x); });
    err[l] = net.state(l) - pred;
    delta[l] = a.unaryExpr([act](double x) { return activation_derivative(act, x); })
                   .cwiseProduct(err[l]);
  }
  err[L - 1] = net.state(L - 1) - net.top_prior();

  for (int l = 0; l < L; ++l) {
    g.states[l] = 2.0 * err[l];
    if (l >= 1) g.states[l] -= 2.0 * net.weight(l - 1).transpose() * delta[l - 1];
  }
  for (int l = 0; l + 1 < L; ++l) g.weights[l] = -2.0 * delta[l] * net.state(l + 1).transpose();

  if (reward && reward->alpha != 0.0 && reward->gradient) {
    Gradients r = reward->gradient(net);
    for (int l = 0; l < L && l < static_cast<int>(r.states.size()); ++l)
      if (r.states[l].size() == g.states[l].size()) g.states[l] -= reward->alpha * r.states[l];
    for (int l = 0; l + 1 < L && l < static_cast<int>(r.weights.size()); ++l)
      if (r.weights[l].size() == g.weights[l].size()) g.weights[l] -= reward->alpha * r.weights[l];
  }
  return g;
}

double total_loss(const PCNetwork& net, const RewardTerm* reward) {
  double loss = compute_errors(net).loss;
  if (reward && reward->alpha != 0.0 && reward->value) loss -= reward->alpha * reward->value(net);
  return loss;
}

namespace {

void check_finite(const PCNetwork& net, int iteration) {
  for (int l = 0; l < net.num_layers(); ++l)
    if (!net.state(l).allFinite())
      throw DivergenceError("non-finite state at iteration " + std::to_string(iteration) +
                                ", layer " + std::to_string(l),
                            iteration, l);
  for (int l = 0; l + 1 < net.num_layers(); ++l)
    if (!net.weight(l).allFinite())
      throw DivergenceError("non-finite weight at iteration " + std::to_string(iteration) +
                                ", layer " + std::to_string(l),
                            iteration, l);
}

void step_states(PCNetwork& net, const Gradients& g) {
  const double eta = net.config().eta_z;
  const int top_free = net.top_clamped() ? net.num_layers() - 1 : net.num_layers();
  for (int l = 1; l < top_free; ++l) net.state(l) -= eta * g.states[l];
}

void step_weights(PCNetwork& net, const Gradients& g, const Preconditioner* pre) {
  const double eta = net.config().eta_w;
  for (int l = 0; l + 1 < net.num_layers(); ++l) {
    const Mat* p = (pre && l < static_cast<int>(pre->size())) ? &(*pre)[l] : nullptr;
    if (p == nullptr || p->size() == 0) {
      net.weight(l) -= eta * g.weights[l];
      continue;
    }
    const Eigen::Index m = g.weights[l].size();
    if (p->rows() != m || p->cols() != m)
      throw ConfigError("preconditioner for layer " + std::to_string(l) + " must be " +
                        std::to_string(m) + "x" + std::to_string(m));
    Vec flat = Eigen::Map<const Vec>(g.weights[l].data(), m);
    Vec step = (*p) * flat;
    net.weight(l) -= eta * Eigen::Map<const Mat>(step.data(), g.weights[l].rows(),
                                                 g.weights[l].cols());
  }
}

}  // namespace

MicroResult micro_iterate(PCNetwork& net, const Vec& input, const MicroOptions& options) {
  if (options.iterations < 1) throw ConfigError("micro_iterate needs at least one iteration");
  net.clamp_bottom(input);
  net.check_consistent();
  const UpdateOrder order = options.order.value_or(net.config().order);

  MicroResult result;
  result.trace.reserve(options.iterations + 1);
  result.trace.push_back(compute_errors(net).loss);
  for (int it = 1; it <= options.iterations; ++it) {
    Gradients g = loss_gradients(net, options.reward);
    if (order == UpdateOrder::simultaneous) {
      step_states(net, g);
      if (options.update_weights) step_weights(net, g, options.preconditioner);
    } else {
      step_states(net, g);
      if (options.update_weights && it == options.iterations) {
        check_finite(net, it);
        step_weights(net, loss_gradients(net, options.reward), options.preconditioner);
      }
    }
    check_finite(net, it);
    result.trace.push_back(compute_errors(net).loss);
  }
  result.final_errors = compute_errors(net);
  return result;
}

namespace {

std::string activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace

PCConfig pc_config_from_json(const nlohmann::json& j) {
  io::require_known_keys(j, {"dims", "activation", "activations", "eta_z", "eta_w", "seed",
                             "top_prior", "order"},
                         "network config");
  PCConfig c;
  if (!j.contains("dims")) throw ConfigError("network config: 'dims' is required");
  const auto dims = j.at("dims").get<std::vector<int>>();
  std::vector<Activation> acts(dims.size(), parse_activation(j.value("activation", "tanh")));
  if (j.contains("activations")) {
    const auto names = j.at("activations").get<std::vector<std::string>>();
    if (names.size() != dims.size())
      throw ConfigError("network config: 'activations' must have one entry per layer");
    for (std::size_t i = 0; i < names.size(); ++i) acts[i] = parse_activation(names[i]);
  }
  for (std::size_t i = 0; i < dims.size(); ++i) c.layers.push_back({dims[i], acts[i]});
  c.eta_z = j.value("eta_z", c.eta_z);
  c.eta_w = j.value("eta_w", c.eta_w);
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("top_prior")) c.top_prior = io::vec_from_json(j.at("top_prior"));
  if (j.contains("order")) {
    const auto o = j.at("order").get<std::string>();
    if (o == "simultaneous")
      c.order = UpdateOrder::simultaneous;
    else if (o == "settle_states_first")
      c.order = UpdateOrder::settle_states_first;
    else
      throw ConfigError("network config: unknown order '" + o + "'");
  }
  c.validate();
  return c;
}

nlohmann::json pc_config_to_json(const PCConfig& c) {
  nlohmann::json j;
  std::vector<int> dims;
  std::vector<std::string> acts;
  for (const auto& l : c.layers) {
    dims.push_back(l.dim);
    acts.push_back(activation_name(l.activation));
  }
  j["dims"] = dims;
  j["activations"] = acts;
  j["eta_z"] = c.eta_z;
  j["eta_w"] = c.eta_w;
  j["seed"] = c.seed;
  if (c.top_prior) j["top_prior"] = io::to_json(*c.top_prior);
  j["order"] = c.order == UpdateOrder::simultaneous ? "simultaneous" : "settle_states_first";
  return j;
}

void save_checkpoint(const PCNetwork& net, const std::filesystem::path& path) {
  nlohmann::json header = pc_config_to_json(net.config());
  header["format"] = "actpc-pcnet-v1";
  header["top_clamped"] = net.top_clamped();
  std::size_t count = net.parameter_count();
  for (const auto& s : net.states()) count += static_cast<std::size_t>(s.size());
  header["payload_doubles"] = count;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  io::write_header(out, header);
  for (const auto& w : net.weights()) io::write_f64_le(out, {w.data(), static_cast<size_t>(w.size())});
  for (const auto& s : net.states()) io::write_f64_le(out, {s.data(), static_cast<size_t>(s.size())});
}

PCNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  nlohmann::json header = io::read_header(in);
  if (header.value("format", "") != "actpc-pcnet-v1") throw ConfigError("not a pcnet checkpoint");
  const bool top_clamped = header.value("top_clamped", false);
  const auto count = header.at("payload_doubles").get<std::size_t>();
  header.erase("format");
  header.erase("top_clamped");
  header.erase("payload_doubles");
  PCNetwork net(pc_config_from_json(header));
  std::size_t expected = net.parameter_count();
  for (const auto& s : net.states()) expected += static_cast<std::size_t>(s.size());
  if (count != expected) throw ConfigError("checkpoint payload size does not match header dims");
  auto values = io::read_f64_le(in, count);
  std::size_t off = 0;
  for (int l = 0; l + 1 < net.num_layers(); ++l) {
    Mat& w = net.weight(l);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), w.size(), w.data());
    off += static_cast<std::size_t>(w.size());
  }
  for (int l = 0; l < net.num_layers(); ++l) {
    Vec& s = net.state(l);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), s.size(), s.data());
    off += static_cast<std::size_t>(s.size());
  }
  if (top_clamped) net.clamp_top(net.state(net.num_layers() - 1));
  return net;
}

}  // namespace actpc
