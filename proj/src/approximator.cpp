#include "actpc/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "actpc/error.hpp"
#include "actpc/io.hpp"
#include "actpc/linalg.hpp"

namespace actpc {

Mat spectral_coordinates(const GroundMetricGraph& g) {
  g.validate();
  const int n = g.size();
  Mat lap = -g.omega;
  lap.diagonal() = g.omega.rowwise().sum();
  Eigen::SelfAdjointEigenSolver<Mat> es(lap);
  const Vec& vals = es.eigenvalues();  // ascending
  const double tol = 1e-10 * std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
  Mat coords = Mat::Zero(n, 2);
  int filled = 0;
  for (int k = 0; k < n && filled < 2; ++k) {
    if (vals[k] <= tol) continue;
    Vec v = es.eigenvectors().col(k) * std::sqrt(static_cast<double>(n));
    const double skew = v.array().cube().sum();
    if (std::abs(skew) > 1e-9) {
      if (skew < 0) v = -v;
    } else {
      Mat col = v;
      linalg::fix_column_signs(col);
      v = col.col(0);
    }
    coords.col(filled++) = v;
  }
  return coords;
}

Vec extract_features(const Distribution& p, const GroundMetricGraph& g) {
  return extract_features(p, g, spectral_coordinates(g));
}

Vec extract_features(const Distribution& p, const GroundMetricGraph& g, const Mat& coords) {
  const int n = p.size();
  if (n != g.size() || coords.rows() != n) throw DomainError("distribution and graph sizes differ");
  const Vec& w = p.weights();
  Vec f = Vec::Zero(kFeatureDim);
  for (int c = 0; c < 2; ++c) {
    for (int k = 1; k <= 4; ++k) {
      double m = 0.0;
      for (int i = 0; i < n; ++i) m += w[i] * std::pow(coords(i, c), k);
      f[c * 4 + (k - 1)] = m;
    }
  }
  double h = 0.0;
  for (int i = 0; i < n; ++i)
    if (w[i] > 0.0) h -= w[i] * std::log(w[i]);
  f[8] = h;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w[a] > w[b]; });
  const Vec degree = g.omega.rowwise().sum();
  for (int k = 0; k < 4 && k < n; ++k) {
    const int node = order[k];
    f[9 + k] = w[node];
    // Slot keyed on a label-free node property so relabelling the graph
    // does not move the count.
    const long long key = std::llround(degree[node] * 1e6);
    f[13 + static_cast<int>(fnv1a(&key, sizeof key) % 8)] += 1.0;
  }
  return f;
}

// ---------------------------------------------------------------------------

Approximator::Approximator(int feature_dim, int output_dim, const ApproximatorConfig& config)
    : feature_dim_(feature_dim),
      output_dim_(output_dim),
      config_(config),
      mean_(Vec::Zero(feature_dim)),
      scale_(Vec::Ones(feature_dim)) {
  if (feature_dim < 1 || output_dim < 1 || config.hidden < 1)
    throw ConfigError("approximator dimensions must be positive");
  if (config.trainer == TrainerKind::predictive_coding) {
    PCConfig pc;
    pc.layers = {{output_dim, Activation::identity},
                 {config.hidden, Activation::tanh},
                 {config.hidden, Activation::tanh},
                 {feature_dim + 1, Activation::identity}};
    pc.eta_z = config.eta_z;
    pc.eta_w = config.eta_w;
    pc.seed = config.seed;
    pc.order = UpdateOrder::settle_states_first;
    pc_.emplace(pc);
  } else {
    mlp_.emplace(std::vector<int>{feature_dim, config.hidden, config.hidden, output_dim},
                 std::vector<DenseActivation>{DenseActivation::tanh, DenseActivation::tanh,
                                              DenseActivation::identity},
                 config.seed);
  }
}

Vec Approximator::top_input(const Vec& features) const {
  if (features.size() != feature_dim_) throw DomainError("feature vector has the wrong dimension");
  Vec x(feature_dim_ + (pc_ ? 1 : 0));
  x.head(feature_dim_) = (features - mean_).cwiseQuotient(scale_);
  if (pc_) x[feature_dim_] = 1.0;
  return x;
}

Vec Approximator::predict(const Vec& features) const {
  const Vec x = top_input(features);
  return pc_ ? pc_->predict_from_top(x) : mlp_->forward(x);
}

double Approximator::train_step(const Vec& features, const Vec& target) {
  if (target.size() != output_dim_) throw DomainError("target has the wrong dimension");
  const Vec x = top_input(features);
  if (pc_) {
    pc_->clamp_top(x);
    const double err = (pc_->sweep_down() - target).squaredNorm();
    MicroOptions opts;
    opts.iterations = config_.micro_iterations;
    opts.order = UpdateOrder::settle_states_first;
    micro_iterate(*pc_, target, opts);
    return err;
  }
  Mlp::Tape tape;
  const Vec y = mlp_->forward(x, tape);
  const Vec e = y - target;
  auto grads = mlp_->zero_gradients();
  mlp_->backward(tape, 2.0 * e, grads);
  mlp_->apply(grads, config_.eta_w);
  return e.squaredNorm();
}

void Approximator::fit_scaler(const std::vector<ApproxSample>& data) {
  if (data.empty()) return;
  Vec sum = Vec::Zero(feature_dim_), sq = Vec::Zero(feature_dim_);
  for (const auto& s : data) {
    if (s.features.size() != feature_dim_) throw DomainError("feature vector has the wrong dimension");
    sum += s.features;
  }
  mean_ = sum / static_cast<double>(data.size());
  for (const auto& s : data) sq += (s.features - mean_).cwiseAbs2();
  scale_ = (sq / static_cast<double>(data.size())).cwiseSqrt();
  for (Eigen::Index i = 0; i < scale_.size(); ++i)
    if (!(scale_[i] > 1e-12)) scale_[i] = 1.0;
}

bool Approximator::operator==(const Approximator& other) const {
  if (feature_dim_ != other.feature_dim_ || output_dim_ != other.output_dim_) return false;
  if (mean_ != other.mean_ || scale_ != other.scale_) return false;
  if (pc_.has_value() != other.pc_.has_value()) return false;
  return pc_ ? *pc_ == *other.pc_ : *mlp_ == *other.mlp_;
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

}  // namespace

void Approximator::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "actpc-approximator-v1";
  j["feature_dim"] = feature_dim_;
  j["output_dim"] = output_dim_;
  j["hidden"] = config_.hidden;
  j["trainer"] = pc_ ? "predictive_coding" : "backprop";
  j["eta_w"] = config_.eta_w;
  j["eta_z"] = config_.eta_z;
  j["micro_iterations"] = config_.micro_iterations;
  j["seed"] = config_.seed;
  j["mean"] = io::to_json(mean_);
  j["scale"] = io::to_json(scale_);
  if (pc_) {
    save_checkpoint(*pc_, path);
  } else {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : mlp_->layers()) layers.push_back({{"W", io::to_json(l.W)}, {"b", io::to_json(l.b)}});
    j["layers"] = std::move(layers);
  }
  io::write_json_file(sidecar(path), j);
}

Approximator Approximator::load(const std::filesystem::path& path) {
  const auto j = io::read_json_file(sidecar(path));
  if (j.value("format", "") != "actpc-approximator-v1") throw ConfigError("not an approximator file");
  ApproximatorConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.trainer = j.at("trainer") == "backprop" ? TrainerKind::backprop : TrainerKind::predictive_coding;
  c.eta_w = j.at("eta_w").get<double>();
  c.eta_z = j.at("eta_z").get<double>();
  c.micro_iterations = j.at("micro_iterations").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  Approximator a(j.at("feature_dim").get<int>(), j.at("output_dim").get<int>(), c);
  a.mean_ = io::vec_from_json(j.at("mean"));
  a.scale_ = io::vec_from_json(j.at("scale"));
  if (a.pc_) {
    a.pc_.emplace(load_checkpoint(path));
  } else {
    auto& layers = a.mlp_->layers();
    const auto& js = j.at("layers");
    if (js.size() != layers.size()) throw ConfigError("approximator layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].W = io::mat_from_json(js[l].at("W"));
      layers[l].b = io::vec_from_json(js[l].at("b"));
    }
  }
  return a;
}

// ---------------------------------------------------------------------------

TrainResult train_approximator(const std::vector<ApproxSample>& data, const ApproximatorConfig& config) {
  if (data.empty()) throw ConfigError("training set is empty");
  if (config.epochs < 0) throw ConfigError("epochs must be >= 0");
  TrainResult result{Approximator(static_cast<int>(data.front().features.size()),
                                  static_cast<int>(data.front().target.size()), config),
                     {}};
  result.net.fit_scaler(data);
  Rng rng(mix_seed(config.seed, 0x5eed));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t idx : order) total += result.net.train_step(data[idx].features, data[idx].target);
    const double mean = total / static_cast<double>(data.size());
    if (!std::isfinite(mean)) throw DivergenceError("approximator training diverged", epoch, -1);
    result.loss_trace.push_back(mean);
  }
  return result;
}

double mean_squared_error(const Approximator& net, const std::vector<ApproxSample>& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : data) total += (net.predict(s.features) - s.target).squaredNorm();
  return total / static_cast<double>(data.size());
}

double mean_predictor_mse(const std::vector<ApproxSample>& fit, const std::vector<ApproxSample>& eval) {
  if (fit.empty() || eval.empty()) throw ConfigError("mean predictor needs data");
  Vec mean = Vec::Zero(fit.front().target.size());
  for (const auto& s : fit) mean += s.target;
  mean /= static_cast<double>(fit.size());
  double total = 0.0;
  for (const auto& s : eval) total += (s.target - mean).squaredNorm();
  return total / static_cast<double>(eval.size());
}

FactorTriple predict_and_reconstruct(const Approximator& net, const Distribution& p,
                                     const GroundMetricGraph& g, const EmbeddingBasis& basis,
                                     const std::vector<FactorTriple>& codebook,
                                     const DecodeOptions& options) {
  return decode_to_operator(net.predict(extract_features(p, g)), basis, codebook, options);
}

RecalibrationResult recalibrate(Approximator& net, const std::vector<ApproxSample>& fresh, int steps) {
  RecalibrationResult r;
  r.loss_before = mean_squared_error(net, fresh);
  r.loss_after = r.loss_before;
  if (steps <= 0 || fresh.empty()) return r;
  const Approximator backup = net;
  for (int s = 0; s < steps; ++s) {
    const auto& pair = fresh[static_cast<std::size_t>(s) % fresh.size()];
    net.train_step(pair.features, pair.target);
  }
  r.loss_after = mean_squared_error(net, fresh);
  if (!(r.loss_after <= 1.05 * r.loss_before)) {
    net = backup;
    r.loss_after = r.loss_before;
    r.reverted = true;
  }
  return r;
}

RecalibrationResult recalibrate(Approximator& net, const std::vector<FreshPair>& fresh,
                                const GroundMetricGraph& g, const EmbeddingBasis& basis, int steps) {
  std::vector<ApproxSample> samples;
  const Mat coords = spectral_coordinates(g);
  for (const auto& f : fresh)
    samples.push_back({extract_features(f.p, g, coords), project(OperatorItem{f.truth, f.p}, basis)});
  return recalibrate(net, samples, steps);
}

Vec ensemble_predict(const std::vector<EnsembleMember>& members, const std::vector<Vec>& inputs,
                     const Vec& weights) {
  if (members.empty()) throw ConfigError("ensemble has no members");
  if (inputs.size() != members.size() || weights.size() != static_cast<Eigen::Index>(members.size()))
    throw ConfigError("ensemble needs one input and one weight per member");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
    throw ConfigError("ensemble weights must be nonnegative and sum to 1");
  Vec out;
  for (std::size_t k = 0; k < members.size(); ++k) {
    const Vec y = members[k](inputs[k]);
    if (k == 0) out = Vec::Zero(y.size());
    if (y.size() != out.size()) throw DomainError("ensemble members disagree on output dimension");
    out += weights[static_cast<Eigen::Index>(k)] * y;
  }
  return out;
}

double suggest_temperature(const EmbeddingBasis& basis) {
  const Mat& e = basis.landmark_embeddings;
  const auto m = e.rows();
  if (m < 2) return 1.0;
  std::vector<double> nearest;
  for (Eigen::Index i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) best = std::min(best, (e.row(i) - e.row(j)).squaredNorm());
    nearest.push_back(best);
  }
  std::nth_element(nearest.begin(), nearest.begin() + nearest.size() / 2, nearest.end());
  const double t = nearest[nearest.size() / 2];
  return t > 1e-12 ? t : 1.0;
}

void save_dataset(const std::vector<ApproxSample>& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& s : data)
    out << nlohmann::json{{"features", io::to_json(s.features)}, {"embedding", io::to_json(s.target)}}.dump()
        << '\n';
}

std::vector<ApproxSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<ApproxSample> data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    data.push_back({io::vec_from_json(j.at("features")), io::vec_from_json(j.at("embedding"))});
  }
  return data;
}

// ---------------------------------------------------------------------------

SyntheticFamily SyntheticFamily::make(std::uint64_t seed, int nodes) {
  if (nodes < 3) throw ConfigError("synthetic family needs at least 3 nodes");
  SyntheticFamily f;
  Rng rng(mix_seed(seed, 0xfa1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  f.positions.resize(nodes, 2);
  for (int i = 0; i < nodes; ++i) {
    f.positions(i, 0) = u(rng);
    f.positions(i, 1) = u(rng);
  }
  Mat cost = Mat::Zero(nodes, nodes);
  for (int i = 0; i < nodes; ++i)
    for (int j = 0; j < nodes; ++j) cost(i, j) = (f.positions.row(i) - f.positions.row(j)).norm();
  f.graph = GroundMetricGraph::from_cost(cost);
  return f;
}

Distribution SyntheticFamily::at(double a, double b) const {
  const Vec logits = kappa * (a * (positions.col(0).array() - 0.5) + b * (positions.col(1).array() - 0.5)).matrix();
  return Distribution(softmax(logits));
}

Distribution SyntheticFamily::sample(Rng& rng) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = u(rng);
  const double b = u(rng);
  return at(a, b);
}

OperatorItem operator_item(const Distribution& p, const GroundMetricGraph& g) {
  return {pinv_lowrank(build_laplacian(p, g), g.size() - 1).factors, p};
}

}  // namespace actpc
