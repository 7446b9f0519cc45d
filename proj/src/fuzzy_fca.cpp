#include "actpc/fuzzy_fca.hpp"

#include <cmath>
#include <set>

#include "actpc/error.hpp"
#include "actpc/io.hpp"

namespace actpc {

void FuzzyConfig::validate() const {
  if (input_dim < 1) throw ConfigError("fuzzy lattice needs input_dim >= 1");
  if (core < 0 || discovered < 0 || core + discovered < 1) throw ConfigError("fuzzy lattice needs at least one concept");
  if (hidden < 0 || utility_hidden < 1 || outcome_dim < 1) throw ConfigError("invalid fuzzy lattice widths");
  if (!(sparsity >= 0.0)) throw ConfigError("sparsity must be >= 0");
}

FuzzyLattice::FuzzyLattice(const FuzzyConfig& config) : config_(config) {
  config.validate();
  const int n = concepts();
  for (int i = 0; i < n; ++i)
    names_.push_back(i < config.core ? "core" + std::to_string(i) : "concept" + std::to_string(i - config.core));
  thresholds_.assign(n, 0.5);
  Rng rng(mix_seed(config.seed, 0xfca));
  const int base = 2 * config.input_dim + 1;
  auto uniform = [&](Mat& m, double s) {
    std::uniform_real_distribution<double> u(-s, s);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  };
  V_.resize(config.hidden, base);
  uniform(V_, 1.0 / std::sqrt(static_cast<double>(base)));
  W_.resize(n, augmented_dim());
  uniform(W_, 1.0 / std::sqrt(static_cast<double>(augmented_dim())));
  clamped_ = ClampMask::Constant(n, augmented_dim(), false);
}

void FuzzyLattice::clamp_row(int concept_index, const Vec& row) {
  if (concept_index < 0 || concept_index >= concepts()) throw DomainError("concept index out of range");
  if (row.size() != augmented_dim()) throw DomainError("clamp row has the wrong width");
  W_.row(concept_index) = row.transpose();
  clamped_.row(concept_index).setConstant(true);
}

Vec FuzzyLattice::augment(const Vec& x) const {
  const int k = config_.input_dim;
  if (x.size() != k) throw DomainError("state vector has the wrong dimension");
  Vec base(2 * k + 1);
  base.head(k) = x;
  const double norm = x.norm();
  base.segment(k, k) = norm > 0.0 ? Vec(x / norm) : Vec::Zero(k);
  base[2 * k] = 1.0;
  Vec a(augmented_dim());
  a.head(2 * k + 1) = base;
  if (config_.hidden > 0) a.tail(config_.hidden) = (V_ * base).array().tanh().matrix();
  return a;
}

Mlp make_utility_net(const FuzzyConfig& config) {
  config.validate();
  return Mlp({config.core + config.discovered, config.utility_hidden, config.outcome_dim},
             {DenseActivation::tanh, DenseActivation::identity}, mix_seed(config.seed, 0x0071));
}

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct FTape {
  Vec a;
  Vec f;
};

Vec f_forward(const FuzzyLattice& l, const Vec& x, FTape& t) {
  t.a = l.augment(x);
  t.f = (l.W() * t.a).unaryExpr([](double v) { return sigmoid(v); });
  return t.f;
}

// Accumulates gradients of F's parameters given dL/df.
void f_backward(const FuzzyLattice& l, const FTape& t, const Vec& df, Mat& gW, Mat& gV) {
  const int k = l.input_dim();
  const int h = l.config().hidden;
  const Vec dpre = df.cwiseProduct(t.f.cwiseProduct((1.0 - t.f.array()).matrix()));
  gW.noalias() += dpre * t.a.transpose();
  if (h > 0) {
    const Vec hid = t.a.tail(h);
    Vec dh = (l.W().rightCols(h).transpose() * dpre).cwiseProduct((1.0 - hid.array().square()).matrix());
    gV.noalias() += dh * t.a.head(2 * k + 1).transpose();
  }
}

}  // namespace

Vec fcl_forward(const FuzzyLattice& lattice, const Vec& x) {
  FTape t;
  return f_forward(lattice, x, t);
}

FuzzyLattice clamp_core_concepts(FuzzyLattice lattice, const std::vector<std::pair<std::string, Vec>>& centroids) {
  const int r = lattice.config().core;
  if (static_cast<int>(centroids.size()) != r) throw DomainError("need exactly one centroid per core concept");
  std::set<std::string> seen;
  const int k = lattice.input_dim();
  for (int i = 0; i < r; ++i) {
    const auto& [name, c] = centroids[i];
    if (!seen.insert(name).second) throw DomainError("duplicate core concept '" + name + "'");
    if (c.size() != k) throw DomainError("centroid has the wrong dimension");
    const double norm = c.norm();
    if (!(norm > 0.0)) throw DomainError("centroid of '" + name + "' is zero");
    Vec row = Vec::Zero(lattice.augmented_dim());
    row.segment(k, k) = kCoreScale * c / norm;
    lattice.clamp_row(i, row);
    lattice.names()[i] = name;
  }
  return lattice;
}

CotrainGradients cotrain_gradients(const FuzzyLattice& lattice, const Mlp& utility, const Batch& batch) {
  if (batch.empty()) throw DomainError("cotrain needs a nonempty batch");
  CotrainGradients g{Mat::Zero(lattice.W().rows(), lattice.W().cols()),
                     Mat::Zero(lattice.V().rows(), lattice.V().cols()), utility.zero_gradients(), 0.0};
  const double inv = 1.0 / static_cast<double>(batch.size());
  const double lam = lattice.config().sparsity;
  for (const auto& [x, y] : batch) {
    FTape ft;
    const Vec f = f_forward(lattice, x, ft);
    Mlp::Tape ut;
    const Vec yhat = utility.forward(f, ut);
    if (yhat.size() != y.size()) throw DomainError("outcome has the wrong dimension");
    const Vec e = yhat - y;
    g.loss += inv * (e.squaredNorm() + lam * f.sum());
    Vec df = utility.backward(ut, 2.0 * inv * e, g.utility);
    df.array() += lam * inv;
    f_backward(lattice, ft, df, g.W, g.V);
  }
  g.W = lattice.clamped().select(Mat::Zero(g.W.rows(), g.W.cols()), g.W);
  return g;
}

double cotrain_loss(const FuzzyLattice& lattice, const Mlp& utility, const Batch& batch) {
  if (batch.empty()) throw DomainError("cotrain needs a nonempty batch");
  double loss = 0.0;
  for (const auto& [x, y] : batch) {
    const Vec f = fcl_forward(lattice, x);
    loss += (utility.forward(f) - y).squaredNorm() + lattice.config().sparsity * f.sum();
  }
  return loss / static_cast<double>(batch.size());
}

double cotrain_step(FuzzyLattice& lattice, Mlp& utility, const Batch& batch, double eta) {
  const auto g = cotrain_gradients(lattice, utility, batch);
  if (!std::isfinite(g.loss)) throw DivergenceError("co-training loss is not finite", 0, -1);
  if (eta == 0.0) return g.loss;
  Mat& W = lattice.W();
  const auto& mask = lattice.clamped();
  for (Eigen::Index j = 0; j < W.cols(); ++j)
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      if (!mask(i, j)) W(i, j) -= eta * g.W(i, j);
  lattice.V() -= eta * g.V;
  utility.apply(g.utility, eta);
  return g.loss;
}

LatticeScore evaluate_lattice(const FuzzyLattice& lattice, const Mlp& utility, const Batch& holdout) {
  if (holdout.empty()) throw DomainError("holdout is empty");
  LatticeScore s;
  Vec mean = Vec::Zero(holdout.front().second.size());
  for (const auto& [x, y] : holdout) mean += y;
  mean /= static_cast<double>(holdout.size());
  for (const auto& [x, y] : holdout) {
    s.mse += (utility.forward(fcl_forward(lattice, x)) - y).squaredNorm();
    s.baseline += (y - mean).squaredNorm();
  }
  s.mse /= static_cast<double>(holdout.size());
  s.baseline /= static_cast<double>(holdout.size());
  return s;
}

namespace {

// N o F with an extra linear path from x into N's hidden layer.
struct DirectPipeline {
  FuzzyLattice lattice;
  Mlp utility;
  Mat A;  // utility_hidden x k

  double loss(const Batch& batch) const {
    double total = 0.0;
    for (const auto& [x, y] : batch) total += (predict(x) - y).squaredNorm();
    return total / static_cast<double>(batch.size());
  }

  Vec predict(const Vec& x) const {
    const Vec f = fcl_forward(lattice, x);
    const auto& L = utility.layers();
    Vec h = (L[0].W * f + L[0].b + A * x).array().tanh().matrix();
    return L[1].W * h + L[1].b;
  }

  // Full-batch gradient step of size eta on every trainable parameter.
  DirectPipeline stepped(const Batch& batch, double eta) const {
    DirectPipeline next = *this;
    Mat gW = Mat::Zero(lattice.W().rows(), lattice.W().cols());
    Mat gV = Mat::Zero(lattice.V().rows(), lattice.V().cols());
    Mat gA = Mat::Zero(A.rows(), A.cols());
    auto gu = utility.zero_gradients();
    const auto& L = utility.layers();
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& [x, y] : batch) {
      FTape ft;
      const Vec f = f_forward(lattice, x, ft);
      const Vec h = (L[0].W * f + L[0].b + A * x).array().tanh().matrix();
      const Vec e = L[1].W * h + L[1].b - y;
      const Vec dy = 2.0 * inv * e;
      gu.W[1].noalias() += dy * h.transpose();
      gu.b[1] += dy;
      const Vec dpre = (L[1].W.transpose() * dy).cwiseProduct((1.0 - h.array().square()).matrix());
      gu.W[0].noalias() += dpre * f.transpose();
      gu.b[0] += dpre;
      gA.noalias() += dpre * x.transpose();
      f_backward(lattice, ft, L[0].W.transpose() * dpre, gW, gV);
    }
    gW = lattice.clamped().select(Mat::Zero(gW.rows(), gW.cols()), gW);
    next.lattice.W() -= eta * gW;
    next.lattice.V() -= eta * gV;
    next.utility.apply(gu, eta);
    next.A -= eta * gA;
    return next;
  }
};

}  // namespace

BottleneckReport bottleneck_compare(const FuzzyLattice& lattice, const Mlp& utility, const Batch& train,
                                    int steps, double eta) {
  if (train.empty()) throw DomainError("bottleneck comparison needs training data");
  BottleneckReport r;
  DirectPipeline d{lattice, utility, Mat::Zero(utility.layers()[0].W.rows(), lattice.input_dim())};
  // Prediction error only; a sparsity penalty is not part of the comparison.
  r.lattice_loss = d.loss(train);
  double best = r.lattice_loss;
  for (int s = 0; s < steps; ++s) {
    double t = eta;
    bool accepted = false;
    for (int halvings = 0; halvings < 30 && !accepted; ++halvings, t *= 0.5) {
      DirectPipeline trial = d.stepped(train, t);
      const double l = trial.loss(train);
      if (l < best) {
        d = std::move(trial);
        best = l;
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  r.direct_loss = best;
  return r;
}

nlohmann::json export_lattice(const FuzzyLattice& lattice) {
  nlohmann::json concepts = nlohmann::json::array();
  for (int i = 0; i < lattice.concepts(); ++i) {
    nlohmann::json c{{"name", lattice.names()[i]},
                     {"core", i < lattice.config().core},
                     {"threshold", lattice.thresholds()[i]}};
    if (lattice.clamped().row(i).all()) c["clamp_row"] = io::to_json(Vec(lattice.W().row(i).transpose()));
    concepts.push_back(std::move(c));
  }
  return {{"format", "actpc-lattice-v1"},
          {"input_dim", lattice.input_dim()},
          {"hidden", lattice.config().hidden},
          {"core_scale", kCoreScale},
          {"concepts", std::move(concepts)}};
}

void save_lattice(const FuzzyLattice& lattice, const std::filesystem::path& path) {
  io::write_json_file(path, export_lattice(lattice));
}

Batch separable_task(int samples, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("separable task needs k >= 2");
  Rng rng(mix_seed(seed, 0x5e9a));
  Batch b;
  for (int i = 0; i < samples; ++i) {
    Vec x = gaussian_vec(rng, k);
    Vec y(1);
    y[0] = (x[0] > 0.3 ? 1.0 : 0.0) + (x[1] < -0.2 ? 2.0 : 0.0);
    b.emplace_back(std::move(x), std::move(y));
  }
  return b;
}

}  // namespace actpc
