#pragma once

// Fuzzy concept-lattice learner F (state -> membership degrees) co-trained
// with a utility predictor N that sees only the memberships. Core concepts
// are prototype detectors with clamped weight rows.
//
// F reads the augmented input a(x) = [x ; x/|x| ; 1 ; tanh(V [x ; x/|x| ; 1])]
// and outputs sigmoid(W a(x)). A core row is beta * c/|c| on the x/|x|
// block and zero elsewhere, so its membership is sigmoid(beta cos(x, c)).

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "actpc/mlp.hpp"
#include "actpc/types.hpp"

namespace actpc {

inline constexpr double kCoreScale = 8.0;

struct FuzzyConfig {
  int input_dim = 0;     // k
  int core = 0;          // r
  int discovered = 8;    // s
  int hidden = 8;        // width of the tanh block inside F
  int utility_hidden = 16;
  int outcome_dim = 1;   // l
  double sparsity = 0.0; // optional L1 penalty on memberships
  std::uint64_t seed = 0;

  void validate() const;
};

using ClampMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class FuzzyLattice {
 public:
  explicit FuzzyLattice(const FuzzyConfig& config);

  int input_dim() const { return config_.input_dim; }
  int concepts() const { return config_.core + config_.discovered; }
  int augmented_dim() const { return 2 * config_.input_dim + 1 + config_.hidden; }
  const FuzzyConfig& config() const { return config_; }

  const std::vector<std::string>& names() const { return names_; }
  std::vector<std::string>& names() { return names_; }
  std::vector<double>& thresholds() { return thresholds_; }
  const std::vector<double>& thresholds() const { return thresholds_; }

  Mat& W() { return W_; }  // concepts x augmented_dim
  const Mat& W() const { return W_; }
  Mat& V() { return V_; }  // hidden x (2k + 1)
  const Mat& V() const { return V_; }
  const ClampMask& clamped() const { return clamped_; }

  /// Fixes `row` of W and marks every entry non-trainable.
  void clamp_row(int concept_index, const Vec& row);

  Vec augment(const Vec& x) const;

  bool operator==(const FuzzyLattice& o) const {
    return W_ == o.W_ && V_ == o.V_ && names_ == o.names_;
  }

 private:
  FuzzyConfig config_;
  std::vector<std::string> names_;
  std::vector<double> thresholds_;
  Mat W_, V_;
  ClampMask clamped_;
};

/// Predictor from memberships to outcomes: one tanh hidden layer.
Mlp make_utility_net(const FuzzyConfig& config);

Vec fcl_forward(const FuzzyLattice& lattice, const Vec& x);

/// Prototype detectors for the core concepts: row i = beta * c_i / |c_i| on
/// the normalized block. Names must be distinct; |centroids| must equal r.
FuzzyLattice clamp_core_concepts(FuzzyLattice lattice,
                                 const std::vector<std::pair<std::string, Vec>>& centroids);

using Batch = std::vector<std::pair<Vec, Vec>>;

/// Mean over the batch of |N(F(x)) - y|^2, plus the sparsity penalty.
double cotrain_loss(const FuzzyLattice& lattice, const Mlp& utility, const Batch& batch);

struct CotrainGradients {
  Mat W;  // zero on clamped entries
  Mat V;
  MlpGradients utility;
  double loss = 0.0;
};

CotrainGradients cotrain_gradients(const FuzzyLattice& lattice, const Mlp& utility, const Batch& batch);

/// One end-to-end gradient step through N and F; clamped entries are never
/// written. Returns the batch loss before the step.
double cotrain_step(FuzzyLattice& lattice, Mlp& utility, const Batch& batch, double eta);

struct LatticeScore {
  double mse = 0.0;       // mean |N(F(x)) - y|^2 on the holdout
  double baseline = 0.0;  // same for a constant prediction of the holdout mean
};

LatticeScore evaluate_lattice(const FuzzyLattice& lattice, const Mlp& utility, const Batch& holdout);

struct BottleneckReport {
  double lattice_loss = 0.0;  // training loss of N o F
  double direct_loss = 0.0;   // training loss of the matched predictor that also sees x
};

/// Matched comparison: the direct predictor is N o F with extra input
/// weights on x, starting at zero from the trained lattice pipeline and
/// refined by full-batch descent that only accepts decreasing steps.
BottleneckReport bottleneck_compare(const FuzzyLattice& lattice, const Mlp& utility, const Batch& train,
                                    int steps, double eta);

nlohmann::json export_lattice(const FuzzyLattice& lattice);
void save_lattice(const FuzzyLattice& lattice, const std::filesystem::path& path);

/// The scripted separable task: x ~ N(0, I_k) and
/// y = [x_0 > 0.3] + 2 [x_1 < -0.2] (one outcome).
Batch separable_task(int samples, int k, std::uint64_t seed);

}  // namespace actpc
