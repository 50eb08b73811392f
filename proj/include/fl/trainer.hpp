#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "fl/client.hpp"
#include "fl/dataset.hpp"
#include "fl/tensor.hpp"

namespace fl {

enum class Architecture { Logistic, Mlp };

/// Logistic: w0 [d x k], b0 [k].
/// Mlp:      w0 [d x h], b0 [h], tanh, w1 [h x k], b1 [k].
/// Softmax cross-entropy on top of both; parameters are f64 tensors.
struct ModelSpec {
  Architecture architecture = Architecture::Logistic;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden_width = 0;

  void validate() const;
};

Architecture parse_architecture(const std::string& name);

/// Matrices uniform(-0.05, 0.05) drawn in tensor order from one generator,
/// biases zero.
Weights init_weights(const ModelSpec& spec, std::uint64_t seed);

/// Throws std::invalid_argument if names or shapes do not fit the spec.
void check_weights(const ModelSpec& spec, const Weights& weights);

struct LossGradient {
  double loss = 0.0;
  Weights gradient;
};

/// Mean cross-entropy over `rows` of `data`, plus (mu/2)||w - reference||^2
/// when mu > 0, with its analytic gradient (same layout as `weights`, f64).
LossGradient loss_and_gradient(const ModelSpec& spec, const Weights& weights, const LocalDataset& data,
                               std::span<const std::size_t> rows, double mu = 0.0,
                               const Weights* reference = nullptr);

struct SgdOptions {
  int epochs = 1;
  double learning_rate = 0.1;
  double proximal_mu = 0.0;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct SgdResult {
  Weights weights;
  /// Mean cross-entropy over the final epoch, measured on each batch before
  /// its update (proximal term excluded).
  double train_loss = 0.0;
};

/// Minibatch SGD. Each epoch reshuffles with a Fisher-Yates pass (i from n-1
/// down to 1, j = below(i + 1)) driven by Xoshiro256(seed), continuing the
/// same generator across epochs. `global_reference` anchors the proximal term
/// and is required when proximal_mu > 0. The result keeps the input's dtypes.
SgdResult sgd_fit(const ModelSpec& spec, const Weights& initial, const LocalDataset& data, const SgdOptions& options,
                  const Weights* global_reference = nullptr);

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t num_examples = 0;
};

/// Mean cross-entropy and top-1 accuracy (ties go to the lowest class id).
EvalMetrics evaluate_model(const ModelSpec& spec, const Weights& weights, const LocalDataset& data);

/// Client backed by the built-in trainer.
///
/// Fit config keys: "epochs" (1), "lr" (0.1), "proximal_mu" (0),
/// "batch_size" (32), "seed" (mixed with the client's own seed); others are
/// ignored. Reports "train_loss" and "fit_duration_s"; evaluate reports
/// "accuracy".
class TrainingClient : public Client {
 public:
  TrainingClient(ModelSpec spec, LocalDataset train, LocalDataset test, std::uint64_t seed);

  Weights get_weights() override;
  FitOutput fit(const Weights& weights, const ConfigMap& config) override;
  EvaluateOutput evaluate(const Weights& weights, const ConfigMap& config) override;

  const LocalDataset& train_data() const noexcept { return train_; }
  const LocalDataset& test_data() const noexcept { return test_; }

 private:
  ModelSpec spec_;
  LocalDataset train_;
  LocalDataset test_;
  std::uint64_t seed_;
  Weights local_;
};

}  // namespace fl
