#pragma once

#include <cstdint>
#include <vector>

#include "fedmp/data.hpp"
#include "fedmp/params.hpp"

namespace fedmp {

/// Fully connected ReLU network with a softmax output layer.
struct ModelSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 2;

  void validate() const;
};

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  // Weight of (mu/2)||w - w_anchor||^2; the anchor is the parameter set
  // training starts from. Zero disables the term.
  double proximal_mu = 0.0;
  std::uint64_t seed = 0;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t sample_count = 0;
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;
  double macro_precision = 0.0;
  double auc_micro_ovr = 0.0;
};

/// Layer names: dense_<i>/kernel (in x out) and dense_<i>/bias (out).
/// Kernels ~ U(-sqrt(6/(fan_in+fan_out)), +sqrt(...)), biases zero.
ParameterSet init_params(const ModelSpec& spec, std::uint64_t seed);

/// Recovers the layer widths from a parameter set produced by init_params.
ModelSpec spec_from_params(const ParameterSet& params);

struct LossAndGradient {
  double loss = 0.0;
  ParameterSet gradient;
};

/// Mean cross-entropy over the batch rows, plus (mu/2)||params - anchor||^2
/// when proximal_mu > 0 (anchor then required).
LossAndGradient loss_and_gradient(const ParameterSet& params, const LabeledDataset& batch,
                                  double proximal_mu = 0.0, const ParameterSet* anchor = nullptr);

/// Class probabilities, one row of num_classes per sample.
std::vector<double> predict_proba(const ParameterSet& params, const LabeledDataset& dataset);

/// Mini-batch training for config.epochs passes over a per-epoch shuffle.
ParameterSet train_local(const ParameterSet& params, const LabeledDataset& dataset,
                         const TrainConfig& config);

EvalReport evaluate(const ParameterSet& params, const LabeledDataset& dataset);

/// Micro-averaged one-vs-rest ROC AUC: every (sample, class) pair is pooled
/// as a binary score and the ROC curve is integrated with the trapezoid rule.
double micro_ovr_auc(const std::vector<double>& scores, const std::vector<int>& labels,
                     std::size_t num_classes);

}  // namespace fedmp
