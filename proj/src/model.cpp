#include "fedmp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fedmp {

namespace {

std::string kernel_name(std::size_t i) { return "dense_" + std::to_string(i) + "/kernel"; }
std::string bias_name(std::size_t i) { return "dense_" + std::to_string(i) + "/bias"; }

// Activations of one forward pass over a set of rows.
struct Forward {
  std::size_t rows = 0;
  // inputs[l] feeds dense layer l; inputs[0] is the raw batch. Hidden entries
  // hold post-ReLU values (zero exactly where the pre-activation was <= 0).
  std::vector<std::vector<double>> inputs;
  std::vector<double> log_probs;  // rows x num_classes
};

std::size_t num_dense(const ParameterSet& params) { return params.num_layers() / 2; }

Forward forward(const ParameterSet& params, const LabeledDataset& data, std::span<const std::size_t> rows) {
  const std::size_t layers = num_dense(params);
  Forward f;
  f.rows = rows.size();
  f.inputs.resize(layers);

  auto& x = f.inputs[0];
  x.resize(rows.size() * data.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = data.row(rows[r]);
    std::copy(src.begin(), src.end(), x.begin() + static_cast<std::ptrdiff_t>(r * data.dim()));
  }

  std::size_t width = data.dim();
  std::vector<double> z;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& kernel = params.tensor(2 * l);
    const auto& bias = params.tensor(2 * l + 1);
    const std::size_t out = kernel.shape()[1];
    const auto w = kernel.values();
    const auto b = bias.values();
    const auto& in = f.inputs[l];
    z.assign(rows.size() * out, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double* zr = z.data() + r * out;
      std::copy(b.begin(), b.end(), zr);
      for (std::size_t i = 0; i < width; ++i) {
        const double xi = in[r * width + i];
        if (xi == 0.0) continue;
        const double* wi = w.data() + i * out;
        for (std::size_t j = 0; j < out; ++j) zr[j] += xi * wi[j];
      }
    }
    if (l + 1 < layers) {
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
      f.inputs[l + 1] = z;
    }
    width = out;
  }

  // Log-softmax of the final pre-activations.
  f.log_probs = std::move(z);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double* lr = f.log_probs.data() + r * width;
    const double top = *std::max_element(lr, lr + width);
    double sum = 0.0;
    for (std::size_t j = 0; j < width; ++j) sum += std::exp(lr[j] - top);
    const double log_norm = top + std::log(sum);
    for (std::size_t j = 0; j < width; ++j) lr[j] -= log_norm;
  }
  return f;
}

void check_batch(const ParameterSet& params, const LabeledDataset& data) {
  if (params.num_layers() < 2 || params.num_layers() % 2 != 0) {
    throw std::invalid_argument("parameter set is not a dense network");
  }
  const auto& first = params.tensor(0);
  if (first.rank() != 2 || first.shape()[0] != data.dim()) {
    throw std::invalid_argument("feature width " + std::to_string(data.dim()) + " does not match model input " +
                                std::to_string(first.rank() == 2 ? first.shape()[0] : 0));
  }
  const std::size_t classes = params.tensor(params.num_layers() - 1).size();
  for (int y : data.labels()) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::invalid_argument("label " + std::to_string(y) + " out of range for " +
                                  std::to_string(classes) + " classes");
    }
  }
}

LossAndGradient forward_backward(const ParameterSet& params, const LabeledDataset& data,
                                 std::span<const std::size_t> rows, double proximal_mu,
                                 const ParameterSet* anchor) {
  const std::size_t layers = num_dense(params);
  const std::size_t classes = params.tensor(2 * layers - 1).size();
  const double inv_n = 1.0 / static_cast<double>(rows.size());

  Forward f = forward(params, data, rows);
  LossAndGradient out{0.0, params.zeros_like()};

  // d(loss)/d(logits) = (softmax - onehot) / n
  std::vector<double> delta(f.log_probs.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto y = static_cast<std::size_t>(data.label(rows[r]));
    loss -= f.log_probs[r * classes + y];
    for (std::size_t j = 0; j < classes; ++j) {
      delta[r * classes + j] = (std::exp(f.log_probs[r * classes + j]) - (j == y ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.loss = loss * inv_n;

  std::size_t out_width = classes;
  for (std::size_t l = layers; l-- > 0;) {
    const auto& kernel = params.tensor(2 * l);
    const std::size_t in_width = kernel.shape()[0];
    const auto w = kernel.values();
    const auto& in = f.inputs[l];
    auto gw = out.gradient.tensor(2 * l).values();
    auto gb = out.gradient.tensor(2 * l + 1).values();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double* dr = delta.data() + r * out_width;
      for (std::size_t j = 0; j < out_width; ++j) gb[j] += dr[j];
      for (std::size_t i = 0; i < in_width; ++i) {
        const double xi = in[r * in_width + i];
        if (xi == 0.0) continue;
        double* gwi = gw.data() + i * out_width;
        for (std::size_t j = 0; j < out_width; ++j) gwi[j] += xi * dr[j];
      }
    }
    if (l == 0) break;
    std::vector<double> prev(rows.size() * in_width, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double* dr = delta.data() + r * out_width;
      for (std::size_t i = 0; i < in_width; ++i) {
        if (in[r * in_width + i] <= 0.0) continue;  // ReLU gate
        const double* wi = w.data() + i * out_width;
        double acc = 0.0;
        for (std::size_t j = 0; j < out_width; ++j) acc += wi[j] * dr[j];
        prev[r * in_width + i] = acc;
      }
    }
    delta = std::move(prev);
    out_width = in_width;
  }

  if (proximal_mu > 0.0) {
    double sq = 0.0;
    for (std::size_t t = 0; t < params.num_layers(); ++t) {
      const auto p = params.tensor(t).values();
      const auto a = anchor->tensor(t).values();
      auto g = out.gradient.tensor(t).values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - a[i];
        sq += d * d;
        g[i] += proximal_mu * d;
      }
    }
    out.loss += 0.5 * proximal_mu * sq;
  }
  return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("model input_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("model needs at least 2 classes");
  for (auto h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("hidden layer widths must be positive");
  }
}

ParameterSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParameterSet params;
  std::size_t fan_in = spec.input_dim;
  std::vector<std::size_t> widths = spec.hidden_dims;
  widths.push_back(spec.num_classes);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::size_t fan_out = widths[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = dist(rng);
    params.add(kernel_name(l), Tensor({fan_in, fan_out}, std::move(w)));
    params.add(bias_name(l), Tensor({fan_out}));
    fan_in = fan_out;
  }
  return params;
}

ModelSpec spec_from_params(const ParameterSet& params) {
  if (params.num_layers() < 2 || params.num_layers() % 2 != 0) {
    throw std::invalid_argument("parameter set is not a dense network");
  }
  ModelSpec spec;
  const std::size_t layers = params.num_layers() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& k = params.tensor(2 * l);
    if (params.layer(2 * l).name != kernel_name(l) || params.layer(2 * l + 1).name != bias_name(l) ||
        k.rank() != 2 || params.tensor(2 * l + 1).size() != k.shape()[1]) {
      throw std::invalid_argument("parameter set is not a dense network");
    }
    if (l == 0) spec.input_dim = k.shape()[0];
    if (l + 1 < layers) spec.hidden_dims.push_back(k.shape()[1]);
    else spec.num_classes = k.shape()[1];
  }
  return spec;
}

LossAndGradient loss_and_gradient(const ParameterSet& params, const LabeledDataset& batch, double proximal_mu,
                                  const ParameterSet* anchor) {
  check_batch(params, batch);
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (proximal_mu < 0.0) throw std::invalid_argument("proximal_mu must be non-negative");
  if (proximal_mu > 0.0) {
    if (anchor == nullptr) throw std::invalid_argument("proximal term requires an anchor parameter set");
    require_compatible(params, *anchor);
  }
  const auto rows = all_rows(batch.size());
  return forward_backward(params, batch, rows, proximal_mu, anchor);
}

std::vector<double> predict_proba(const ParameterSet& params, const LabeledDataset& dataset) {
  check_batch(params, dataset);
  const auto rows = all_rows(dataset.size());
  auto probs = forward(params, dataset, rows).log_probs;
  for (auto& v : probs) v = std::exp(v);
  return probs;
}

ParameterSet train_local(const ParameterSet& params, const LabeledDataset& dataset, const TrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train_local: empty dataset");
  if (config.batch_size == 0) throw std::invalid_argument("train_local: batch_size must be positive");
  if (config.proximal_mu < 0.0) throw std::invalid_argument("train_local: proximal_mu must be non-negative");
  check_batch(params, dataset);

  ParameterSet w = params;
  if (config.epochs == 0) return w;

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ParameterSet m, v;
  if (config.optimizer == OptimizerKind::adam) {
    m = params.zeros_like();
    v = params.zeros_like();
  }
  std::mt19937_64 rng(config.seed);
  auto order = all_rows(dataset.size());
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      auto grad = forward_backward(w, dataset, rows, config.proximal_mu, &params).gradient;
      ++step;
      if (config.optimizer == OptimizerKind::sgd) {
        add_scaled(w, grad, -config.learning_rate);
        continue;
      }
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t t = 0; t < w.num_layers(); ++t) {
        auto wt = w.tensor(t).values();
        auto mt = m.tensor(t).values();
        auto vt = v.tensor(t).values();
        auto g = grad.tensor(t).values();
        for (std::size_t i = 0; i < wt.size(); ++i) {
          mt[i] = beta1 * mt[i] + (1.0 - beta1) * g[i];
          vt[i] = beta2 * vt[i] + (1.0 - beta2) * g[i] * g[i];
          wt[i] -= config.learning_rate * (mt[i] / c1) / (std::sqrt(vt[i] / c2) + eps);
        }
      }
    }
  }
  if (!w.all_finite()) throw std::runtime_error("train_local: training diverged to non-finite parameters");
  return w;
}

double micro_ovr_auc(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t num_classes) {
  struct Pair {
    double score;
    bool positive;
  };
  std::vector<Pair> pairs;
  pairs.reserve(scores.size());
  std::size_t positives = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    for (std::size_t k = 0; k < num_classes; ++k) {
      const bool pos = static_cast<std::size_t>(labels[r]) == k;
      positives += pos;
      pairs.push_back({scores[r * num_classes + k], pos});
    }
  }
  const std::size_t negatives = pairs.size() - positives;
  if (positives == 0 || negatives == 0) return 0.0;
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.score > b.score; });

  double area = 0.0;
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < pairs.size();) {
    const double prev_tp = tp, prev_fp = fp;
    std::size_t j = i;
    for (; j < pairs.size() && pairs[j].score == pairs[i].score; ++j) (pairs[j].positive ? tp : fp) += 1;
    area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
    i = j;
  }
  return area / (static_cast<double>(positives) * static_cast<double>(negatives));
}

EvalReport evaluate(const ParameterSet& params, const LabeledDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  check_batch(params, dataset);
  const auto rows = all_rows(dataset.size());
  const auto f = forward(params, dataset, rows);
  const std::size_t classes = f.log_probs.size() / dataset.size();

  EvalReport report;
  report.sample_count = dataset.size();
  std::vector<std::size_t> tp(classes, 0), predicted(classes, 0), actual(classes, 0);
  double loss = 0.0;
  std::vector<double> probs(f.log_probs.size());
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const double* lp = f.log_probs.data() + r * classes;
    const auto y = static_cast<std::size_t>(dataset.label(r));
    loss -= lp[y];
    const auto guess = static_cast<std::size_t>(std::max_element(lp, lp + classes) - lp);
    ++predicted[guess];
    ++actual[y];
    if (guess == y) {
      ++tp[y];
      ++report.correct;
    }
    for (std::size_t k = 0; k < classes; ++k) probs[r * classes + k] = std::exp(lp[k]);
  }
  report.loss = loss / static_cast<double>(dataset.size());
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(dataset.size());

  report.per_class.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    auto& c = report.per_class[k];
    c.support = actual[k];
    c.precision = predicted[k] ? static_cast<double>(tp[k]) / static_cast<double>(predicted[k]) : 0.0;
    c.recall = actual[k] ? static_cast<double>(tp[k]) / static_cast<double>(actual[k]) : 0.0;
    c.f1 = (c.precision + c.recall) > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    report.macro_f1 += c.f1;
    report.macro_precision += c.precision;
  }
  report.macro_f1 /= static_cast<double>(classes);
  report.macro_precision /= static_cast<double>(classes);
  report.auc_micro_ovr = micro_ovr_auc(probs, dataset.labels(), classes);
  return report;
}

}  // namespace fedmp
