#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fedmp/model.hpp"
#include "oracles.hpp"

using namespace fedmp;

namespace {

LabeledDataset random_batch(std::size_t n, std::size_t dim, std::size_t classes, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  LabeledDataset d(dim, classes);
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : row) v = g(rng);
    d.append_row(row, lab(rng));
  }
  return d;
}

ParameterSet with_noise(ParameterSet p, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, scale);
  ParameterSet out;
  for (const auto& layer : p.layers()) {
    auto values = std::vector<double>(layer.tensor.values().begin(), layer.tensor.values().end());
    for (auto& v : values) v += g(rng);
    out.add(layer.name, Tensor(layer.tensor.shape(), values));
  }
  return out;
}

}  // namespace

TEST_CASE("init_params shapes and determinism") {
  ModelSpec spec{16, {}, 4};
  const auto p = init_params(spec, 1);
  REQUIRE(p.num_layers() == 2);
  CHECK(p.tensor(0).shape() == std::vector<std::size_t>{16, 4});
  CHECK(p.tensor(1).shape() == std::vector<std::size_t>{4});
  CHECK(p.layers()[0].name == "dense_0/kernel");
  CHECK(p.layers()[1].name == "dense_0/bias");
  CHECK(init_params(spec, 1) == p);
  CHECK_FALSE(init_params(spec, 2) == p);

  const double limit = std::sqrt(6.0 / 20.0);
  for (double v : p.tensor(0).values()) CHECK(std::abs(v) <= limit);
  for (double v : p.tensor(1).values()) CHECK(v == 0.0);

  ModelSpec deep{5, {7, 3}, 2};
  const auto q = init_params(deep, 0);
  CHECK(q.num_layers() == 6);
  const auto back = spec_from_params(q);
  CHECK(back.input_dim == 5);
  CHECK(back.hidden_dims == std::vector<std::size_t>{7, 3});
  CHECK(back.num_classes == 2);

  CHECK_THROWS(init_params(ModelSpec{4, {}, 1}, 0));
  CHECK_THROWS(init_params(ModelSpec{4, {0}, 2}, 0));
}

TEST_CASE("zero weights on two balanced classes give ln 2") {
  ParameterSet p;
  p.add("dense_0/kernel", Tensor({3, 2}));
  p.add("dense_0/bias", Tensor({2}));
  LabeledDataset d(3, 2, {1, 2, 3, -1, 0, 4}, {0, 1});
  const auto lg = loss_and_gradient(p, d);
  CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("loss_and_gradient validates its inputs") {
  const auto p = init_params(ModelSpec{3, {}, 2}, 0);
  LabeledDataset wrong_width(2, 2, {1, 2}, {0});
  CHECK_THROWS(loss_and_gradient(p, wrong_width));
  LabeledDataset too_many_classes(3, 3, {1, 2, 3}, {2});
  CHECK_THROWS(loss_and_gradient(p, too_many_classes));
  LabeledDataset ok(3, 2, {1, 2, 3}, {1});
  CHECK_THROWS(loss_and_gradient(p, ok, 0.5, nullptr));
}

TEST_CASE("proximal term") {
  std::mt19937_64 rng(21);
  const auto p = init_params(ModelSpec{4, {3}, 3}, 5);
  const auto batch = random_batch(8, 4, 3, rng);
  const auto plain = loss_and_gradient(p, batch);

  SUBCASE("mu = 0 equals plain cross-entropy") {
    const auto other = with_noise(p, 1.0, rng);
    const auto zero_mu = loss_and_gradient(p, batch, 0.0, &other);
    CHECK(zero_mu.loss == plain.loss);
    CHECK(zero_mu.gradient == plain.gradient);
  }
  SUBCASE("vanishes exactly at the anchor") {
    const auto at_anchor = loss_and_gradient(p, batch, 3.0, &p);
    CHECK(at_anchor.loss == plain.loss);
    CHECK(at_anchor.gradient == plain.gradient);
  }
  SUBCASE("adds mu/2 ||w - anchor||^2 and mu (w - anchor)") {
    const auto anchor = with_noise(p, 0.5, rng);
    const double mu = 0.7;
    const auto prox = loss_and_gradient(p, batch, mu, &anchor);
    const auto diff = oracle::sub(oracle::flatten(p), oracle::flatten(anchor));
    const double sq = oracle::norm(diff) * oracle::norm(diff);
    CHECK(prox.loss == doctest::Approx(plain.loss + 0.5 * mu * sq).epsilon(1e-12));
    const auto g = oracle::flatten(prox.gradient), g0 = oracle::flatten(plain.gradient);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(g0[i] + mu * diff[i]).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> small(1, 4);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    ModelSpec spec{small(rng) + 1, {small(rng) + 1}, small(rng) + 1};
    if (spec.num_classes < 2) spec.num_classes = 2;
    auto p = with_noise(init_params(spec, trial), 0.3, rng);
    const auto batch = random_batch(1 + trial % 16, spec.input_dim, spec.num_classes, rng);
    const double mu = trial % 2 ? 0.3 : 0.0;
    const auto anchor = with_noise(p, 0.2, rng);
    const auto lg = loss_and_gradient(p, batch, mu, &anchor);
    CHECK(lg.loss == doctest::Approx(oracle::naive_loss(p, batch) +
                                     0.5 * mu * std::pow(oracle::norm(oracle::sub(oracle::flatten(p),
                                                                                  oracle::flatten(anchor))),
                                                         2))
                         .epsilon(1e-10));
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      for (std::size_t i = 0; i < p.tensor(l).size(); ++i) {
        auto plus = p, minus = p;
        plus.tensor(l)[i] += h;
        minus.tensor(l)[i] -= h;
        const double fd = (loss_and_gradient(plus, batch, mu, &anchor).loss -
                           loss_and_gradient(minus, batch, mu, &anchor).loss) /
                          (2 * h);
        const double g = lg.gradient.tensor(l)[i];
        if (std::abs(g) > 1e-8) CHECK(std::abs(fd - g) / std::abs(g) < 1e-4);
      }
    }
  }
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(29);
  const auto p = with_noise(init_params(ModelSpec{5, {6}, 4}, 1), 2.0, rng);
  const auto d = random_batch(30, 5, 4, rng);
  const auto probs = predict_proba(p, d);
  REQUIRE(probs.size() == 30 * 4);
  for (std::size_t r = 0; r < 30; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += probs[r * 4 + k];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("train_local") {
  std::mt19937_64 rng(31);
  const auto p = init_params(ModelSpec{4, {5}, 3}, 2);
  const auto data = random_batch(50, 4, 3, rng);
  TrainConfig cfg;
  cfg.seed = 9;

  SUBCASE("zero epochs is the identity") {
    cfg.epochs = 0;
    CHECK(train_local(p, data, cfg) == p);
  }
  SUBCASE("zero learning rate is the identity") {
    cfg.learning_rate = 0.0;
    cfg.optimizer = OptimizerKind::sgd;
    CHECK(train_local(p, data, cfg) == p);
  }
  SUBCASE("same seed, same result") {
    CHECK(train_local(p, data, cfg) == train_local(p, data, cfg));
    auto other = cfg;
    other.seed = 10;
    CHECK_FALSE(train_local(p, data, cfg) == train_local(p, data, other));
  }
  SUBCASE("one full-batch sgd epoch is one gradient step") {
    cfg.epochs = 1;
    cfg.batch_size = data.size();
    cfg.optimizer = OptimizerKind::sgd;
    cfg.learning_rate = 0.1;
    const auto got = oracle::flatten(train_local(p, data, cfg));
    const auto g = oracle::flatten(loss_and_gradient(p, data).gradient);
    const auto w = oracle::flatten(p);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(got[i] == doctest::Approx(w[i] - 0.1 * g[i]).epsilon(1e-12));
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS(train_local(p, LabeledDataset(4, 3), cfg));
  }
}

TEST_CASE("well-separated blobs are learned perfectly") {
  const auto data = synth_blobs(3, 4, 40, 1e-3, 4);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 0.05;
  const auto p = train_local(init_params(ModelSpec{4, {8}, 3}, 1), data, cfg);
  const auto r = evaluate(p, data);
  CHECK(r.accuracy == 1.0);
  CHECK(r.auc_micro_ovr == 1.0);
  CHECK(r.macro_f1 == 1.0);
}

TEST_CASE("evaluate") {
  std::mt19937_64 rng(37);
  const auto p = with_noise(init_params(ModelSpec{3, {4}, 3}, 0), 1.0, rng);
  const auto d = random_batch(40, 3, 3, rng);
  const auto r = evaluate(p, d);
  CHECK(r.sample_count == 40);
  CHECK(r.accuracy == static_cast<double>(r.correct) / 40.0);
  CHECK(r.loss == doctest::Approx(oracle::naive_loss(p, d)).epsilon(1e-12));
  CHECK(r.per_class.size() == 3);

  SUBCASE("invariant under row permutation") {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto q = evaluate(p, d.select(idx));
    CHECK(q.accuracy == r.accuracy);
    CHECK(q.loss == doctest::Approx(r.loss).epsilon(1e-14));
    CHECK(q.macro_f1 == r.macro_f1);
    CHECK(q.auc_micro_ovr == r.auc_micro_ovr);
  }
  SUBCASE("absent classes contribute zero") {
    LabeledDataset single(3, 3);
    for (int i = 0; i < 5; ++i) single.append_row(d.row(static_cast<std::size_t>(i)), 1);
    const auto s = evaluate(p, single);
    CHECK(s.per_class[0].support == 0);
    CHECK(s.per_class[0].recall == 0.0);
    CHECK(s.per_class[2].f1 == 0.0);
    CHECK(std::isfinite(s.macro_f1));
    CHECK(s.macro_f1 <= 1.0 / 3.0 + 1e-15);
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS(evaluate(p, LabeledDataset(3, 3)));
  }
}

TEST_CASE("micro one-vs-rest AUC") {
  // Two samples, two classes, perfect ranking.
  CHECK(micro_ovr_auc({0.9, 0.1, 0.2, 0.8}, {0, 1}, 2) == 1.0);
  // Reversed ranking.
  CHECK(micro_ovr_auc({0.1, 0.9, 0.8, 0.2}, {0, 1}, 2) == 0.0);
  // All tied.
  CHECK(micro_ovr_auc({0.5, 0.5, 0.5, 0.5}, {0, 1}, 2) == 0.5);

  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u;
  std::uniform_int_distribution<int> lab(0, 3);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 20000; ++i) {
    labels.push_back(lab(rng));
    for (int k = 0; k < 4; ++k) scores.push_back(u(rng));
  }
  CHECK(std::abs(micro_ovr_auc(scores, labels, 4) - 0.5) < 0.02);
}
