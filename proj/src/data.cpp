#include "fedmp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "fedmp/format.hpp"

namespace fedmp {

namespace {

// Row indices grouped by label; each group is shuffled by the same generator,
// lowest label first.
std::vector<std::vector<std::size_t>> shuffled_class_pools(const LabeledDataset& dataset,
                                                           std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> pools(dataset.num_classes());
  for (std::size_t i = 0; i < dataset.size(); ++i) pools[static_cast<std::size_t>(dataset.label(i))].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);
  return pools;
}

LabeledDataset select_sorted(const LabeledDataset& dataset, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  return dataset.select(indices);
}

void require_fraction(double fraction, const char* what, bool allow_one) {
  if (!(fraction > 0.0) || fraction > 1.0 || (!allow_one && fraction == 1.0)) {
    throw std::invalid_argument(std::string(what) + " out of range: " + format_double(fraction));
  }
}

}  // namespace

LabeledDataset::LabeledDataset(std::size_t dim, std::size_t num_classes)
    : dim_(dim), num_classes_(num_classes) {
  if (dim == 0) throw std::invalid_argument("dataset feature width must be positive");
}

LabeledDataset::LabeledDataset(std::size_t dim, std::size_t num_classes, std::vector<double> features,
                               std::vector<int> labels)
    : LabeledDataset(dim, num_classes) {
  if (features.size() != labels.size() * dim) {
    throw std::invalid_argument("dataset has " + std::to_string(labels.size()) + " labels but " +
                                std::to_string(features.size()) + " feature values for width " +
                                std::to_string(dim));
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw std::invalid_argument("dataset features must be finite");
  }
  features_ = std::move(features);
  labels_ = std::move(labels);
}

void LabeledDataset::append_row(std::span<const double> features, int label) {
  if (features.size() != dim_) throw std::invalid_argument("row width mismatch");
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
    throw std::invalid_argument("label " + std::to_string(label) + " out of range");
  }
  features_.insert(features_.end(), features.begin(), features.end());
  labels_.push_back(label);
}

LabeledDataset LabeledDataset::select(std::span<const std::size_t> indices) const {
  LabeledDataset out(dim_, num_classes_);
  out.features_.reserve(indices.size() * dim_);
  out.labels_.reserve(indices.size());
  for (auto i : indices) {
    auto r = row(i);
    out.features_.insert(out.features_.end(), r.begin(), r.end());
    out.labels_.push_back(labels_.at(i));
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes_, 0);
  for (int label : labels_) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

std::size_t PartitionPlan::client_total(std::size_t client) const {
  std::size_t total = 0;
  for (auto c : counts.at(client)) total += c;
  return total;
}

std::size_t round_half_down(double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("round_half_down expects a non-negative value");
  return static_cast<std::size_t>(std::ceil(x - 0.5));
}

PartitionPlan homogeneous_plan(const std::vector<std::size_t>& class_counts, std::size_t num_clients) {
  if (num_clients == 0) throw std::invalid_argument("num_clients must be positive");
  PartitionPlan plan;
  plan.counts.assign(num_clients, std::vector<std::size_t>(class_counts.size(), 0));
  std::size_t next = 0;
  for (std::size_t k = class_counts.size(); k-- > 0;) {
    const std::size_t base = class_counts[k] / num_clients;
    const std::size_t extra = class_counts[k] % num_clients;
    for (std::size_t c = 0; c < num_clients; ++c) plan.counts[c][k] = base;
    for (std::size_t j = 0; j < extra; ++j) ++plan.counts[(next + j) % num_clients][k];
    next = (next + extra) % num_clients;
  }
  return plan;
}

std::vector<LabeledDataset> partition_homogeneous(const LabeledDataset& dataset, std::size_t num_clients,
                                                  std::uint64_t seed) {
  if (num_clients == 0) throw std::invalid_argument("num_clients must be positive");
  if (num_clients == 1) return {dataset};
  return partition_by_plan(dataset, homogeneous_plan(dataset.class_counts(), num_clients), seed);
}

void check_plan(const PartitionPlan& plan, const std::vector<std::size_t>& class_counts) {
  std::vector<std::size_t> used(class_counts.size(), 0);
  for (std::size_t c = 0; c < plan.num_clients(); ++c) {
    const auto& row = plan.counts[c];
    if (row.size() != class_counts.size()) {
      throw ConfigError("partition plan row for client " + std::to_string(c + 1) + " has " +
                        std::to_string(row.size()) + " classes, dataset has " +
                        std::to_string(class_counts.size()));
    }
    for (std::size_t k = 0; k < row.size(); ++k) {
      used[k] += row[k];
      if (used[k] > class_counts[k]) {
        throw InfeasiblePlan("infeasible partition plan: client " + std::to_string(c + 1) + ", class " +
                                 std::to_string(k) + " needs " + std::to_string(used[k]) +
                                 " samples in total but only " + std::to_string(class_counts[k]) +
                                 " are available",
                             c, k);
      }
    }
  }
}

std::vector<LabeledDataset> partition_by_plan(const LabeledDataset& dataset, const PartitionPlan& plan,
                                              std::uint64_t seed) {
  check_plan(plan, dataset.class_counts());
  auto pools = shuffled_class_pools(dataset, seed);
  std::vector<std::size_t> cursor(pools.size(), 0);
  std::vector<LabeledDataset> clients;
  clients.reserve(plan.num_clients());
  for (const auto& row : plan.counts) {
    std::vector<std::size_t> picked;
    for (std::size_t k = 0; k < row.size(); ++k) {
      auto first = pools[k].begin() + static_cast<std::ptrdiff_t>(cursor[k]);
      picked.insert(picked.end(), first, first + static_cast<std::ptrdiff_t>(row[k]));
      cursor[k] += row[k];
    }
    clients.push_back(select_sorted(dataset, std::move(picked)));
  }
  return clients;
}

Split stratified_split(const LabeledDataset& dataset, double test_fraction, std::uint64_t seed) {
  require_fraction(test_fraction, "test_fraction", false);
  const auto counts = dataset.class_counts();
  std::vector<std::size_t> test_counts(counts.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    test_counts[k] = round_half_down(static_cast<double>(counts[k]) * test_fraction);
    assigned += test_counts[k];
  }
  if (!counts.empty()) {
    const std::size_t target = round_half_down(static_cast<double>(dataset.size()) * test_fraction);
    const auto largest = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    const auto adjusted = static_cast<std::ptrdiff_t>(test_counts[largest]) +
                          static_cast<std::ptrdiff_t>(target) - static_cast<std::ptrdiff_t>(assigned);
    test_counts[largest] = static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(adjusted, 0, static_cast<std::ptrdiff_t>(counts[largest])));
  }

  auto pools = shuffled_class_pools(dataset, seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t k = 0; k < pools.size(); ++k) {
    const auto cut = pools[k].begin() + static_cast<std::ptrdiff_t>(test_counts[k]);
    test_idx.insert(test_idx.end(), pools[k].begin(), cut);
    train_idx.insert(train_idx.end(), cut, pools[k].end());
  }
  return {select_sorted(dataset, std::move(train_idx)), select_sorted(dataset, std::move(test_idx))};
}

LabeledDataset shadow_sample(const LabeledDataset& dataset, double fraction, std::uint64_t seed) {
  require_fraction(fraction, "shadow fraction", true);
  std::vector<std::size_t> idx(dataset.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(idx.size(), round_half_down(static_cast<double>(dataset.size()) * fraction)));
  return dataset.select(idx);
}

LabeledDataset synth_blobs(std::size_t num_classes, std::size_t dim, std::size_t per_class, double spread,
                           std::uint64_t seed) {
  if (num_classes == 0 || dim == 0 || per_class == 0 || spread < 0.0) {
    throw std::invalid_argument("synth_blobs parameters must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(-1.0, 1.0);
  std::vector<std::vector<double>> means;
  while (means.size() < num_classes) {
    std::vector<double> m(dim);
    for (auto& v : m) v = centre(rng);
    if (std::find(means.begin(), means.end(), m) == means.end()) means.push_back(std::move(m));
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = num_classes * per_class;
  std::vector<double> features;
  features.reserve(n * dim);
  std::vector<int> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % num_classes;
    for (std::size_t j = 0; j < dim; ++j) features.push_back(means[k][j] + spread * noise(rng));
    labels.push_back(static_cast<int>(k));
  }
  return LabeledDataset(dim, num_classes, std::move(features), std::move(labels));
}

LabeledDataset load_csv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (has_header && line_no == 1) continue;
    if (line.empty()) continue;

    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    const auto where = [&](std::size_t col) {
      return path + ": row " + std::to_string(line_no) + ", column " + std::to_string(col + 1);
    };
    if (cells.size() < 2) throw IoError(where(0) + ": expected at least one feature and a label");
    if (width == 0) {
      width = cells.size();
    } else if (cells.size() != width) {
      throw IoError(where(0) + ": expected " + std::to_string(width) + " columns, found " +
                    std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c + 1 < cells.size(); ++c) {
      auto cell = trim(cells[c]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw IoError(where(c) + ": cannot parse '" + std::string(cell) + "' as a number");
      }
      features.push_back(v);
    }
    auto cell = trim(cells.back());
    int label = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || label < 0) {
      throw IoError(where(cells.size() - 1) + ": label '" + std::string(cell) +
                    "' is not a non-negative integer");
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw IoError(path + ": empty dataset");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  return LabeledDataset(width - 1, static_cast<std::size_t>(max_label) + 1, std::move(features),
                        std::move(labels));
}

void write_csv(const std::string& path, const LabeledDataset& dataset) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (double v : dataset.row(i)) out << format_double(v) << ',';
    out << dataset.label(i) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

ParameterSet dataset_to_parameter_set(const LabeledDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("cannot serialize an empty dataset");
  ParameterSet set;
  set.add("features", Tensor({dataset.size(), dataset.dim()}, dataset.features()));
  set.add("labels", Tensor({dataset.size()}, std::vector<double>(dataset.labels().begin(), dataset.labels().end())));
  set.add("num_classes", Tensor({1}, {static_cast<double>(dataset.num_classes())}));
  return set;
}

LabeledDataset dataset_from_parameter_set(const ParameterSet& set) {
  try {
    const auto& features = set.tensor("features");
    const auto& labels = set.tensor("labels");
    const auto& classes = set.tensor("num_classes");
    if (features.rank() != 2 || labels.rank() != 1 || labels.shape()[0] != features.shape()[0] ||
        classes.size() != 1) {
      throw IoError("dataset blocks have inconsistent shapes");
    }
    std::vector<int> y;
    y.reserve(labels.size());
    for (double v : labels.values()) {
      if (v != std::floor(v) || v < 0) throw IoError("dataset label block holds a non-integer");
      y.push_back(static_cast<int>(v));
    }
    const double k = classes[0];
    if (k < 1 || k != std::floor(k)) throw IoError("dataset class count is not a positive integer");
    const auto f = features.values();
    return LabeledDataset(features.shape()[1], static_cast<std::size_t>(k),
                          std::vector<double>(f.begin(), f.end()), std::move(y));
  } catch (const std::out_of_range& e) {
    throw IoError(std::string("not a dataset file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("invalid dataset file: ") + e.what());
  }
}

void save_dataset(const std::string& path, const LabeledDataset& dataset) {
  save_parameter_set(path, dataset_to_parameter_set(dataset));
}

LabeledDataset load_dataset(const std::string& path) {
  return dataset_from_parameter_set(load_parameter_set(path));
}

}  // namespace fedmp
