#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedmp/params.hpp"

namespace fedmp {

/// n x d feature matrix (row-major) with one integer label per row.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  /// Empty dataset of the given width and class count.
  LabeledDataset(std::size_t dim, std::size_t num_classes);
  LabeledDataset(std::size_t dim, std::size_t num_classes, std::vector<double> features,
                 std::vector<int> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  std::span<const double> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<double>& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  void append_row(std::span<const double> features, int label);
  /// Rows in the given order (indices may repeat).
  LabeledDataset select(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::size_t dim_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

/// Per-client, per-class sample counts (clients x classes).
struct PartitionPlan {
  std::vector<std::vector<std::size_t>> counts;

  std::size_t num_clients() const noexcept { return counts.size(); }
  std::size_t client_total(std::size_t client) const;
};

/// Nearest integer with exact halves rounded down.
std::size_t round_half_down(double x);

/// Stratified split into num_clients disjoint, class-balanced parts. Rows of
/// each class are shuffled by seed and dealt out; a single deal pointer runs
/// across classes (highest label first), so leftover rows go to clients in
/// ascending order and client totals differ by at most one. Each client's rows
/// keep their source order.
std::vector<LabeledDataset> partition_homogeneous(const LabeledDataset& dataset,
                                                  std::size_t num_clients, std::uint64_t seed);

/// The per-client class counts partition_homogeneous would produce.
PartitionPlan homogeneous_plan(const std::vector<std::size_t>& class_counts, std::size_t num_clients);

/// Exactly plan.counts[c][k] rows of class k for client c, drawn without
/// replacement from a seed-shuffled pool. Throws InfeasiblePlan naming the
/// first (client, class) cell that exhausts the pool.
std::vector<LabeledDataset> partition_by_plan(const LabeledDataset& dataset, const PartitionPlan& plan,
                                              std::uint64_t seed);

/// Throws InfeasiblePlan if the plan cannot be met by the given class counts.
void check_plan(const PartitionPlan& plan, const std::vector<std::size_t>& class_counts);

struct Split {
  LabeledDataset train;
  LabeledDataset test;
};

/// Per class, round_half_down(count * test_fraction) rows go to test. If the
/// per-class counts miss round_half_down(n * test_fraction) in total, the
/// largest class absorbs the difference.
Split stratified_split(const LabeledDataset& dataset, double test_fraction, std::uint64_t seed);

/// Uniform sample without replacement of round_half_down(n * fraction) rows, in sampled order.
LabeledDataset shadow_sample(const LabeledDataset& dataset, double fraction, std::uint64_t seed);

/// Isotropic Gaussian clusters around distinct class means drawn from
/// [-1, 1]^dim. Row i has label i % num_classes.
LabeledDataset synth_blobs(std::size_t num_classes, std::size_t dim, std::size_t per_class, double spread,
                           std::uint64_t seed);

/// Comma-separated rows: feature columns then an integer label.
LabeledDataset load_csv(const std::string& path, bool has_header = false);
void write_csv(const std::string& path, const LabeledDataset& dataset);

/// Dataset as a parameter set with layers "features" (n x d), "labels" (n)
/// and "num_classes" (1). Requires a non-empty dataset.
ParameterSet dataset_to_parameter_set(const LabeledDataset& dataset);
LabeledDataset dataset_from_parameter_set(const ParameterSet& set);
void save_dataset(const std::string& path, const LabeledDataset& dataset);
LabeledDataset load_dataset(const std::string& path);

}  // namespace fedmp
