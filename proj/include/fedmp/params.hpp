#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedmp/errors.hpp"

namespace fedmp {

/// Dense row-major tensor of doubles. Every stored value is finite.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape);
  /// Throws std::invalid_argument if the value count does not match the
  /// shape or a value is NaN/Inf.
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

struct Layer {
  std::string name;
  Tensor tensor;

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Ordered, uniquely named collection of tensors: model weights, updates,
/// optimizer moments. Equality is exact (bitwise for finite values).
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::vector<Layer> layers);

  /// Appends a layer; throws std::invalid_argument on duplicate names.
  void add(std::string name, Tensor tensor);

  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t num_coordinates() const noexcept;
  bool empty() const noexcept { return layers_.empty(); }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  Tensor& tensor(std::size_t i) { return layers_.at(i).tensor; }
  const Tensor& tensor(std::size_t i) const { return layers_.at(i).tensor; }
  const Tensor& tensor(const std::string& name) const;

  bool all_finite() const noexcept;

  /// Same-shaped set with every coordinate zero.
  ParameterSet zeros_like() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<Layer> layers_;
};

/// Same layer names, order and shapes.
bool shape_compatible(const ParameterSet& a, const ParameterSet& b) noexcept;
void require_compatible(const ParameterSet& a, const ParameterSet& b);
void require_compatible(std::span<const ParameterSet> sets);

/// Coordinate-wise sum(w_i * set_i) / sum(w_i).
///
/// Evaluated as set_0 + sum_i (w_i / W) * (set_i - set_0) in input order, so
/// identical inputs reproduce themselves bit for bit.
ParameterSet weighted_mean(std::span<const ParameterSet> sets, std::span<const double> weights);

/// Coordinate-wise median; for an even count, the midpoint of the two middle values.
ParameterSet coordinate_median(std::span<const ParameterSet> sets);

/// Euclidean norm over every coordinate of every layer.
double l2_norm(const ParameterSet& set);

/// Mean over layers of the Frobenius norm of the per-layer difference.
double frobenius_per_layer_mean_distance(const ParameterSet& a, const ParameterSet& b);

/// alpha * a + beta * b.
ParameterSet axpy(const ParameterSet& a, const ParameterSet& b, double alpha, double beta);

/// In-place a += alpha * b.
void add_scaled(ParameterSet& a, const ParameterSet& b, double alpha);

// Binary format: little-endian u64 layer count, then per layer u64 name
// length, name bytes, u64 rank, rank x u64 dims; then every layer's values as
// little-endian IEEE-754 binary64, in layer order.
void write_parameter_set(std::ostream& out, const ParameterSet& set);
ParameterSet read_parameter_set(std::istream& in);
void save_parameter_set(const std::string& path, const ParameterSet& set);
ParameterSet load_parameter_set(const std::string& path);

}  // namespace fedmp
