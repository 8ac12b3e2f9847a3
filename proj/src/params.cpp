#include "fedmp/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_set>

namespace fedmp {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

std::string describe_shape(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Applies fn(out_value, inputs...) coordinate-wise over shape-compatible sets.
template <typename Fn>
ParameterSet map_coordinates(std::span<const ParameterSet> sets, Fn&& fn) {
  require_compatible(sets);
  ParameterSet out = sets.front();
  std::vector<double> column(sets.size());
  for (std::size_t l = 0; l < out.num_layers(); ++l) {
    auto dst = out.tensor(l).values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      for (std::size_t s = 0; s < sets.size(); ++s) column[s] = sets[s].tensor(l)[i];
      dst[i] = fn(std::span<double>(column));
    }
  }
  return out;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("truncated parameter set");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_product(shape_)) {
    throw std::invalid_argument("tensor of shape " + describe_shape(shape_) + " given " +
                                std::to_string(values_.size()) + " values");
  }
  if (!all_finite()) throw std::invalid_argument("tensor values must be finite");
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ParameterSet::ParameterSet(std::vector<Layer> layers) {
  for (auto& layer : layers) add(std::move(layer.name), std::move(layer.tensor));
}

void ParameterSet::add(std::string name, Tensor tensor) {
  for (const auto& layer : layers_) {
    if (layer.name == name) throw std::invalid_argument("duplicate layer name '" + name + "'");
  }
  layers_.push_back({std::move(name), std::move(tensor)});
}

std::size_t ParameterSet::num_coordinates() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.tensor.size();
  return n;
}

const Tensor& ParameterSet::tensor(const std::string& name) const {
  for (const auto& layer : layers_) {
    if (layer.name == name) return layer.tensor;
  }
  throw std::out_of_range("no layer named '" + name + "'");
}

bool ParameterSet::all_finite() const noexcept {
  return std::all_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return l.tensor.all_finite(); });
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& layer : layers_) out.layers_.push_back({layer.name, Tensor(layer.tensor.shape())});
  return out;
}

bool shape_compatible(const ParameterSet& a, const ParameterSet& b) noexcept {
  if (a.num_layers() != b.num_layers()) return false;
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    const auto& la = a.layer(i);
    const auto& lb = b.layer(i);
    if (la.name != lb.name || la.tensor.shape() != lb.tensor.shape()) return false;
  }
  return true;
}

void require_compatible(const ParameterSet& a, const ParameterSet& b) {
  if (shape_compatible(a, b)) return;
  if (a.num_layers() != b.num_layers()) {
    throw ShapeMismatch("layer count " + std::to_string(a.num_layers()) + " vs " +
                        std::to_string(b.num_layers()));
  }
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    const auto& la = a.layer(i);
    const auto& lb = b.layer(i);
    if (la.name != lb.name) throw ShapeMismatch("layer " + std::to_string(i) + " named '" + la.name + "' vs '" + lb.name + "'");
    if (la.tensor.shape() != lb.tensor.shape()) {
      throw ShapeMismatch("layer '" + la.name + "' shape " + describe_shape(la.tensor.shape()) +
                          " vs " + describe_shape(lb.tensor.shape()));
    }
  }
}

void require_compatible(std::span<const ParameterSet> sets) {
  if (sets.empty()) throw std::invalid_argument("empty parameter set sequence");
  for (std::size_t i = 1; i < sets.size(); ++i) require_compatible(sets.front(), sets[i]);
}

ParameterSet weighted_mean(std::span<const ParameterSet> sets, std::span<const double> weights) {
  require_compatible(sets);
  if (weights.size() != sets.size()) {
    throw std::invalid_argument("weighted_mean: " + std::to_string(sets.size()) + " sets but " +
                                std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weighted_mean: weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("weighted_mean: weights sum to zero");

  ParameterSet out = sets.front();
  for (std::size_t s = 1; s < sets.size(); ++s) {
    const double share = weights[s] / total;
    for (std::size_t l = 0; l < out.num_layers(); ++l) {
      auto dst = out.tensor(l).values();
      auto base = sets.front().tensor(l).values();
      auto src = sets[s].tensor(l).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += share * (src[i] - base[i]);
    }
  }
  return out;
}

ParameterSet coordinate_median(std::span<const ParameterSet> sets) {
  return map_coordinates(sets, [](std::span<double> column) {
    const std::size_t n = column.size();
    const std::size_t mid = n / 2;
    std::nth_element(column.begin(), column.begin() + mid, column.end());
    const double upper = column[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(column.begin(), column.begin() + mid);
    return (lower + upper) / 2.0;
  });
}

double l2_norm(const ParameterSet& set) {
  double sum = 0.0;
  for (const auto& layer : set.layers()) {
    for (double v : layer.tensor.values()) sum += v * v;
  }
  return std::sqrt(sum);
}

double frobenius_per_layer_mean_distance(const ParameterSet& a, const ParameterSet& b) {
  require_compatible(a, b);
  if (a.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    auto x = a.tensor(l).values();
    auto y = b.tensor(l).values();
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - y[i];
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(a.num_layers());
}

ParameterSet axpy(const ParameterSet& a, const ParameterSet& b, double alpha, double beta) {
  require_compatible(a, b);
  ParameterSet out = a;
  for (std::size_t l = 0; l < out.num_layers(); ++l) {
    auto dst = out.tensor(l).values();
    auto y = b.tensor(l).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = alpha * dst[i] + beta * y[i];
  }
  return out;
}

void add_scaled(ParameterSet& a, const ParameterSet& b, double alpha) {
  require_compatible(a, b);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    auto dst = a.tensor(l).values();
    auto y = b.tensor(l).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * y[i];
  }
}

void write_parameter_set(std::ostream& out, const ParameterSet& set) {
  write_u64(out, set.num_layers());
  for (const auto& layer : set.layers()) {
    write_u64(out, layer.name.size());
    out.write(layer.name.data(), static_cast<std::streamsize>(layer.name.size()));
    write_u64(out, layer.tensor.rank());
    for (auto d : layer.tensor.shape()) write_u64(out, d);
  }
  for (const auto& layer : set.layers()) {
    for (double v : layer.tensor.values()) write_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IoError("failed writing parameter set");
}

ParameterSet read_parameter_set(std::istream& in) {
  // Generous ceilings so a corrupt header fails cleanly instead of allocating.
  constexpr std::uint64_t kMaxLayers = 1u << 20;
  constexpr std::uint64_t kMaxName = 1u << 16;
  constexpr std::uint64_t kMaxRank = 32;

  const auto count = read_u64(in);
  if (count > kMaxLayers) throw IoError("corrupt parameter set header: layer count");
  std::vector<std::pair<std::string, std::vector<std::size_t>>> headers;
  headers.reserve(count);
  for (std::uint64_t l = 0; l < count; ++l) {
    const auto name_len = read_u64(in);
    if (name_len > kMaxName) throw IoError("corrupt parameter set header: name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) throw IoError("truncated parameter set");
    const auto rank = read_u64(in);
    if (rank > kMaxRank) throw IoError("corrupt parameter set header: rank");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = read_u64(in);
    headers.emplace_back(std::move(name), std::move(dims));
  }
  ParameterSet set;
  for (auto& [name, dims] : headers) {
    std::size_t n = 1;
    for (auto d : dims) {
      if (d == 0 || n > (std::size_t{1} << 40) / d) throw IoError("corrupt parameter set header: dims");
      n *= d;
    }
    std::vector<double> values(n);
    for (auto& v : values) v = std::bit_cast<double>(read_u64(in));
    try {
      set.add(std::move(name), Tensor(std::move(dims), std::move(values)));
    } catch (const std::invalid_argument& e) {
      throw IoError(std::string("invalid parameter set: ") + e.what());
    }
  }
  return set;
}

void save_parameter_set(const std::string& path, const ParameterSet& set) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_parameter_set(out, set);
}

ParameterSet load_parameter_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_parameter_set(in);
}

}  // namespace fedmp
