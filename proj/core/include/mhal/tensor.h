#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mhal/rng.h"

namespace mhal {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);  // e.g. "[3x4]"

// Dense tensor of doubles, flat row-major storage. `grad` stays empty until
// the tensor takes part in differentiation; once allocated it has the same
// length as `data`.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;
  bool is_scalar() const { return data.size() == 1; }

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }

  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
};

// Glorot/Xavier uniform fill: limit sqrt(6 / (fan_in + fan_out)) with
// fan_in/fan_out taken from the first/last extent (rank-1 uses its length
// for both).
Tensor glorot_uniform(Shape s, Rng& rng);

// Inverted-dropout mask: entries are 1/(1-rate) with probability 1-rate and
// 0 otherwise, so applying the mask needs no rescaling at inference time.
// rate 0 returns all ones without consuming randomness.
Tensor dropout_mask(const Shape& s, double rate, Rng& rng);

}  // namespace mhal
