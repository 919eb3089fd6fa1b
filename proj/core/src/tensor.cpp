#include "mhal/tensor.h"

#include <cmath>
#include <sstream>

#include "mhal/errors.h"

namespace mhal {

std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << "x";
    out << s[i];
  }
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor extent must be positive, got " + shape_str(shape));
  }
  data.assign(static_cast<std::size_t>(shape_size(shape)), 0.0);
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor extent must be positive, got " + shape_str(shape));
  }
  if (shape_size(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor " + shape_str(shape));
  return shape[1];
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor glorot_uniform(Shape s, Rng& rng) {
  Tensor t(s);
  double fan_in = static_cast<double>(s.front());
  double fan_out = static_cast<double>(s.back());
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data) v = uniform(rng, -limit, limit);
  return t;
}

Tensor dropout_mask(const Shape& s, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ShapeError("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  Tensor mask = Tensor::full(s, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& v : mask.data) v = dist(rng) < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace mhal
