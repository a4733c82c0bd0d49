#pragma once

#include <vector>

#include "ren/rng.hpp"
#include "ren/tensor.hpp"

namespace test {

inline std::vector<double> uniform_values(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  ren::RngStream rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline ren::Tensor<double> random_tensor(ren::Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  const std::size_t n = ren::shape_numel(shape);
  return ren::Tensor<double>::from(std::move(shape), uniform_values(n, seed, lo, hi));
}

// Weighted sum so every output element gets a distinct upstream gradient.
inline ren::Tensor<double> probe(const ren::Tensor<double>& t, std::uint64_t seed = 99) {
  auto w = ren::Tensor<double>::from(t.shape(), uniform_values(t.numel(), seed));
  return ren::sum(ren::mul(t, w));
}

}  // namespace test
