#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "malite/net.hpp"

namespace malite::testing {

// Scalar that counts its own multiplications.
struct Counted {
  static inline std::uint64_t mults = 0;
  double v = 0.0;

  Counted() = default;
  Counted(double x) : v(x) {}  // NOLINT: implicit like a builtin

  friend Counted operator+(Counted a, Counted b) { return {a.v + b.v}; }
  friend Counted operator-(Counted a, Counted b) { return {a.v - b.v}; }
  friend Counted operator*(Counted a, Counted b) {
    ++mults;
    return {a.v * b.v};
  }
  friend Counted operator/(Counted a, Counted b) { return {a.v / b.v}; }
  Counted operator-() const { return {-v}; }
  Counted& operator+=(Counted o) { return *this = *this + o; }
  Counted& operator-=(Counted o) { return *this = *this - o; }
  Counted& operator*=(Counted o) { return *this = *this * o; }
  Counted& operator/=(Counted o) { return *this = *this / o; }
  friend bool operator>(Counted a, Counted b) { return a.v > b.v; }
  friend bool operator<(Counted a, Counted b) { return a.v < b.v; }
  friend Counted sqrt(Counted a) { return {std::sqrt(a.v)}; }
  friend Counted exp(Counted a) { return {std::exp(a.v)}; }
  explicit operator double() const { return v; }
};

// Runs one forward pass and returns multiplications per observed layer.
inline std::map<std::string, std::uint64_t> count_forward(const NetConfig& cfg, int side) {
  Model<Counted> m(cfg);
  m.initialize(1);
  Tensor<Counted> x({1, side, side, cfg.input_channels}, Counted(0.5));
  std::map<std::string, std::uint64_t> per_layer;
  std::uint64_t start = 0;
  m.forward(x, Mode::Infer, [&](std::string_view name, bool done) {
    if (!done) start = Counted::mults;
    else per_layer[std::string(name)] = Counted::mults - start;
  });
  return per_layer;
}

}  // namespace malite::testing
