#include "tcattn/rope.hpp"

#include <cmath>
#include <complex>

namespace tcattn {

void RopeConfig::validate() const {
  if (d_head < 2 || d_head % 2 != 0) {
    throw InvalidInput("rope: d_head must be even and >= 2, got " + std::to_string(d_head));
  }
  if (!(base > 1) || !std::isfinite(base)) throw InvalidInput("rope: base must be > 1");
  if (!std::isfinite(gamma)) throw InvalidInput("rope: gamma must be finite");
}

FrequencyTable frequencies(const RopeConfig& config) {
  config.validate();
  const std::size_t half = config.d_head / 2;
  FrequencyTable table;
  table.thetas.resize(half);
  for (std::size_t t = 0; t < half; ++t) {
    table.thetas[t] = std::pow(config.base, -static_cast<Real>(t) / static_cast<Real>(half));
  }
  return table;
}

namespace {

void require_length(std::size_t n, const FrequencyTable& freqs, const char* what) {
  if (n != freqs.d_head()) {
    throw InvalidInput(std::string(what) + ": vector length " + std::to_string(n) +
                       " != d_head " + std::to_string(freqs.d_head()));
  }
}

void require_finite(Real position, const char* what) {
  if (!std::isfinite(position)) throw InvalidInput(std::string(what) + ": position must be finite");
}

}  // namespace

void rotate_inplace(std::span<Real> vec, Real position, const FrequencyTable& freqs) {
  require_length(vec.size(), freqs, "rotate");
  require_finite(position, "rotate");
  for (std::size_t t = 0; t < freqs.pairs(); ++t) {
    const Real phi = position * freqs.thetas[t];
    const Real c = std::cos(phi);
    const Real s = std::sin(phi);
    const Real x = vec[2 * t];
    const Real y = vec[2 * t + 1];
    vec[2 * t] = x * c - y * s;
    vec[2 * t + 1] = x * s + y * c;
  }
}

std::vector<Real> apply_rotary(std::span<const Real> vec, Real position,
                               const FrequencyTable& freqs) {
  std::vector<Real> out(vec.begin(), vec.end());
  rotate_inplace(out, position, freqs);
  return out;
}

std::vector<Real> rotary_oracle(std::span<const Real> vec, Real position,
                                const FrequencyTable& freqs) {
  require_length(vec.size(), freqs, "rotary_oracle");
  require_finite(position, "rotary_oracle");
  std::vector<Real> out(vec.size());
  for (std::size_t t = 0; t < freqs.pairs(); ++t) {
    const std::complex<Real> z(vec[2 * t], vec[2 * t + 1]);
    const std::complex<Real> w = z * std::exp(std::complex<Real>(0, position * freqs.thetas[t]));
    out[2 * t] = w.real();
    out[2 * t + 1] = w.imag();
  }
  return out;
}

Real pair_score(std::span<const Real> q, std::span<const Real> k, Real pos_q, Real pos_k,
                const FrequencyTable& freqs) {
  if (q.size() != k.size()) throw InvalidInput("pair_score: q and k lengths differ");
  const auto rq = apply_rotary(q, pos_q, freqs);
  const auto rk = apply_rotary(k, pos_k, freqs);
  return dot(rq, rk);
}

}  // namespace tcattn
