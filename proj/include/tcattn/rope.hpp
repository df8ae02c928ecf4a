#pragma once

// Rotary position embedding at real-valued positions. Channel pairs are
// interleaved: (2t, 2t+1) is the real/imaginary part of the t-th complex
// component, rotated at frequency base^(-t / (d_head/2)).

#include <cstddef>
#include <span>
#include <vector>

#include "tcattn/numerics.hpp"

namespace tcattn {

struct RopeConfig {
  std::size_t d_head = 64;
  Real base = 10000;
  /// Weight of the temporal id in the adjusted position.
  Real gamma = 1;

  void validate() const;
};

struct FrequencyTable {
  std::vector<Real> thetas;

  std::size_t pairs() const { return thetas.size(); }
  std::size_t d_head() const { return 2 * thetas.size(); }
};

FrequencyTable frequencies(const RopeConfig& config);

/// Rotates each channel pair (x, y) by phi = position * theta_t.
std::vector<Real> apply_rotary(std::span<const Real> vec, Real position,
                               const FrequencyTable& freqs);

/// In-place rotation; a negative position applies the inverse (transpose).
void rotate_inplace(std::span<Real> vec, Real position, const FrequencyTable& freqs);

/// Same contract as apply_rotary, computed as a product of complex numbers.
std::vector<Real> rotary_oracle(std::span<const Real> vec, Real position,
                                const FrequencyTable& freqs);

/// Dot product of q rotated at pos_q with k rotated at pos_k.
Real pair_score(std::span<const Real> q, std::span<const Real> k, Real pos_q, Real pos_k,
                const FrequencyTable& freqs);

}  // namespace tcattn
