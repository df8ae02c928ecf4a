#pragma once

// Independent reference evaluations and finite-difference gradient checks,
// plus the self-test suite behind `tcattn selftest`.

#include <cstdint>
#include <string>
#include <vector>

#include "tcattn/attention.hpp"
#include "tcattn/harness.hpp"
#include "tcattn/layout.hpp"

namespace tcattn {

namespace oracles {

/// Per-token evaluation of the three temporal-id branches, with the floor
/// taken in floating point rather than by integer division.
std::vector<std::int64_t> temporal_ids_by_branches(const SequenceLayout& layout);

/// Plain causal attention with rotation at the global index: complex-number
/// rotation, explicit i >= j mask, reference matmul and softmax.
HeadTensor textbook_causal_rope_attention(const HeadTensor& q, const HeadTensor& k,
                                          const HeadTensor& v, Real scale, Real base = 10000);

}  // namespace oracles

/// Random valid layout with length <= max_len (max_len >= 1); visual span
/// non-empty with probability ~3/4.
SequenceLayout random_layout(Rng& rng, std::int64_t max_len);

/// |a - n| / max(|a|, |n|, floor)
Real relative_error(Real analytic, Real numeric, Real floor);

/// Denominator floor used by both gradient checks.
inline constexpr Real kGradcheckFloor = 1e-3;

struct GradcheckResult {
  Real max_rel_error = 0;
  Real max_abs_error = 0;
  std::size_t checked = 0;
  std::string worst;  // which element produced max_rel_error
};

/// Loss L = Σ G ⊙ attention(Q, K, V) for random Q, K, V, G drawn from
/// `seed`; compares attention_backward with central differences on every
/// input element.
GradcheckResult attention_gradcheck(const SequenceLayout& layout, const AttentionConfig& config,
                                    std::uint64_t seed, Real step = 1e-5);

/// Full model: cross-entropy of one generated example, every parameter.
GradcheckResult model_gradcheck(const TrialConfig& config, Real step = 1e-5);

/// Small default case for `tcattn gradcheck` (T=8, 1 layer, d_head=4).
TrialConfig micro_trial_config();

struct CheckLine {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct SelftestReport {
  std::vector<CheckLine> checks;

  bool ok() const;
  /// One "PASS name detail" / "FAIL name detail" line per check.
  std::string text() const;
  /// Name of the first failing check, or empty.
  std::string first_failure() const;
};

/// Invariant suite: temporal ids, rotary oracle, rotation properties,
/// softmax properties, masks, mode degeneracy, shift invariance, brute
/// oracle, gradients. Deterministic.
SelftestReport run_selftest();

}  // namespace tcattn
