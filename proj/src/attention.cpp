#include "tcattn/attention.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace tcattn {

std::string to_string(PeMode mode) {
  switch (mode) {
    case PeMode::RopeOnly: return "rope_only";
    case PeMode::TimeRopeOnly: return "time_rope_only";
    case PeMode::DualRope: return "dual_rope";
    case PeMode::TimeApe: return "time_ape";
    case PeMode::TimeRpe: return "time_rpe";
  }
  return "unknown";
}

const std::vector<PeMode>& all_pe_modes() {
  static const std::vector<PeMode> modes = {PeMode::RopeOnly, PeMode::TimeRopeOnly,
                                            PeMode::DualRope, PeMode::TimeApe, PeMode::TimeRpe};
  return modes;
}

std::string pe_mode_names() {
  std::string names;
  for (PeMode m : all_pe_modes()) {
    if (!names.empty()) names += ", ";
    names += to_string(m);
  }
  return names;
}

PeMode parse_pe_mode(std::string_view name) {
  for (PeMode m : all_pe_modes()) {
    if (to_string(m) == name) return m;
  }
  throw InvalidInput("unknown pe mode '" + std::string(name) + "' (valid: " + pe_mode_names() +
                     ")");
}

std::vector<Real> default_rpe_bias(std::size_t radius, Real slope) {
  std::vector<Real> bias(2 * radius + 1);
  for (std::size_t i = 0; i < bias.size(); ++i) {
    const auto d = static_cast<Real>(i) - static_cast<Real>(radius);
    bias[i] = -slope * std::abs(d);
  }
  return bias;
}

Real AttentionConfig::effective_scale() const {
  return scale ? *scale : Real{1} / std::sqrt(static_cast<Real>(d_head));
}

void AttentionConfig::validate() const {
  if (num_heads == 0) throw InvalidInput("attention: num_heads must be positive");
  if (rope.d_head != d_head) {
    throw InvalidInput("attention: d_head (" + std::to_string(d_head) + ") != rope.d_head (" +
                       std::to_string(rope.d_head) + ")");
  }
  rope.validate();
  if (scale && !(*scale > 0 && std::isfinite(*scale))) {
    throw InvalidInput("attention: scale must be positive and finite");
  }
  if (pe_mode == PeMode::TimeRpe) {
    if (rpe_bias.empty() || rpe_bias.size() % 2 == 0) {
      throw InvalidInput("attention: rpe_bias must have odd length");
    }
    for (Real b : rpe_bias) {
      if (!std::isfinite(b)) throw InvalidInput("attention: rpe_bias entries must be finite");
    }
  }
}

AttentionConfig make_attention_config(std::size_t num_heads, std::size_t d_head, Real gamma,
                                      MaskKind mask, PeMode mode) {
  AttentionConfig c;
  c.num_heads = num_heads;
  c.d_head = d_head;
  c.rope.d_head = d_head;
  c.rope.gamma = gamma;
  c.mask_kind = mask;
  c.pe_mode = mode;
  return c;
}

nlohmann::json attention_config_to_json(const AttentionConfig& c) {
  nlohmann::json j = {{"num_heads", c.num_heads},
                      {"d_head", c.d_head},
                      {"gamma", c.rope.gamma},
                      {"base", c.rope.base},
                      {"mask_kind", to_string(c.mask_kind)},
                      {"pe_mode", to_string(c.pe_mode)},
                      {"strict_monotonic_suffix", c.temporal_options.strict_monotonic_suffix},
                      {"fw_block_causal_within_frame", c.mask_options.fw_block_causal_within_frame},
                      {"rpe_bias", c.rpe_bias}};
  if (c.scale) j["scale"] = *c.scale;
  return j;
}

namespace {

template <typename T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

AttentionConfig attention_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("attention config JSON must be an object");
  static const char* const kKeys[] = {"num_heads", "d_head", "gamma", "base", "mask_kind",
                                      "pe_mode", "scale", "strict_monotonic_suffix",
                                      "fw_block_causal_within_frame", "rpe_bias"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw InvalidInput("attention config: unknown key '" + key + "'");
    }
  }
  AttentionConfig c;
  c.num_heads = json_get<std::size_t>(j, "num_heads", c.num_heads);
  c.d_head = json_get<std::size_t>(j, "d_head", c.d_head);
  c.rope.d_head = c.d_head;
  c.rope.gamma = json_get<Real>(j, "gamma", c.rope.gamma);
  c.rope.base = json_get<Real>(j, "base", c.rope.base);
  c.mask_kind = parse_mask_kind(json_get<std::string>(j, "mask_kind", to_string(c.mask_kind)));
  c.pe_mode = parse_pe_mode(json_get<std::string>(j, "pe_mode", to_string(c.pe_mode)));
  c.temporal_options.strict_monotonic_suffix =
      json_get<bool>(j, "strict_monotonic_suffix", false);
  c.mask_options.fw_block_causal_within_frame =
      json_get<bool>(j, "fw_block_causal_within_frame", false);
  if (j.contains("scale") && !j.at("scale").is_null()) c.scale = json_get<Real>(j, "scale", 1);
  c.rpe_bias = json_get<std::vector<Real>>(j, "rpe_bias", c.rpe_bias);
  c.validate();
  return c;
}

HeadTensor::HeadTensor(std::size_t heads, std::size_t seq_len, std::size_t d_head, Real fill)
    : heads_(heads), seq_len_(seq_len), d_head_(d_head), data_(heads * seq_len * d_head, fill) {}

HeadTensor::HeadTensor(std::size_t heads, std::size_t seq_len, std::size_t d_head,
                       std::vector<Real> data)
    : heads_(heads), seq_len_(seq_len), d_head_(d_head), data_(std::move(data)) {
  if (data_.size() != heads * seq_len * d_head) {
    throw InvalidInput("HeadTensor: data length does not match heads*seq_len*d_head");
  }
}

HeadTensor HeadTensor::random(std::size_t heads, std::size_t seq_len, std::size_t d_head,
                              Rng& rng, Real lo, Real hi) {
  HeadTensor t(heads, seq_len, d_head);
  for (auto& x : t.data_) x = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

Real max_abs_diff(const HeadTensor& a, const HeadTensor& b) {
  if (!a.same_shape(b)) throw InvalidInput("max_abs_diff: HeadTensor shapes differ");
  return max_abs_diff(std::span<const Real>(a.data()), std::span<const Real>(b.data()));
}

std::vector<Real> rotation_positions(const PositionTable& table, PeMode mode) {
  std::vector<Real> pos(table.size());
  for (std::size_t n = 0; n < table.size(); ++n) {
    switch (mode) {
      case PeMode::TimeRopeOnly:
        pos[n] = table.gamma * static_cast<Real>(table.temporal_ids[n]);
        break;
      case PeMode::DualRope:
        pos[n] = table.adjusted[n];
        break;
      case PeMode::RopeOnly:
      case PeMode::TimeApe:
      case PeMode::TimeRpe:
        pos[n] = static_cast<Real>(table.global_ids[n]);
        break;
    }
  }
  return pos;
}

Matrix temporal_ape_rows(const PositionTable& table, const FrequencyTable& freqs) {
  Matrix rows(table.size(), freqs.d_head());
  for (std::size_t n = 0; n < table.size(); ++n) {
    const auto id = static_cast<Real>(table.temporal_ids[n]);
    for (std::size_t t = 0; t < freqs.pairs(); ++t) {
      rows(n, 2 * t) = std::sin(id * freqs.thetas[t]);
      rows(n, 2 * t + 1) = std::cos(id * freqs.thetas[t]);
    }
  }
  return rows;
}

AttentionPlan::AttentionPlan(const SequenceLayout& layout, const AttentionConfig& config)
    : config_(config),
      table_(adjusted_positions(layout, config.rope.gamma, config.temporal_options)),
      mask_(build_mask(config.mask_kind, layout, config.mask_options)) {
  init();
}

AttentionPlan::AttentionPlan(PositionTable table, AttentionMask mask, const AttentionConfig& config)
    : config_(config), table_(std::move(table)), mask_(std::move(mask)) {
  if (mask_.size() != table_.size()) {
    throw InvalidInput("attention: mask size does not match position table");
  }
  init();
}

void AttentionPlan::init() {
  config_.validate();
  freqs_ = frequencies(config_.rope);
  scale_ = config_.effective_scale();
  positions_ = tcattn::rotation_positions(table_, config_.pe_mode);
  const std::size_t seq = table_.size();
  const std::size_t pairs = freqs_.pairs();
  cos_.resize(seq * pairs);
  sin_.resize(seq * pairs);
  for (std::size_t n = 0; n < seq; ++n) {
    for (std::size_t t = 0; t < pairs; ++t) {
      const Real phi = positions_[n] * freqs_.thetas[t];
      cos_[n * pairs + t] = std::cos(phi);
      sin_[n * pairs + t] = std::sin(phi);
    }
  }
  if (config_.pe_mode == PeMode::TimeApe) ape_ = temporal_ape_rows(table_, freqs_);
  if (config_.pe_mode == PeMode::TimeRpe) {
    const auto radius = static_cast<std::int64_t>(config_.rpe_bias.size() / 2);
    bias_ = Matrix(seq, seq);
    for (std::size_t i = 0; i < seq; ++i) {
      for (std::size_t j = 0; j < seq; ++j) {
        const std::int64_t d =
            std::clamp(table_.temporal_ids[i] - table_.temporal_ids[j], -radius, radius);
        bias_(i, j) = config_.rpe_bias[static_cast<std::size_t>(d + radius)];
      }
    }
  }
}

void AttentionPlan::rotate(std::span<Real> vec, std::size_t token) const {
  const std::size_t pairs = freqs_.pairs();
  const Real* c = &cos_[token * pairs];
  const Real* s = &sin_[token * pairs];
  for (std::size_t t = 0; t < pairs; ++t) {
    const Real x = vec[2 * t];
    const Real y = vec[2 * t + 1];
    vec[2 * t] = x * c[t] - y * s[t];
    vec[2 * t + 1] = x * s[t] + y * c[t];
  }
}

void AttentionPlan::unrotate(std::span<Real> vec, std::size_t token) const {
  const std::size_t pairs = freqs_.pairs();
  const Real* c = &cos_[token * pairs];
  const Real* s = &sin_[token * pairs];
  for (std::size_t t = 0; t < pairs; ++t) {
    const Real x = vec[2 * t];
    const Real y = vec[2 * t + 1];
    vec[2 * t] = x * c[t] + y * s[t];
    vec[2 * t + 1] = -x * s[t] + y * c[t];
  }
}

namespace {

void check_inputs(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                  const AttentionConfig& config, std::size_t seq_len) {
  if (!q.same_shape(k) || !q.same_shape(v)) {
    throw InvalidInput("attention: Q, K and V shapes differ");
  }
  if (q.heads() != config.num_heads || q.d_head() != config.d_head) {
    throw InvalidInput("attention: tensor heads/d_head do not match config");
  }
  if (q.seq_len() != seq_len) {
    throw InvalidInput("attention: sequence length " + std::to_string(q.seq_len()) +
                       " does not match layout length " + std::to_string(seq_len));
  }
}

// Parallelise over heads only when there is enough work to amortise the
// thread team.
bool worth_parallel(std::size_t heads, std::size_t seq, std::size_t d) {
  return heads > 1 && heads * seq * seq * d > (1u << 16);
}

}  // namespace

AttentionResult attention_forward(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                                  std::shared_ptr<const AttentionPlan> plan) {
  if (!plan) throw InvalidInput("attention: null plan");
  const AttentionPlan& p = *plan;
  const std::size_t seq = p.seq_len();
  check_inputs(q, k, v, p.config(), seq);
  const std::size_t heads = q.heads();
  const std::size_t d = q.d_head();

  AttentionResult result{HeadTensor(heads, seq, d), AttentionState{plan, q, k, v, {}}};
  AttentionState& st = result.state;
  st.weights.assign(heads, Matrix(seq, seq));
  const bool ape = !p.ape_rows().data().empty();
  const bool rpe = !p.score_bias().data().empty();
  const Matrix& mask = p.mask().values;

  const auto nheads = static_cast<std::ptrdiff_t>(heads);
#pragma omp parallel for schedule(static) if (worth_parallel(heads, seq, d))
  for (std::ptrdiff_t hh = 0; hh < nheads; ++hh) {
    const auto h = static_cast<std::size_t>(hh);
    for (std::size_t t = 0; t < seq; ++t) {
      auto qr = st.q_rot.row(h, t);
      auto kr = st.k_rot.row(h, t);
      if (ape) {
        const auto e = p.ape_rows().row(t);
        for (std::size_t c = 0; c < d; ++c) {
          qr[c] += e[c];
          kr[c] += e[c];
        }
      }
      p.rotate(qr, t);
      p.rotate(kr, t);
    }
    std::vector<Real> scores(seq);
    Matrix& w = st.weights[h];
    for (std::size_t i = 0; i < seq; ++i) {
      const auto qi = st.q_rot.row(h, i);
      for (std::size_t j = 0; j < seq; ++j) {
        if (mask(i, j) != Real{0}) {
          scores[j] = 0;
          continue;
        }
        Real s = p.scale() * dot(qi, st.k_rot.row(h, j));
        if (rpe) s += p.score_bias()(i, j);
        scores[j] = s;
      }
      masked_softmax_row(scores, mask.row(i), w.row(i));
      auto out = result.output.row(h, i);
      for (std::size_t j = 0; j < seq; ++j) {
        const Real wij = w(i, j);
        if (wij == Real{0}) continue;
        const auto vj = v.row(h, j);
        for (std::size_t c = 0; c < d; ++c) out[c] += wij * vj[c];
      }
    }
  }
  return result;
}

AttentionResult attention_forward(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                                  const SequenceLayout& layout, const AttentionConfig& config) {
  return attention_forward(q, k, v, std::make_shared<const AttentionPlan>(layout, config));
}

AttentionGrads attention_backward(const AttentionState& state, const HeadTensor& grad_output) {
  if (!state.plan) throw InvalidInput("attention_backward: state has no plan");
  const AttentionPlan& p = *state.plan;
  const std::size_t seq = p.seq_len();
  if (!grad_output.same_shape(state.v) || !state.q_rot.same_shape(state.v) ||
      !state.k_rot.same_shape(state.v) || state.v.seq_len() != seq ||
      state.weights.size() != state.v.heads()) {
    throw InvalidInput("attention_backward: state/grad shape mismatch");
  }
  const std::size_t heads = state.v.heads();
  const std::size_t d = state.v.d_head();
  AttentionGrads g{HeadTensor(heads, seq, d), HeadTensor(heads, seq, d), HeadTensor(heads, seq, d)};

  const auto nheads = static_cast<std::ptrdiff_t>(heads);
#pragma omp parallel for schedule(static) if (worth_parallel(heads, seq, d))
  for (std::ptrdiff_t hh = 0; hh < nheads; ++hh) {
    const auto h = static_cast<std::size_t>(hh);
    const Matrix& w = state.weights[h];
    std::vector<Real> dw(seq);
    for (std::size_t i = 0; i < seq; ++i) {
      const auto go = grad_output.row(h, i);
      // dL/dW_ij = <dO_i, V_j>; softmax Jacobian gives
      // dL/dS_ij = W_ij (dW_ij - sum_k W_ik dW_ik).
      Real weighted = 0;
      for (std::size_t j = 0; j < seq; ++j) {
        const Real wij = w(i, j);
        if (wij == Real{0}) {
          dw[j] = 0;
          continue;
        }
        dw[j] = dot(go, state.v.row(h, j));
        weighted += wij * dw[j];
        auto gv = g.grad_v.row(h, j);
        for (std::size_t c = 0; c < d; ++c) gv[c] += wij * go[c];
      }
      auto gq = g.grad_q.row(h, i);
      const auto qi = state.q_rot.row(h, i);
      for (std::size_t j = 0; j < seq; ++j) {
        const Real wij = w(i, j);
        if (wij == Real{0}) continue;
        const Real ds = p.scale() * wij * (dw[j] - weighted);
        const auto kj = state.k_rot.row(h, j);
        auto gk = g.grad_k.row(h, j);
        for (std::size_t c = 0; c < d; ++c) {
          gq[c] += ds * kj[c];
          gk[c] += ds * qi[c];
        }
      }
    }
    // Gradients so far are w.r.t. the rotated rows; rotations are
    // orthonormal so the inverse rotation maps them back. The APE term is
    // additive and passes gradients through unchanged.
    for (std::size_t t = 0; t < seq; ++t) {
      p.unrotate(g.grad_q.row(h, t), t);
      p.unrotate(g.grad_k.row(h, t), t);
    }
  }
  return g;
}

HeadTensor attention_brute_oracle(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                                  const PositionTable& table, const SequenceLayout& layout,
                                  const AttentionConfig& config) {
  config.validate();
  const auto seq = static_cast<std::size_t>(layout.length());
  if (table.size() != seq) throw InvalidInput("attention oracle: table does not match layout");
  check_inputs(q, k, v, config, seq);
  const FrequencyTable freqs = frequencies(config.rope);
  const Real scale = config.effective_scale();
  const std::size_t d = config.d_head;
  const auto radius = static_cast<std::int64_t>(config.rpe_bias.size() / 2);

  auto position = [&](std::size_t n) -> Real {
    const auto global = static_cast<Real>(table.global_ids[n]);
    const auto temporal = static_cast<Real>(table.temporal_ids[n]);
    switch (config.pe_mode) {
      case PeMode::TimeRopeOnly: return config.rope.gamma * temporal;
      case PeMode::DualRope: return global + config.rope.gamma * temporal;
      default: return global;
    }
  };
  auto with_ape = [&](std::span<const Real> row, std::size_t n) {
    std::vector<Real> out(row.begin(), row.end());
    if (config.pe_mode == PeMode::TimeApe) {
      const auto id = static_cast<Real>(table.temporal_ids[n]);
      for (std::size_t t = 0; t < d / 2; ++t) {
        out[2 * t] += std::sin(id * freqs.thetas[t]);
        out[2 * t + 1] += std::cos(id * freqs.thetas[t]);
      }
    }
    return out;
  };

  HeadTensor out(q.heads(), seq, d);
  for (std::size_t h = 0; h < q.heads(); ++h) {
    for (std::size_t i = 0; i < seq; ++i) {
      const auto qi = with_ape(q.row(h, i), i);
      std::vector<Real> logits;
      std::vector<std::size_t> keys;
      for (std::size_t j = 0; j < seq; ++j) {
        if (!allowed(config.mask_kind, layout, static_cast<std::int64_t>(i),
                     static_cast<std::int64_t>(j), config.mask_options)) {
          continue;
        }
        const auto kj = with_ape(k.row(h, j), j);
        Real s = scale * pair_score(qi, kj, position(i), position(j), freqs);
        if (config.pe_mode == PeMode::TimeRpe) {
          std::int64_t diff = table.temporal_ids[i] - table.temporal_ids[j];
          diff = std::max(-radius, std::min(radius, diff));
          s += config.rpe_bias[static_cast<std::size_t>(diff + radius)];
        }
        logits.push_back(s);
        keys.push_back(j);
      }
      if (keys.empty()) continue;
      const Real top = *std::max_element(logits.begin(), logits.end());
      Real z = 0;
      for (Real& l : logits) {
        l = std::exp(l - top);
        z += l;
      }
      auto o = out.row(h, i);
      for (std::size_t a = 0; a < keys.size(); ++a) {
        const auto vj = v.row(h, keys[a]);
        for (std::size_t c = 0; c < d; ++c) o[c] += (logits[a] / z) * vj[c];
      }
    }
  }
  return out;
}

HeadTensor attention_brute_oracle(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                                  const SequenceLayout& layout, const AttentionConfig& config) {
  return attention_brute_oracle(
      q, k, v, adjusted_positions(layout, config.rope.gamma, config.temporal_options), layout,
      config);
}

}  // namespace tcattn
