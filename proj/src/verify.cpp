#include "tcattn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>

namespace tcattn {

namespace oracles {

std::vector<std::int64_t> temporal_ids_by_branches(const SequenceLayout& layout) {
  const std::int64_t total = layout.length();
  std::vector<std::int64_t> ids;
  ids.reserve(static_cast<std::size_t>(total));
  if (!layout.has_visual()) {
    for (std::int64_t n = 0; n < total; ++n) ids.push_back(n);
    return ids;
  }
  const auto vs = static_cast<double>(layout.prefix_len());
  const auto ve = static_cast<double>(layout.prefix_len() + layout.num_frames() * layout.tokens_per_frame() - 1);
  const auto m = static_cast<double>(layout.tokens_per_frame());
  for (std::int64_t i = 0; i < total; ++i) {
    const auto n = static_cast<double>(i);
    double id;
    if (n < vs) {
      id = n;
    } else if (n <= ve) {
      id = vs + std::floor((n - vs) / m);
    } else {
      id = n - (ve - vs + 1 - std::floor((ve - vs) / m));
    }
    ids.push_back(static_cast<std::int64_t>(id));
  }
  return ids;
}

HeadTensor textbook_causal_rope_attention(const HeadTensor& q, const HeadTensor& k,
                                          const HeadTensor& v, Real scale, Real base) {
  const std::size_t seq = q.seq_len();
  const std::size_t d = q.d_head();
  HeadTensor out(q.heads(), seq, d);
  auto rotate = [&](std::span<const Real> x, std::size_t pos) {
    std::vector<Real> r(d);
    for (std::size_t t = 0; t < d / 2; ++t) {
      const Real theta = std::pow(base, -Real(2 * t) / Real(d));
      const std::complex<Real> z =
          std::complex<Real>(x[2 * t], x[2 * t + 1]) * std::polar(Real{1}, Real(pos) * theta);
      r[2 * t] = z.real();
      r[2 * t + 1] = z.imag();
    }
    return r;
  };
  for (std::size_t h = 0; h < q.heads(); ++h) {
    Matrix qr(seq, d), kr(seq, d), vm(seq, d);
    for (std::size_t t = 0; t < seq; ++t) {
      const auto a = rotate(q.row(h, t), t);
      const auto b = rotate(k.row(h, t), t);
      for (std::size_t c = 0; c < d; ++c) {
        qr(t, c) = a[c];
        kr(t, c) = b[c];
        vm(t, c) = v.row(h, t)[c];
      }
    }
    Matrix scores = reference::matmul(qr, transpose(kr));
    Matrix mask(seq, seq);
    for (std::size_t i = 0; i < seq; ++i) {
      for (std::size_t j = 0; j < seq; ++j) {
        scores(i, j) *= scale;
        mask(i, j) = i >= j ? Real{0} : neg_inf();
      }
    }
    const Matrix o = reference::matmul(reference::masked_row_softmax(scores, mask), vm);
    for (std::size_t t = 0; t < seq; ++t)
      for (std::size_t c = 0; c < d; ++c) out.row(h, t)[c] = o(t, c);
  }
  return out;
}

}  // namespace oracles

SequenceLayout random_layout(Rng& rng, std::int64_t max_len) {
  if (max_len < 1) throw InvalidInput("random_layout: max_len must be >= 1");
  const auto side = static_cast<std::uint64_t>(max_len / 3 + 1);
  const auto span = static_cast<std::uint64_t>(std::max<std::int64_t>(1, max_len / 2));
  for (;;) {
    const auto prefix = static_cast<std::int64_t>(rng.below(side));
    const auto suffix = static_cast<std::int64_t>(rng.below(side));
    std::int64_t frames = 0, per_frame = 0;
    if (rng.uniform() < 0.75) {
      frames = 1 + static_cast<std::int64_t>(rng.below(span));
      per_frame = 1 + static_cast<std::int64_t>(rng.below(span));
    }
    const std::int64_t total = prefix + frames * per_frame + suffix;
    if (total >= 1 && total <= max_len) return build_layout(prefix, frames, per_frame, suffix);
  }
}

Real relative_error(Real analytic, Real numeric, Real floor) {
  const Real denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void note_error(GradcheckResult& r, Real analytic, Real numeric, const std::string& where) {
  const Real rel = relative_error(analytic, numeric, kGradcheckFloor);
  r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic - numeric));
  if (r.checked == 0 || rel > r.max_rel_error) {
    r.max_rel_error = rel;
    r.worst = where;
  }
  ++r.checked;
}

}  // namespace

GradcheckResult attention_gradcheck(const SequenceLayout& layout, const AttentionConfig& config,
                                    std::uint64_t seed, Real step) {
  const auto seq = static_cast<std::size_t>(layout.length());
  Rng rng(seed);
  HeadTensor inputs[3] = {HeadTensor::random(config.num_heads, seq, config.d_head, rng),
                          HeadTensor::random(config.num_heads, seq, config.d_head, rng),
                          HeadTensor::random(config.num_heads, seq, config.d_head, rng)};
  const HeadTensor weight = HeadTensor::random(config.num_heads, seq, config.d_head, rng);
  auto plan = std::make_shared<const AttentionPlan>(layout, config);

  auto loss = [&]() {
    const auto out = attention_forward(inputs[0], inputs[1], inputs[2], plan).output;
    Real l = 0;
    for (std::size_t i = 0; i < out.data().size(); ++i) l += weight.data()[i] * out.data()[i];
    return l;
  };

  const AttentionResult fwd = attention_forward(inputs[0], inputs[1], inputs[2], plan);
  const AttentionGrads grads = attention_backward(fwd.state, weight);
  const HeadTensor* analytic[3] = {&grads.grad_q, &grads.grad_k, &grads.grad_v};
  const char* names[3] = {"Q", "K", "V"};

  GradcheckResult result;
  for (int which = 0; which < 3; ++which) {
    auto& data = inputs[which].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real saved = data[i];
      data[i] = saved + step;
      const Real up = loss();
      data[i] = saved - step;
      const Real down = loss();
      data[i] = saved;
      const Real numeric = (up - down) / (2 * step);
      note_error(result, analytic[which]->data()[i], numeric,
                 std::string(names[which]) + "[" + std::to_string(i) + "]");
    }
  }
  return result;
}

TrialConfig micro_trial_config() {
  TrialConfig c;
  c.task = TaskKind::LastFrameRecall;
  c.layout = build_layout(2, 2, 2, 2);
  c.model.layers = 1;
  c.model.num_heads = 2;
  c.model.d_head = 4;
  c.model.ffn_mult = 2;
  c.pe_mode = PeMode::DualRope;
  c.mask_kind = MaskKind::FwBlockCausal;
  c.gamma = 1;
  c.seed = 7;
  c.steps = 1;
  return c;
}

GradcheckResult model_gradcheck(const TrialConfig& config, Real step) {
  config.validate();
  ModelConfig mc = config.model;
  mc.num_classes = num_classes(config.task, config.layout);
  mc.vocab = vocab::kSize;
  auto plan = std::make_shared<const AttentionPlan>(config.layout, attention_config_for(config));
  TinyModel model(mc, plan, config.seed);
  const Dataset data = gen_task(config.task, config.layout, config.seed, 1);
  const Example& ex = data.examples.front();

  std::vector<Real> grad(model.num_params(), Real{0});
  model.forward_backward(ex, grad);

  GradcheckResult result;
  auto params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Real saved = params[i];
    params[i] = saved + step;
    const Real up = model.forward(ex).loss;
    params[i] = saved - step;
    const Real down = model.forward(ex).loss;
    params[i] = saved;
    note_error(result, grad[i], (up - down) / (2 * step), "param[" + std::to_string(i) + "]");
  }
  return result;
}

bool SelftestReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.ok; });
}

std::string SelftestReport::text() const {
  std::string out;
  for (const auto& c : checks) {
    out += (c.ok ? "PASS " : "FAIL ") + c.name + "  " + c.detail + "\n";
  }
  return out;
}

std::string SelftestReport::first_failure() const {
  for (const auto& c : checks) {
    if (!c.ok) return c.name;
  }
  return {};
}

namespace {

std::string sci(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", static_cast<double>(v));
  return buf;
}

CheckLine check_max(std::string name, Real value, Real limit) {
  return {std::move(name), value < limit, "max=" + sci(value) + " limit=" + sci(limit)};
}

}  // namespace

SelftestReport run_selftest() {
  SelftestReport report;
  auto& out = report.checks;

  {
    Rng rng(101);
    std::size_t mismatches = 0;
    for (int c = 0; c < 200; ++c) {
      const auto layout = random_layout(rng, 256);
      if (temporal_ids(layout) != oracles::temporal_ids_by_branches(layout)) ++mismatches;
    }
    out.push_back({"temporal_ids_oracle", mismatches == 0,
                   "layouts=200 mismatches=" + std::to_string(mismatches)});
  }
  {
    Rng rng(102);
    Real worst = 0, worst_norm = 0, worst_comp = 0;
    for (std::size_t d : {2u, 8u, 64u, 128u}) {
      const auto freqs = frequencies({.d_head = d});
      for (int c = 0; c < 50; ++c) {
        std::vector<Real> vec(d);
        for (auto& x : vec) x = static_cast<Real>(rng.uniform(-1, 1));
        const Real pos = static_cast<Real>(rng.uniform(-500, 500));
        const Real pos2 = static_cast<Real>(rng.uniform(-500, 500));
        const auto a = apply_rotary(vec, pos, freqs);
        worst = std::max(worst, max_abs_diff(a, rotary_oracle(vec, pos, freqs)));
        worst_norm = std::max(worst_norm, std::abs(std::sqrt(dot(a, a)) - std::sqrt(dot(vec, vec))));
        worst_comp = std::max(worst_comp, max_abs_diff(apply_rotary(a, pos2, freqs),
                                                       apply_rotary(vec, pos + pos2, freqs)));
      }
    }
    out.push_back(check_max("rotary_oracle", worst, 1e-12));
    out.push_back(check_max("rotary_norm", worst_norm, 1e-12));
    out.push_back(check_max("rotary_composition", worst_comp, 1e-12));
  }
  {
    Rng rng(103);
    Real worst_sum = 0, worst_shift = 0;
    bool masked_zero = true;
    for (int c = 0; c < 50; ++c) {
      const std::size_t n = 1 + rng.below(12);
      Matrix s = random_matrix(n, n, rng, -20, 20);
      Matrix mask(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) mask(i, j) = rng.uniform() < 0.4 ? neg_inf() : Real{0};
      const Matrix w = masked_row_softmax(s, mask);
      Matrix shifted = s;
      for (std::size_t i = 0; i < n; ++i) {
        const Real cst = static_cast<Real>(rng.uniform(-50, 50));
        for (std::size_t j = 0; j < n; ++j) shifted(i, j) += cst;
      }
      worst_shift = std::max(worst_shift, max_abs_diff(w, masked_row_softmax(shifted, mask)));
      for (std::size_t i = 0; i < n; ++i) {
        Real sum = 0;
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
          if (mask(i, j) == 0) {
            sum += w(i, j);
            any = true;
          } else if (w(i, j) != 0) {
            masked_zero = false;
          }
        }
        if (any) worst_sum = std::max(worst_sum, std::abs(sum - 1));
      }
    }
    out.push_back(check_max("softmax_row_sums", worst_sum, 1e-12));
    out.push_back(check_max("softmax_shift_invariance", worst_shift, 1e-12));
    out.push_back({"softmax_masked_zero", masked_zero, masked_zero ? "exact" : "nonzero masked weight"});
    Matrix a = random_matrix(33, 17, rng), b = random_matrix(17, 29, rng);
    const bool same = matmul(a, b) == reference::matmul(a, b);
    out.push_back({"matmul_matches_reference", same, same ? "bitwise" : "differs"});
  }
  {
    Rng rng(104);
    std::size_t bad = 0;
    bool chain = true, zero_frames = true;
    for (int c = 0; c < 30; ++c) {
      const auto layout = random_layout(rng, 32);
      const auto n = layout.length();
      std::vector<AttentionMask> masks;
      for (MaskKind k : all_mask_kinds()) masks.push_back(build_mask(k, layout));
      for (std::size_t k = 0; k < masks.size(); ++k) {
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = 0; j < n; ++j)
            if (masks[k].is_allowed(i, j) != allowed(all_mask_kinds()[k], layout, i, j)) ++bad;
      }
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
          const bool causal = masks[0].is_allowed(i, j);
          const bool fwbc = masks[3].is_allowed(i, j);
          const bool full = masks[1].is_allowed(i, j);
          if ((causal && !fwbc) || (fwbc && !full)) chain = false;
        }
      }
      if (!layout.has_visual()) {
        for (const auto& m : masks) zero_frames = zero_frames && m.values == masks[0].values;
      }
    }
    out.push_back({"mask_predicate", bad == 0, "layouts=30 mismatches=" + std::to_string(bad)});
    out.push_back({"mask_superset_chain", chain, chain ? "causal<=fwbc<=full_visual" : "violated"});
    out.push_back({"mask_zero_frames_causal", zero_frames, zero_frames ? "identical" : "differs"});
  }
  {
    Rng rng(105);
    Real worst_degenerate = 0, worst_shift = 0, worst_brute = 0;
    for (int c = 0; c < 30; ++c) {
      const auto layout = random_layout(rng, 16);
      const auto seq = static_cast<std::size_t>(layout.length());
      const MaskKind kind = all_mask_kinds()[rng.below(4)];
      const PeMode mode = all_pe_modes()[rng.below(5)];
      auto config = make_attention_config(2, 8, static_cast<Real>(rng.uniform(0, 2)), kind, mode);
      const auto q = HeadTensor::random(2, seq, 8, rng);
      const auto k = HeadTensor::random(2, seq, 8, rng);
      const auto v = HeadTensor::random(2, seq, 8, rng);
      const auto fwd = attention_forward(q, k, v, layout, config);
      worst_brute = std::max(worst_brute,
                             max_abs_diff(fwd.output, attention_brute_oracle(q, k, v, layout, config)));

      auto dual0 = make_attention_config(2, 8, 0, kind, PeMode::DualRope);
      auto plain = make_attention_config(2, 8, 0, kind, PeMode::RopeOnly);
      worst_degenerate = std::max(worst_degenerate,
                                  max_abs_diff(attention_forward(q, k, v, layout, dual0).output,
                                               attention_forward(q, k, v, layout, plain).output));

      if (mode != PeMode::TimeApe) {
        const auto table = adjusted_positions(layout, config.rope.gamma);
        const auto s = static_cast<std::int64_t>(rng.below(1000));
        const auto cshift = static_cast<std::int64_t>(rng.below(1000));
        auto g = table.global_ids;
        auto t = table.temporal_ids;
        for (auto& x : g) x += s;
        for (auto& x : t) x += cshift;
        auto shifted = std::make_shared<const AttentionPlan>(
            make_position_table(g, t, config.rope.gamma), build_mask(kind, layout), config);
        worst_shift = std::max(worst_shift,
                               max_abs_diff(fwd.output, attention_forward(q, k, v, shifted).output));
      }
    }
    out.push_back(check_max("attention_brute_oracle", worst_brute, 1e-10));
    out.push_back(check_max("dual_rope_gamma0_degeneracy", worst_degenerate, 1e-12));
    out.push_back(check_max("attention_joint_shift", worst_shift, 1e-9));
  }
  {
    Rng rng(106);
    Real worst = 0;
    std::uint64_t case_seed = 1000;
    for (PeMode mode : all_pe_modes()) {
      for (MaskKind kind : all_mask_kinds()) {
        const auto layout = random_layout(rng, 8);
        const auto config = make_attention_config(2, 4, 1, kind, mode);
        worst = std::max(worst, attention_gradcheck(layout, config, case_seed++).max_rel_error);
      }
    }
    out.push_back(check_max("attention_gradcheck", worst, 1e-4));
    out.push_back(check_max("model_gradcheck", model_gradcheck(micro_trial_config()).max_rel_error, 1e-3));
  }
  return report;
}

}  // namespace tcattn
