#include "tcattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

namespace tcattn {

void ModelConfig::validate() const {
  if (layers < 1 || layers > 4) throw InvalidInput("model: layers must be in [1, 4]");
  if (num_heads == 0) throw InvalidInput("model: num_heads must be positive");
  if (d_head < 2 || d_head % 2 != 0) throw InvalidInput("model: d_head must be even and >= 2");
  if (ffn_mult == 0) throw InvalidInput("model: ffn_mult must be positive");
  if (vocab == 0) throw InvalidInput("model: vocab must be positive");
  if (num_classes == 0) throw InvalidInput("model: num_classes must be positive");
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"layers", c.layers},   {"num_heads", c.num_heads}, {"d_head", c.d_head},
          {"ffn_mult", c.ffn_mult}, {"vocab", c.vocab},       {"num_classes", c.num_classes}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (!j.is_object()) throw InvalidInput("model config JSON must be an object");
  try {
    if (j.contains("layers")) c.layers = j.at("layers").get<std::size_t>();
    if (j.contains("num_heads")) c.num_heads = j.at("num_heads").get<std::size_t>();
    if (j.contains("d_head")) c.d_head = j.at("d_head").get<std::size_t>();
    if (j.contains("ffn_mult")) c.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    if (j.contains("vocab")) c.vocab = j.at("vocab").get<std::size_t>();
    if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

constexpr Real kGeluC = 0.044715;

Real gelu(Real u) {
  const Real k = std::sqrt(Real{2} / std::numbers::pi_v<Real>);
  return Real{0.5} * u * (Real{1} + std::tanh(k * (u + kGeluC * u * u * u)));
}

Real gelu_grad(Real u) {
  const Real k = std::sqrt(Real{2} / std::numbers::pi_v<Real>);
  const Real th = std::tanh(k * (u + kGeluC * u * u * u));
  return Real{0.5} * (Real{1} + th) +
         Real{0.5} * u * (Real{1} - th * th) * k * (Real{1} + 3 * kGeluC * u * u);
}

// y[rows×out] = x[rows×in] · W[in×out] (+ b)
void linear(const Real* x, std::size_t rows, std::size_t in, const Real* w, std::size_t out,
            const Real* b, Real* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    Real* yr = y + r * out;
    if (b) {
      std::copy(b, b + out, yr);
    } else {
      std::fill(yr, yr + out, Real{0});
    }
    const Real* xr = x + r * in;
    for (std::size_t k = 0; k < in; ++k) {
      const Real xk = xr[k];
      const Real* wk = w + k * out;
      for (std::size_t c = 0; c < out; ++c) yr[c] += xk * wk[c];
    }
  }
}

// dW += xᵀ dy, db += Σ_rows dy, dx (+)= dy Wᵀ
void linear_backward(const Real* x, std::size_t rows, std::size_t in, const Real* w,
                     std::size_t out, const Real* dy, Real* dw, Real* db, Real* dx,
                     bool accumulate_dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x + r * in;
    const Real* dyr = dy + r * out;
    for (std::size_t k = 0; k < in; ++k) {
      const Real xk = xr[k];
      Real* dwk = dw + k * out;
      for (std::size_t c = 0; c < out; ++c) dwk[c] += xk * dyr[c];
    }
    if (db) {
      for (std::size_t c = 0; c < out; ++c) db[c] += dyr[c];
    }
    if (dx) {
      Real* dxr = dx + r * in;
      for (std::size_t k = 0; k < in; ++k) {
        const Real s = dot(std::span<const Real>(w + k * out, out), std::span<const Real>(dyr, out));
        dxr[k] = accumulate_dx ? dxr[k] + s : s;
      }
    }
  }
}

HeadTensor split_heads(const std::vector<Real>& x, std::size_t seq, std::size_t heads,
                       std::size_t d_head) {
  HeadTensor t(heads, seq, d_head);
  const std::size_t dim = heads * d_head;
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t s = 0; s < seq; ++s) {
      auto row = t.row(h, s);
      std::copy_n(x.data() + s * dim + h * d_head, d_head, row.begin());
    }
  }
  return t;
}

std::vector<Real> merge_heads(const HeadTensor& t) {
  const std::size_t dim = t.heads() * t.d_head();
  std::vector<Real> x(t.seq_len() * dim);
  for (std::size_t h = 0; h < t.heads(); ++h) {
    for (std::size_t s = 0; s < t.seq_len(); ++s) {
      const auto row = t.row(h, s);
      std::copy(row.begin(), row.end(), x.data() + s * dim + h * t.d_head());
    }
  }
  return x;
}

}  // namespace

struct TinyModel::Cache {
  struct Layer {
    std::vector<Real> x_in;  // T×D
    AttentionState attn;
    std::vector<Real> attn_out;  // T×D, heads merged
    std::vector<Real> x_mid;     // T×D, after attention residual
    std::vector<Real> pre_act;   // T×F
    std::vector<Real> act;       // T×F
  };
  std::vector<Layer> layers;
  std::vector<Real> x_final;  // T×D
  std::vector<Real> probs;    // C
};

TinyModel::TinyModel(const ModelConfig& config, std::shared_ptr<const AttentionPlan> plan,
                     std::uint64_t seed)
    : config_(config), plan_(std::move(plan)) {
  config_.validate();
  if (!plan_) throw InvalidInput("model: null attention plan");
  if (plan_->config().num_heads != config_.num_heads || plan_->config().d_head != config_.d_head) {
    throw InvalidInput("model: attention plan heads/d_head do not match model config");
  }
  const std::size_t dim = config_.embed_dim();
  const std::size_t ffn = config_.ffn_mult * dim;

  std::size_t cursor = 0;
  struct Init {
    std::size_t offset, count, fan_in;
  };
  std::vector<Init> inits;
  auto take = [&](std::size_t count, std::size_t fan_in) {
    const std::size_t at = cursor;
    cursor += count;
    inits.push_back({at, count, fan_in});
    return at;
  };
  // Embedding rows use fan_in 1 so tokens start distinguishable.
  embedding_ = take(config_.vocab * dim, 1);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Block b{};
    b.wq = take(dim * dim, dim);
    b.wk = take(dim * dim, dim);
    b.wv = take(dim * dim, dim);
    b.wo = take(dim * dim, dim);
    b.w1 = take(dim * ffn, dim);
    b.b1 = take(ffn, 0);
    b.w2 = take(ffn * dim, ffn);
    b.b2 = take(dim, 0);
    blocks_.push_back(b);
  }
  readout_w_ = take(dim * config_.num_classes, dim);
  readout_b_ = take(config_.num_classes, 0);

  params_.assign(cursor, Real{0});
  Rng rng(seed);
  for (const auto& init : inits) {
    if (init.fan_in == 0) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(init.fan_in));
    for (std::size_t i = 0; i < init.count; ++i) {
      params_[init.offset + i] = static_cast<Real>(rng.uniform(-bound, bound));
    }
  }
}

ForwardResult TinyModel::forward(const Example& ex) const { return run(ex, nullptr); }

ForwardResult TinyModel::forward_backward(const Example& ex, std::span<Real> grad) const {
  if (grad.size() != params_.size()) throw InvalidInput("model: gradient buffer size mismatch");
  Cache cache;
  const ForwardResult r = run(ex, &cache);
  backward(ex, cache, grad);
  return r;
}

ForwardResult TinyModel::run(const Example& ex, Cache* cache) const {
  const std::size_t seq = plan_->seq_len();
  if (ex.tokens.size() != seq) throw InvalidInput("model: example length does not match layout");
  if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= config_.num_classes) {
    throw InvalidInput("model: label out of range");
  }
  const std::size_t dim = config_.embed_dim();
  const std::size_t ffn = config_.ffn_mult * dim;
  const Real* p = params_.data();

  std::vector<Real> x(seq * dim);
  for (std::size_t t = 0; t < seq; ++t) {
    const int tok = ex.tokens[t];
    if (tok < 0 || static_cast<std::size_t>(tok) >= config_.vocab) {
      throw InvalidInput("model: token id out of vocabulary");
    }
    std::copy_n(p + embedding_ + static_cast<std::size_t>(tok) * dim, dim, x.data() + t * dim);
  }
  if (cache) cache->layers.resize(blocks_.size());

  std::vector<Real> q(seq * dim), k(seq * dim), v(seq * dim), y(seq * dim);
  std::vector<Real> pre(seq * ffn), act(seq * ffn);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    linear(x.data(), seq, dim, p + b.wq, dim, nullptr, q.data());
    linear(x.data(), seq, dim, p + b.wk, dim, nullptr, k.data());
    linear(x.data(), seq, dim, p + b.wv, dim, nullptr, v.data());
    AttentionResult attn = attention_forward(split_heads(q, seq, config_.num_heads, config_.d_head),
                                             split_heads(k, seq, config_.num_heads, config_.d_head),
                                             split_heads(v, seq, config_.num_heads, config_.d_head),
                                             plan_);
    std::vector<Real> merged = merge_heads(attn.output);
    linear(merged.data(), seq, dim, p + b.wo, dim, nullptr, y.data());
    std::vector<Real> mid(seq * dim);
    for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = x[i] + y[i];
    linear(mid.data(), seq, dim, p + b.w1, ffn, p + b.b1, pre.data());
    for (std::size_t i = 0; i < pre.size(); ++i) act[i] = gelu(pre[i]);
    std::vector<Real> next(seq * dim);
    linear(act.data(), seq, ffn, p + b.w2, dim, p + b.b2, next.data());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += mid[i];
    if (cache) {
      auto& c = cache->layers[l];
      c.x_in = std::move(x);
      c.attn = std::move(attn.state);
      c.attn_out = std::move(merged);
      c.x_mid = std::move(mid);
      c.pre_act = pre;
      c.act = act;
    }
    x = std::move(next);
  }

  const std::size_t classes = config_.num_classes;
  std::vector<Real> logits(classes);
  linear(x.data() + (seq - 1) * dim, 1, dim, p + readout_w_, classes, p + readout_b_,
         logits.data());
  const Real top = *std::max_element(logits.begin(), logits.end());
  Real z = 0;
  for (Real lg : logits) z += std::exp(lg - top);
  const Real log_z = top + std::log(z);

  ForwardResult result;
  result.loss = log_z - logits[static_cast<std::size_t>(ex.label)];
  result.predicted =
      static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  if (cache) {
    cache->probs.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) cache->probs[c] = std::exp(logits[c] - log_z);
    cache->x_final = std::move(x);
  }
  return result;
}

void TinyModel::backward(const Example& ex, const Cache& cache, std::span<Real> grad) const {
  const std::size_t seq = plan_->seq_len();
  const std::size_t dim = config_.embed_dim();
  const std::size_t ffn = config_.ffn_mult * dim;
  const std::size_t classes = config_.num_classes;
  const Real* p = params_.data();
  Real* g = grad.data();

  std::vector<Real> dlogits = cache.probs;
  dlogits[static_cast<std::size_t>(ex.label)] -= 1;

  std::vector<Real> dx(seq * dim, Real{0});
  linear_backward(cache.x_final.data() + (seq - 1) * dim, 1, dim, p + readout_w_, classes,
                  dlogits.data(), g + readout_w_, g + readout_b_, dx.data() + (seq - 1) * dim,
                  false);

  std::vector<Real> dact(seq * ffn), dmid(seq * dim), dattn(seq * dim);
  std::vector<Real> dq(seq * dim), dk(seq * dim), dv(seq * dim);
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    const Block& b = blocks_[l];
    const auto& c = cache.layers[l];
    // next = mid + act·W2 + b2
    linear_backward(c.act.data(), seq, ffn, p + b.w2, dim, dx.data(), g + b.w2, g + b.b2,
                    dact.data(), false);
    for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= gelu_grad(c.pre_act[i]);
    dmid = dx;
    linear_backward(c.x_mid.data(), seq, dim, p + b.w1, ffn, dact.data(), g + b.w1, g + b.b1,
                    dmid.data(), true);
    // mid = x_in + attn_out·Wo
    linear_backward(c.attn_out.data(), seq, dim, p + b.wo, dim, dmid.data(), g + b.wo, nullptr,
                    dattn.data(), false);
    const AttentionGrads ag = attention_backward(
        c.attn, split_heads(dattn, seq, config_.num_heads, config_.d_head));
    dq = merge_heads(ag.grad_q);
    dk = merge_heads(ag.grad_k);
    dv = merge_heads(ag.grad_v);
    dx = dmid;
    linear_backward(c.x_in.data(), seq, dim, p + b.wq, dim, dq.data(), g + b.wq, nullptr,
                    dx.data(), true);
    linear_backward(c.x_in.data(), seq, dim, p + b.wk, dim, dk.data(), g + b.wk, nullptr,
                    dx.data(), true);
    linear_backward(c.x_in.data(), seq, dim, p + b.wv, dim, dv.data(), g + b.wv, nullptr,
                    dx.data(), true);
  }
  for (std::size_t t = 0; t < seq; ++t) {
    Real* row = g + embedding_ + static_cast<std::size_t>(ex.tokens[t]) * dim;
    for (std::size_t c = 0; c < dim; ++c) row[c] += dx[t * dim + c];
  }
}

}  // namespace tcattn
