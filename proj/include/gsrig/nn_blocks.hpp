#pragma once

#include "gsrig/nn.hpp"

// Composite layers shared by the learned components: dense layers, multi-head
// attention and pre-LN transformer blocks over token sets.

namespace gsrig::nn {

template <class S>
struct Linear {
  Ref<S> w, b;

  static Linear init(ParamStore<S>& store, const std::string& name, int in, int out, Rng& rng) {
    Linear l;
    l.w = store.add(name + ".w", dense_init<S>(rng, in, out));
    l.b = store.add(name + ".b", Mat<S>::Zero(1, out));
    return l;
  }
  Ref<S> operator()(Ref<S> x) const { return add_row(matmul(x, w), b); }
  int out_dim() const { return w->cols(); }
};

template <class S>
struct LayerNorm {
  Ref<S> gain, bias;

  static LayerNorm init(ParamStore<S>& store, const std::string& name, int d) {
    LayerNorm ln;
    ln.gain = store.add(name + ".g", Mat<S>::Ones(1, d));
    ln.bias = store.add(name + ".b", Mat<S>::Zero(1, d));
    return ln;
  }
  Ref<S> operator()(Ref<S> x) const { return layer_norm_rows(x, gain, bias); }
};

template <class S>
struct Attention {
  Linear<S> q, k, v, o;
  int heads = 1;

  static Attention init(ParamStore<S>& store, const std::string& name, int d_model, int heads,
                        Rng& rng) {
    if (heads < 1 || d_model % heads != 0)
      throw Error("ShapeError", "attention: d_model must divide into heads");
    Attention a;
    a.q = Linear<S>::init(store, name + ".q", d_model, d_model, rng);
    a.k = Linear<S>::init(store, name + ".k", d_model, d_model, rng);
    a.v = Linear<S>::init(store, name + ".v", d_model, d_model, rng);
    a.o = Linear<S>::init(store, name + ".o", d_model, d_model, rng);
    a.heads = heads;
    return a;
  }

  Ref<S> operator()(Ref<S> queries, Ref<S> keys_values) const {
    const int d = q.out_dim();
    const int dh = d / heads;
    Ref<S> Q = q(queries), K = k(keys_values), V = v(keys_values);
    std::vector<Ref<S>> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Ref<S> qh = slice_cols(Q, h * dh, dh);
      Ref<S> kh = slice_cols(K, h * dh, dh);
      Ref<S> vh = slice_cols(V, h * dh, dh);
      Ref<S> scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
      outs.push_back(matmul_sorted(softmax_rows(scores), vh));
    }
    return o(heads == 1 ? outs[0] : concat_cols(std::move(outs)));
  }
};

// Pre-LN block: x += self_attn(LN(x)); optionally x += cross_attn(LN(x), cond);
// x += FFN(LN(x)). Cross-attention keys/values are the condition tokens.
template <class S>
struct TransformerBlock {
  LayerNorm<S> ln1, ln2, ln3;
  Attention<S> self_attn, cross_attn;
  Linear<S> ff1, ff2;
  bool has_cross = false;

  static TransformerBlock init(ParamStore<S>& store, const std::string& name, int d_model,
                               int heads, int d_ff, bool has_cross, Rng& rng) {
    TransformerBlock b;
    b.ln1 = LayerNorm<S>::init(store, name + ".ln1", d_model);
    b.self_attn = Attention<S>::init(store, name + ".self", d_model, heads, rng);
    b.has_cross = has_cross;
    if (has_cross) {
      b.ln2 = LayerNorm<S>::init(store, name + ".ln2", d_model);
      b.cross_attn = Attention<S>::init(store, name + ".cross", d_model, heads, rng);
    }
    b.ln3 = LayerNorm<S>::init(store, name + ".ln3", d_model);
    b.ff1 = Linear<S>::init(store, name + ".ff1", d_model, d_ff, rng);
    b.ff2 = Linear<S>::init(store, name + ".ff2", d_ff, d_model, rng);
    return b;
  }

  Ref<S> operator()(Ref<S> x, Ref<S> cond) const {
    Ref<S> n1 = ln1(x);
    x = add(x, self_attn(n1, n1));
    if (has_cross && cond) x = add(x, cross_attn(ln2(x), cond));
    return add(x, ff2(tanh_(ff1(ln3(x)))));
  }
};

// Two-layer tanh MLP head.
template <class S>
struct Mlp {
  Linear<S> a, b;

  static Mlp init(ParamStore<S>& store, const std::string& name, int in, int hidden, int out,
                  Rng& rng) {
    Mlp m;
    m.a = Linear<S>::init(store, name + ".a", in, hidden, rng);
    m.b = Linear<S>::init(store, name + ".b", hidden, out, rng);
    return m;
  }
  Ref<S> operator()(Ref<S> x) const { return b(tanh_(a(x))); }
};

}  // namespace gsrig::nn
