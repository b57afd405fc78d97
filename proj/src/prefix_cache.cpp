#include "sidlab/prefix_cache.hpp"

#include <cmath>
#include <string>

#include "sidlab/errors.hpp"

namespace sidlab {

namespace {

struct Hasher {
  std::uint64_t a = 0xcbf29ce484222325ULL;
  std::uint64_t b = 0x84222325cbf29ce4ULL;
  void add(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      a = (a ^ c[i]) * 0x100000001b3ULL;
      b = (b ^ c[i]) * 0x880355f21e6d1965ULL + 0x9e3779b97f4a7c15ULL;
    }
  }
  template <class T>
  void add(const T& v) {
    add(&v, sizeof(T));
  }
};

constexpr std::size_t kMemoCapacity = 4096;

}  // namespace

CachedBackend::CachedBackend(const Model& model, bool memoize, std::size_t prefix_slots)
    : model_(model), memoize_(memoize), slots_(prefix_slots < 1 ? 1 : prefix_slots) {}

const CachedBackend::Prefix& CachedBackend::prefix_for(const TokenStream& stream) {
  Hasher h;
  const int nv = stream.n_vision();
  h.add(nv);
  for (int i = 0; i < nv; ++i) {
    h.add(stream[i].position);
    h.add(stream[i].embedding.data(), stream[i].embedding.size() * sizeof(double));
  }
  const Key key{h.a, h.b};
  for (auto it = prefixes_.begin(); it != prefixes_.end(); ++it) {
    if (it->first == key) {
      prefixes_.splice(prefixes_.begin(), prefixes_, it);
      return *prefixes_.front().second;
    }
  }

  const auto& cfg = model_.config();
  const int L = cfg.num_layers, H = cfg.num_heads, D = cfg.d_model, dh = cfg.head_dim(), dc = cfg.code_dim();
  const int c0 = model_.ctx_offset();
  auto p = std::make_shared<Prefix>();
  p->nv = nv;
  p->x_in.resize(L + 1);
  p->k.assign(L, std::vector<Matrix>(H));
  p->v.assign(L, std::vector<Matrix>(H));
  Matrix x(nv, D);
  for (int i = 0; i < nv; ++i) {
    Vector f = model_.input_features(stream[i]);
    std::copy(f.begin(), f.end(), x.row(i));
  }
  const int vis = static_cast<int>(Role::kVision);
  for (int l = 0; l < L; ++l) {
    p->x_in[l] = x;
    Matrix delta(nv, dc);
    for (int hh = 0; hh < H; ++hh) {
      const auto& w = model_.layers()[l].heads[hh];
      Matrix q(nv, dh), k(nv, dh), v(nv, dh);
      for (int r = 0; r < nv; ++r) {
        Vector xn = model_.normalized(x.row(r));
        for (int a = 0; a < D; ++a) {
          const double xa = xn[a];
          if (xa == 0.0) continue;
          for (int c = 0; c < dh; ++c) {
            q(r, c) += xa * w.wq[vis](a, c);
            k(r, c) += xa * w.wk[vis](a, c);
            v(r, c) += xa * w.wv[vis](a, c);
          }
        }
      }
      if (nv > 0) {
        AttentionResult att = causal_attention(q, k, v, dh);
        for (int r = 0; r < nv; ++r)
          for (int c = 0; c < dc; ++c) delta(r, c) += att.r(r, c) / H;
      }
      p->k[l][hh] = std::move(k);
      p->v[l][hh] = std::move(v);
    }
    for (int r = 0; r < nv; ++r)
      for (int c = 0; c < dc; ++c) x(r, c0 + c) += delta(r, c);
  }
  p->x_in[L] = x;
  ++prefix_builds_;
  prefixes_.emplace_front(key, std::move(p));
  if (prefixes_.size() > slots_) prefixes_.pop_back();
  return *prefixes_.front().second;
}

PassOutput CachedBackend::full(const TokenStream& stream) {
  return run(stream, model_.config().num_layers, nullptr);
}

PassOutput CachedBackend::from_layer(const TokenStream& stream, int layer_i, const std::vector<int>& kept) {
  if (layer_i < 1 || layer_i > model_.config().num_layers)
    throw InputError("layer_i must lie in [1, " + std::to_string(model_.config().num_layers) + "]");
  return run(stream, layer_i, &kept);
}

PassOutput CachedBackend::run(const TokenStream& stream, int layer_i, const std::vector<int>* kept) {
  if (stream.empty()) throw InputError("forward: empty stream");
  stream.validate();
  const int n = static_cast<int>(stream.size());
  if (stream[n - 1].role == Role::kVision) throw InputError("forward: stream ends with a vision token");
  const auto& cfg = model_.config();
  const int L = cfg.num_layers, H = cfg.num_heads, D = cfg.d_model, dh = cfg.head_dim(), dc = cfg.code_dim();
  const int c0 = model_.ctx_offset();
  const int nv = stream.n_vision();

  std::vector<int> kept_list;
  if (kept) {
    std::vector<char> mark(nv, 0);
    for (int v : *kept) {
      if (v < 0 || v >= n || stream[v].role != Role::kVision)
        throw InputError("kept_vision contains a non-vision index: " + std::to_string(v));
      mark[v] = 1;
    }
    for (int i = 0; i < nv; ++i)
      if (mark[i]) kept_list.push_back(i);
  }

  std::pair<Key, std::vector<int>> memo_key;
  if (memoize_) {
    Hasher h;
    h.add(n);
    for (const auto& e : stream.entries()) {
      h.add(e.token);
      h.add(e.role);
      h.add(e.position);
      if (!e.embedding.empty()) h.add(e.embedding.data(), e.embedding.size() * sizeof(double));
    }
    memo_key.first = {h.a, h.b};
    memo_key.second.push_back(kept ? layer_i : -1);
    memo_key.second.insert(memo_key.second.end(), kept_list.begin(), kept_list.end());
    auto it = memo_.find(memo_key);
    if (it != memo_.end()) {
      ++memo_hits_;
      return it->second;
    }
  }

  const Prefix& pre = prefix_for(stream);
  const int nt = n - nv;
  const int n_kept = kept ? static_cast<int>(kept_list.size()) : nv;

  Matrix xt(nt, D);
  std::vector<int> roles(nt);
  for (int r = 0; r < nt; ++r) {
    Vector f = model_.input_features(stream[nv + r]);
    std::copy(f.begin(), f.end(), xt.row(r));
    roles[r] = static_cast<int>(stream[nv + r].role);
  }
  // Kept vision rows evolve on their own once pruning starts.
  Matrix xk;
  const int vis = static_cast<int>(Role::kVision);

  PassOutput out;
  out.last_rows.assign(L, std::vector<Vector>(H, Vector(n, 0.0)));
  Readout readout;
  const int no = cfg.vocab.n_objects();
  readout.perception.assign(no, 0.0);
  readout.context.assign(no, 0.0);
  Vector hv(dc, 0.0), ht(dc, 0.0);
  double vis_mass = 0.0;

  for (int l = 0; l < L; ++l) {
    const bool pruned = l >= layer_i;
    if (pruned && l == layer_i) {
      xk = Matrix(n_kept, D);
      for (int r = 0; r < n_kept; ++r) {
        const double* src = pre.x_in[l].row(kept_list[r]);
        std::copy(src, src + D, xk.row(r));
      }
    }
    // Vision columns visible in this layer, in stream order.
    std::vector<int> vcols;
    if (pruned) {
      vcols = kept_list;
    } else {
      vcols.resize(nv);
      for (int i = 0; i < nv; ++i) vcols[i] = i;
    }
    const int mv = static_cast<int>(vcols.size());
    const int m = mv + nt;

    Matrix xtn(nt, D), xkn;
    for (int r = 0; r < nt; ++r) {
      Vector v = model_.normalized(xt.row(r));
      std::copy(v.begin(), v.end(), xtn.row(r));
    }
    if (pruned) {
      xkn = Matrix(mv, D);
      for (int r = 0; r < mv; ++r) {
        Vector v = model_.normalized(xk.row(r));
        std::copy(v.begin(), v.end(), xkn.row(r));
      }
    }

    Matrix delta_t(nt, dc), delta_k(pruned ? mv : 0, dc);
    for (int hh = 0; hh < H; ++hh) {
      const auto& w = model_.layers()[l].heads[hh];
      // Rows 0..mv-1 are vision, then text.
      Matrix q(m, dh), k(m, dh), v(m, dh);
      if (pruned) {
        for (int r = 0; r < mv; ++r) {
          const double* xr = xkn.row(r);
          for (int a = 0; a < D; ++a) {
            const double xa = xr[a];
            if (xa == 0.0) continue;
            for (int c = 0; c < dh; ++c) {
              q(r, c) += xa * w.wq[vis](a, c);
              k(r, c) += xa * w.wk[vis](a, c);
              v(r, c) += xa * w.wv[vis](a, c);
            }
          }
        }
      } else {
        for (int r = 0; r < mv; ++r) {
          std::copy(pre.k[l][hh].row(r), pre.k[l][hh].row(r) + dh, k.row(r));
          std::copy(pre.v[l][hh].row(r), pre.v[l][hh].row(r) + dh, v.row(r));
        }
      }
      for (int r = 0; r < nt; ++r) {
        const int role = roles[r];
        const double* xr = xtn.row(r);
        double* qr = q.row(mv + r);
        double* kr = k.row(mv + r);
        double* vr = v.row(mv + r);
        for (int a = 0; a < D; ++a) {
          const double xa = xr[a];
          if (xa == 0.0) continue;
          const double* wq = w.wq[role].row(a);
          const double* wk = w.wk[role].row(a);
          const double* wv = w.wv[role].row(a);
          for (int c = 0; c < dh; ++c) {
            qr[c] += xa * wq[c];
            kr[c] += xa * wk[c];
            vr[c] += xa * wv[c];
          }
        }
      }
      // Attention rows: pruned vision rows (only when pruned) and text rows.
      const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
      const int first_row = pruned ? 0 : mv;
      Vector scores;
      for (int i = first_row; i < m; ++i) {
        // Text rows of layer 1 see only text.
        const int j0 = l == 0 && i >= mv ? mv : 0;
        scores.assign(i + 1 - j0, 0.0);
        const double* qi = q.row(i);
        for (int j = j0; j <= i; ++j) {
          const double* kj = k.row(j);
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[j - j0] = s * scale;
        }
        Vector pl = softmax(scores);
        Vector p(i + 1, 0.0);
        std::copy(pl.begin(), pl.end(), p.begin() + j0);
        Vector ri(dh, 0.0);
        for (int j = j0; j <= i; ++j) {
          const double* vj = v.row(j);
          for (int c = 0; c < dh; ++c) ri[c] += p[j] * vj[c];
        }
        if (i < mv) {
          for (int c = 0; c < dc; ++c) delta_k(i, c) += ri[c] / H;
        } else {
          for (int c = 0; c < dc; ++c) delta_t(i - mv, c) += ri[c] / H;
        }
        if (i == m - 1) {
          Vector& row = out.last_rows[l][hh];
          for (int j = 0; j < mv; ++j) row[vcols[j]] = p[j];
          for (int j = mv; j < m; ++j) row[nv + (j - mv)] = p[j];
          if (l == L - 1) {
            for (int j = 0; j < m; ++j) {
              const double a = p[j] / H;
              const bool is_vis = j < mv;
              if (is_vis) vis_mass += a;
              Vector& dst = is_vis ? hv : ht;
              for (int c = 0; c < dc; ++c) dst[c] += a * v(j, c);
            }
          }
        }
      }
    }
    for (int r = 0; r < nt; ++r)
      for (int c = 0; c < dc; ++c) xt(r, c0 + c) += delta_t(r, c);
    if (pruned)
      for (int r = 0; r < mv; ++r)
        for (int c = 0; c < dc; ++c) xk(r, c0 + c) += delta_k(r, c);
  }

  for (int o = 0; o < no; ++o) {
    double pv = 0.0, pt = 0.0;
    for (int c = 0; c < dc; ++c) {
      pv += model_.codes()(o, c) * hv[c];
      pt += model_.codes()(o, c) * ht[c];
    }
    readout.perception[o] = pv;
    readout.context[o] = pt;
  }
  readout.vision_mass = vis_mass;
  out.logits = model_.head_logits(stream, readout);
  out.mac_count = model_.count_macs(n, nv, kept ? layer_i : L, n_kept);

  if (memoize_) {
    if (memo_.size() >= kMemoCapacity) memo_.clear();
    memo_.emplace(std::move(memo_key), out);
  }
  return out;
}

}  // namespace sidlab
