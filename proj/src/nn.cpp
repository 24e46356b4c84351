#include "braintalker/nn.hpp"

#include <cmath>

namespace bt::nn {

Matrix& ParamStore::create(const std::string& name, Index rows, Index cols) {
  require(!contains(name), "param '" + name + "' already exists");
  require(rows > 0 && cols > 0, "param '" + name + "' has empty shape");
  order_.push_back(name);
  return values_.emplace(name, Matrix::Zero(rows, cols)).first->second;
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) fail("unknown param '" + name + "'");
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) fail("unknown param '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& name : order_) n += std::size_t(at(name).size());
  return n;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& name : order_) {
    mix(name.data(), name.size());
    const Matrix& m = at(name);
    const std::int64_t rows = m.rows(), cols = m.cols();
    mix(&rows, sizeof rows);
    mix(&cols, sizeof cols);
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) {
        const double v = m(r, c);
        mix(&v, sizeof v);
      }
  }
  return h;
}

void init_params(ParamStore& store, std::uint64_t seed) {
  for (const auto& name : store.names()) {
    Matrix& m = store.at(name);
    const auto dot = name.find_last_of('.');
    const std::string last = dot == std::string::npos ? name : name.substr(dot + 1);
    if (last == "gamma") {
      m.setOnes();
      continue;
    }
    if (!last.empty() && last[0] == 'b') {
      m.setZero();
      continue;
    }
    Rng rng(derive_seed(seed, {hash_label(name)}));
    const double limit = std::sqrt(1.0 / double(m.cols()));
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
  }
}

void add_linear(ParamStore& s, const std::string& prefix, Index out, Index in) {
  s.create(prefix + ".w", out, in);
  s.create(prefix + ".b", 1, out);
}

void add_layer_norm(ParamStore& s, const std::string& prefix, Index dim) {
  s.create(prefix + ".gamma", 1, dim);
  s.create(prefix + ".beta", 1, dim);
}

void add_attention(ParamStore& s, const std::string& prefix, Index dim) {
  add_linear(s, prefix + ".q", dim, dim);
  add_linear(s, prefix + ".k", dim, dim);
  add_linear(s, prefix + ".v", dim, dim);
  add_linear(s, prefix + ".out", dim, dim);
}

void add_fft_block(ParamStore& s, const std::string& prefix, Index dim, Index ffn_dim) {
  add_layer_norm(s, prefix + ".ln1", dim);
  add_attention(s, prefix + ".attn", dim);
  add_layer_norm(s, prefix + ".ln2", dim);
  add_linear(s, prefix + ".ffn1", ffn_dim, dim);
  add_linear(s, prefix + ".ffn2", dim, ffn_dim);
}

void add_gru(ParamStore& s, const std::string& prefix, Index hidden, Index input) {
  s.create(prefix + ".w_reset", hidden, input);
  s.create(prefix + ".w_update", hidden, input);
  s.create(prefix + ".w_cand", hidden, input);
  s.create(prefix + ".u_reset", hidden, hidden);
  s.create(prefix + ".u_update", hidden, hidden);
  s.create(prefix + ".u_cand", hidden, hidden);
  s.create(prefix + ".b_in_reset", 1, hidden);
  s.create(prefix + ".b_in_update", 1, hidden);
  s.create(prefix + ".b_in_cand", 1, hidden);
  s.create(prefix + ".b_h_reset", 1, hidden);
  s.create(prefix + ".b_h_update", 1, hidden);
  s.create(prefix + ".b_h_cand", 1, hidden);
}

TapeBinding::TapeBinding(ad::Tape& tape, const ParamStore& store, bool trainable) : tape_(&tape) {
  for (const auto& name : store.names()) vars_.emplace(name, tape.leaf(store.at(name), trainable));
}

ad::Var TapeBinding::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) fail("unknown param '" + name + "' in tape binding");
  return it->second;
}

Matrix TapeBinding::grad(const std::string& name) const { return tape_->grad((*this)[name]); }

Matrix sinusoidal_positions(Index frames, Index dim) {
  Matrix pe(frames, dim);
  for (Index t = 0; t < frames; ++t)
    for (Index i = 0; i < dim; ++i) {
      const double angle = double(t) / std::pow(10000.0, double(2 * (i / 2)) / double(dim));
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

ad::Var linear(const TapeBinding& p, const std::string& prefix, ad::Var x) {
  return p.tape().linear(x, p[prefix + ".w"], p[prefix + ".b"]);
}

ad::Var layer_norm(const TapeBinding& p, const std::string& prefix, ad::Var x, double eps) {
  return p.tape().layer_norm(x, p[prefix + ".gamma"], p[prefix + ".beta"], eps);
}

ad::Var multi_head_self_attention(const TapeBinding& p, const std::string& prefix, ad::Var x,
                                  int heads) {
  ad::Tape& t = p.tape();
  const Index dim = t.value(x).cols();
  require(heads >= 1 && dim % heads == 0, "attention: dim must be divisible by heads");
  const Index head_dim = dim / Index(heads);

  ad::Var q = linear(p, prefix + ".q", x);
  ad::Var k = linear(p, prefix + ".k", x);
  ad::Var v = linear(p, prefix + ".v", x);

  std::vector<ad::Var> outputs;
  outputs.reserve(std::size_t(heads));
  const double inv_sqrt = 1.0 / std::sqrt(double(head_dim));
  for (int h = 0; h < heads; ++h) {
    const Index start = Index(h) * head_dim;
    ad::Var qh = t.slice_cols(q, start, head_dim);
    ad::Var kh = t.slice_cols(k, start, head_dim);
    ad::Var vh = t.slice_cols(v, start, head_dim);
    ad::Var scores = t.scale(t.matmul_t(qh, kh), inv_sqrt);
    ad::Var attn = t.softmax_rows(scores);
    outputs.push_back(t.matmul(attn, vh));
  }
  return linear(p, prefix + ".out", t.concat_cols(outputs));
}

ad::Var fft_block(const TapeBinding& p, const std::string& prefix, ad::Var x, int heads,
                  Activation act, double ln_eps) {
  ad::Tape& t = p.tape();
  ad::Var attn = multi_head_self_attention(p, prefix + ".attn",
                                           layer_norm(p, prefix + ".ln1", x, ln_eps), heads);
  ad::Var y = t.add(x, attn);
  ad::Var hidden = linear(p, prefix + ".ffn1", layer_norm(p, prefix + ".ln2", y, ln_eps));
  hidden = act == Activation::kReLU ? t.relu(hidden) : t.gelu(hidden);
  return t.add(y, linear(p, prefix + ".ffn2", hidden));
}

ad::Tape::GruParams gru_params(const TapeBinding& p, const std::string& prefix) {
  ad::Tape::GruParams g;
  g.w_reset = p[prefix + ".w_reset"];
  g.w_update = p[prefix + ".w_update"];
  g.w_cand = p[prefix + ".w_cand"];
  g.u_reset = p[prefix + ".u_reset"];
  g.u_update = p[prefix + ".u_update"];
  g.u_cand = p[prefix + ".u_cand"];
  g.b_in_reset = p[prefix + ".b_in_reset"];
  g.b_in_update = p[prefix + ".b_in_update"];
  g.b_in_cand = p[prefix + ".b_in_cand"];
  g.b_h_reset = p[prefix + ".b_h_reset"];
  g.b_h_update = p[prefix + ".b_h_update"];
  g.b_h_cand = p[prefix + ".b_h_cand"];
  return g;
}

}  // namespace bt::nn
