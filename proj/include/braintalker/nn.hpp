// braintalker/nn.hpp
//
// Shared neural-network plumbing: a named parameter store with deterministic
// initialization, tape bindings that expose parameters as autodiff leaves,
// and the transformer-style building blocks (multi-head self-attention and
// the pre-norm attention+FFN block) used by the feature extractor and the
// mel generator.

#pragma once

#include "braintalker/ad.hpp"
#include "braintalker/rng.hpp"
#include "braintalker/types.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace bt::nn {

// Ordered collection of named parameter matrices. Names use dotted paths
// ("block3.attn.wq"); creation order is preserved and defines the layout of
// checkpoints and optimizer state.
class ParamStore {
 public:
  Matrix& create(const std::string& name, Index rows, Index cols);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }
  std::size_t scalar_count() const;
  // Order-sensitive FNV-1a hash over names, shapes, and raw coefficient
  // bytes. Used to verify that frozen parameters stay frozen.
  std::uint64_t checksum() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Matrix> values_;
};

// Deterministic initialization. Every parameter gets its own generator
// derived from (seed, name), so adding or removing a parameter never
// perturbs the others. Rules by the last dotted name component:
//   "gamma"           -> ones
//   starts with "b"   -> zeros (biases, "beta")
//   anything else     -> U(-sqrt(1/fan_in), sqrt(1/fan_in)), fan_in = cols
void init_params(ParamStore& store, std::uint64_t seed);

// Convenience creators following the project naming conventions.
void add_linear(ParamStore& s, const std::string& prefix, Index out, Index in);
void add_layer_norm(ParamStore& s, const std::string& prefix, Index dim);
void add_attention(ParamStore& s, const std::string& prefix, Index dim);
void add_fft_block(ParamStore& s, const std::string& prefix, Index dim, Index ffn_dim);
void add_gru(ParamStore& s, const std::string& prefix, Index hidden, Index input);

// Exposes every parameter of a store as a leaf on one tape. When trainable
// is false the leaves do not accumulate gradients (frozen modules).
class TapeBinding {
 public:
  TapeBinding(ad::Tape& tape, const ParamStore& store, bool trainable);
  ad::Var operator[](const std::string& name) const;
  Matrix grad(const std::string& name) const;
  ad::Tape& tape() const { return *tape_; }

 private:
  ad::Tape* tape_;
  std::unordered_map<std::string, ad::Var> vars_;
};

enum class Activation { kReLU, kGELU };

// Standard sinusoidal position encoding, frames x dim.
Matrix sinusoidal_positions(Index frames, Index dim);

ad::Var linear(const TapeBinding& p, const std::string& prefix, ad::Var x);
ad::Var layer_norm(const TapeBinding& p, const std::string& prefix, ad::Var x, double eps);
ad::Var multi_head_self_attention(const TapeBinding& p, const std::string& prefix, ad::Var x,
                                  int heads);
// Pre-norm residual block: y = x + Attn(LN(x)); z = y + FFN(LN(y)).
ad::Var fft_block(const TapeBinding& p, const std::string& prefix, ad::Var x, int heads,
                  Activation act, double ln_eps);
ad::Tape::GruParams gru_params(const TapeBinding& p, const std::string& prefix);

}  // namespace bt::nn
