#pragma once

// Parameter bookkeeping and the pre-norm transformer block shared by the
// encoder and the decoder.

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "mixmae/rng.hpp"
#include "mixmae/tensor.hpp"

namespace mixmae {

template <class T>
struct NamedParam {
  std::string name;
  BasicTensor<T> tensor;
  int depth = 0;  // position in the network for layer-wise lr decay
};

// Ordered registry of learnable tensors. Order is creation order and is the
// order used by checkpoints and the optimizer.
template <class T>
class ParamStore {
 public:
  BasicTensor<T> zeros(const std::string& name, Shape shape, int depth);
  BasicTensor<T> ones(const std::string& name, Shape shape, int depth);
  BasicTensor<T> normal(const std::string& name, Shape shape, double stddev, int depth, Rng& rng);
  BasicTensor<T> xavier(const std::string& name, std::int64_t fan_in, std::int64_t fan_out,
                        int depth, Rng& rng);

  const std::vector<NamedParam<T>>& params() const { return params_; }
  std::vector<NamedParam<T>>& params() { return params_; }
  const NamedParam<T>* find(const std::string& name) const;
  std::int64_t count() const;
  void zero_grad();
  void set_requires_grad(bool on);

 private:
  BasicTensor<T> add(const std::string& name, BasicTensor<T> t, int depth);
  std::vector<NamedParam<T>> params_;
};

template <class T>
struct LinearLayer {
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out] or undefined

  void init(ParamStore<T>& store, const std::string& name, std::int64_t in, std::int64_t out,
            bool with_bias, int depth, Rng& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return linear(x, weight, bias); }
};

template <class T>
struct NormLayer {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;

  void init(ParamStore<T>& store, const std::string& name, std::int64_t width, int depth);
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return layernorm(x, gamma, beta); }
};

// Row tables that route [B*N, C] tokens into per-(sample, window, head)
// attention groups and back.
struct AttentionLayout {
  std::int64_t batch = 0;
  int grid_h = 0, grid_w = 0, window = 0, heads = 0, head_dim = 0;
  int windows = 0, window_tokens = 0;
  IndexMap q_rows, k_rows, v_rows;  // into qkv viewed as rows of head_dim
  IndexMap merge_rows;              // attention output back to token order

  std::int64_t attention_groups() const { return batch * windows * heads; }
};

AttentionLayout make_attention_layout(std::int64_t batch, int grid_h, int grid_w, int window,
                                      int heads, int channels);

// Thread-safe memo of layouts and other index tables keyed by geometry.
class LayoutCache {
 public:
  const AttentionLayout& attention(std::int64_t batch, int grid_h, int grid_w, int window,
                                   int heads, int channels);
  IndexMap table(const std::string& key, const std::function<std::vector<std::int64_t>()>& build);

 private:
  std::mutex mu_;
  std::map<std::tuple<std::int64_t, int, int, int, int, int>, AttentionLayout> attention_;
  std::map<std::string, IndexMap> tables_;
};

// Additive logit bias for masked attention: 0 where allowed, -1e9 elsewhere.
constexpr double kMaskedLogit = -1e9;

template <class T>
struct TransformerBlock {
  NormLayer<T> norm1;
  LinearLayer<T> qkv;
  LinearLayer<T> proj;
  NormLayer<T> norm2;
  LinearLayer<T> fc1;
  LinearLayer<T> fc2;
  int heads = 1;

  void init(ParamStore<T>& store, const std::string& name, int channels, int heads, int depth,
            Rng& rng);

  // x: [B*N, C]. `attn_bias` is [groups, n, n] or undefined for unmasked
  // attention. Drop-path multipliers are [B*N, C] tensors holding 0 or
  // 1/(1-rate) per sample, one per residual branch, or undefined.
  BasicTensor<T> forward(const BasicTensor<T>& x, const AttentionLayout& layout,
                         const BasicTensor<T>& attn_bias, const BasicTensor<T>& keep_attn = {},
                         const BasicTensor<T>& keep_mlp = {}) const;
  BasicTensor<T> attention(const BasicTensor<T>& x, const AttentionLayout& layout,
                           const BasicTensor<T>& attn_bias) const;
};

}  // namespace mixmae
