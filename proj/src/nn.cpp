#include "mixmae/nn.hpp"

#include <cmath>

#include "mixmae/error.hpp"

namespace mixmae {

template <class T>
BasicTensor<T> ParamStore<T>::add(const std::string& name, BasicTensor<T> t, int depth) {
  if (find(name)) fail(ErrorKind::kInternal, "duplicate parameter name " + name);
  t.set_requires_grad(true);
  params_.push_back({name, t, depth});
  return t;
}

template <class T>
BasicTensor<T> ParamStore<T>::zeros(const std::string& name, Shape shape, int depth) {
  return add(name, BasicTensor<T>::zeros(std::move(shape)), depth);
}

template <class T>
BasicTensor<T> ParamStore<T>::ones(const std::string& name, Shape shape, int depth) {
  return add(name, BasicTensor<T>::full(std::move(shape), T(1)), depth);
}

template <class T>
BasicTensor<T> ParamStore<T>::normal(const std::string& name, Shape shape, double stddev,
                                     int depth, Rng& rng) {
  auto t = BasicTensor<T>::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.normal(0.0, stddev));
  return add(name, t, depth);
}

template <class T>
BasicTensor<T> ParamStore<T>::xavier(const std::string& name, std::int64_t fan_in,
                                     std::int64_t fan_out, int depth, Rng& rng) {
  auto t = BasicTensor<T>::zeros({fan_in, fan_out});
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return add(name, t, depth);
}

template <class T>
const NamedParam<T>* ParamStore<T>::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <class T>
std::int64_t ParamStore<T>::count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <class T>
void ParamStore<T>::set_requires_grad(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

template <class T>
void LinearLayer<T>::init(ParamStore<T>& store, const std::string& name, std::int64_t in,
                          std::int64_t out, bool with_bias, int depth, Rng& rng) {
  weight = store.xavier(name + ".weight", in, out, depth, rng);
  if (with_bias) bias = store.zeros(name + ".bias", {out}, depth);
}

template <class T>
void NormLayer<T>::init(ParamStore<T>& store, const std::string& name, std::int64_t width,
                        int depth) {
  gamma = store.ones(name + ".gamma", {width}, depth);
  beta = store.zeros(name + ".beta", {width}, depth);
}

AttentionLayout make_attention_layout(std::int64_t batch, int grid_h, int grid_w, int window,
                                      int heads, int channels) {
  if (window < 1 || grid_h % window != 0 || grid_w % window != 0)
    fail(ErrorKind::kConfig, "window " + std::to_string(window) + " does not tile a " +
                                 std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  if (heads < 1 || channels % heads != 0)
    fail(ErrorKind::kConfig, std::to_string(channels) + " channels not divisible into " +
                                 std::to_string(heads) + " heads");
  AttentionLayout l;
  l.batch = batch;
  l.grid_h = grid_h;
  l.grid_w = grid_w;
  l.window = window;
  l.heads = heads;
  l.head_dim = channels / heads;
  const int wx = grid_w / window;
  l.windows = (grid_h / window) * wx;
  l.window_tokens = window * window;
  const std::int64_t n = static_cast<std::int64_t>(grid_h) * grid_w;
  const std::int64_t rows = batch * n * heads;
  std::vector<std::int64_t> q(rows), k(rows), v(rows), merge(rows);
  for (std::int64_t b = 0; b < batch; ++b) {
    for (int y = 0; y < grid_h; ++y) {
      for (int x = 0; x < grid_w; ++x) {
        const std::int64_t token = b * n + static_cast<std::int64_t>(y) * grid_w + x;
        const std::int64_t win = (y / window) * wx + x / window;
        const std::int64_t pos = (y % window) * window + x % window;
        for (int h = 0; h < heads; ++h) {
          const std::int64_t dst = ((b * l.windows + win) * heads + h) * l.window_tokens + pos;
          q[dst] = (token * 3 + 0) * heads + h;
          k[dst] = (token * 3 + 1) * heads + h;
          v[dst] = (token * 3 + 2) * heads + h;
          merge[token * heads + h] = dst;
        }
      }
    }
  }
  auto share = [](std::vector<std::int64_t>& t) {
    return std::make_shared<const std::vector<std::int64_t>>(std::move(t));
  };
  l.q_rows = share(q);
  l.k_rows = share(k);
  l.v_rows = share(v);
  l.merge_rows = share(merge);
  return l;
}

const AttentionLayout& LayoutCache::attention(std::int64_t batch, int grid_h, int grid_w,
                                              int window, int heads, int channels) {
  std::lock_guard lock(mu_);
  auto key = std::make_tuple(batch, grid_h, grid_w, window, heads, channels);
  auto it = attention_.find(key);
  if (it == attention_.end())
    it = attention_
             .emplace(key, make_attention_layout(batch, grid_h, grid_w, window, heads, channels))
             .first;
  return it->second;
}

IndexMap LayoutCache::table(const std::string& key,
                            const std::function<std::vector<std::int64_t>()>& build) {
  std::lock_guard lock(mu_);
  auto it = tables_.find(key);
  if (it == tables_.end())
    it = tables_.emplace(key, std::make_shared<const std::vector<std::int64_t>>(build())).first;
  return it->second;
}

template <class T>
void TransformerBlock<T>::init(ParamStore<T>& store, const std::string& name, int channels,
                               int num_heads, int depth, Rng& rng) {
  heads = num_heads;
  norm1.init(store, name + ".norm1", channels, depth);
  qkv.init(store, name + ".attn.qkv", channels, 3 * channels, true, depth, rng);
  proj.init(store, name + ".attn.proj", channels, channels, true, depth, rng);
  norm2.init(store, name + ".norm2", channels, depth);
  fc1.init(store, name + ".mlp.fc1", channels, 4 * channels, true, depth, rng);
  fc2.init(store, name + ".mlp.fc2", 4 * channels, channels, true, depth, rng);
}

template <class T>
BasicTensor<T> TransformerBlock<T>::attention(const BasicTensor<T>& x,
                                              const AttentionLayout& layout,
                                              const BasicTensor<T>& attn_bias) const {
  const std::int64_t groups = layout.attention_groups();
  const std::int64_t n = layout.window_tokens, d = layout.head_dim;
  const Shape grouped{groups, n, d};
  auto qkv_out = qkv(x);
  auto q = gather_rows(qkv_out, layout.q_rows, d, grouped);
  auto k = gather_rows(qkv_out, layout.k_rows, d, grouped);
  auto v = gather_rows(qkv_out, layout.v_rows, d, grouped);
  q = scale(q, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
  auto scores = bmm(q, k, /*transpose_b=*/true);
  if (attn_bias.defined()) scores = add(scores, attn_bias);
  auto weights = softmax(scores, -1);
  auto mixed = bmm(weights, v);
  auto merged = gather_rows(mixed, layout.merge_rows, d, x.shape());
  return proj(merged);
}

template <class T>
BasicTensor<T> TransformerBlock<T>::forward(const BasicTensor<T>& x,
                                            const AttentionLayout& layout,
                                            const BasicTensor<T>& attn_bias,
                                            const BasicTensor<T>& keep_attn,
                                            const BasicTensor<T>& keep_mlp) const {
  auto branch = attention(norm1(x), layout, attn_bias);
  if (keep_attn.defined()) branch = mul(branch, keep_attn);
  auto h = add(x, branch);
  auto mlp = fc2(gelu(fc1(norm2(h))));
  if (keep_mlp.defined()) mlp = mul(mlp, keep_mlp);
  return add(h, mlp);
}

template class ParamStore<float>;
template class ParamStore<double>;
template struct LinearLayer<float>;
template struct LinearLayer<double>;
template struct NormLayer<float>;
template struct NormLayer<double>;
template struct TransformerBlock<float>;
template struct TransformerBlock<double>;

}  // namespace mixmae
