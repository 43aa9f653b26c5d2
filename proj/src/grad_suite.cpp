#include "mixmae/grad_suite.hpp"

#include <functional>

#include "mixmae/decoder.hpp"
#include "mixmae/encoder.hpp"
#include "mixmae/mixing.hpp"
#include "mixmae/rng.hpp"

namespace mixmae {

namespace {

Tensor64 random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor64::from(std::move(shape), std::move(v));
}

// Reduces an op's output to a scalar through fixed random weights so every
// output element contributes a distinct adjoint.
class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  using Op = std::function<Tensor64(const Tensor64&)>;

  void check(const std::string& name, const Tensor64& x, const Op& op) {
    Tensor64 y;
    {
      NoGrad<double> guard;
      y = op(x);
    }
    const Tensor64 w = random_tensor(y.shape(), rng_, -1.0, 1.0);
    ScalarFn f = [op, w](const Tensor64& in) { return sum(mul(op(in), w)); };
    cases_.push_back({name, grad_check(f, x), kPrimitiveTolerance});
  }

  Tensor64 rand(Shape s, double lo = -2.0, double hi = 2.0) { return random_tensor(std::move(s), rng_, lo, hi); }
  std::vector<GradCase> take() { return std::move(cases_); }

 private:
  Rng rng_;
  std::vector<GradCase> cases_;
};

IndexMap index_map(std::vector<std::int64_t> v) {
  return std::make_shared<const std::vector<std::int64_t>>(std::move(v));
}

}  // namespace

std::vector<GradCase> primitive_grad_suite(std::uint64_t seed) {
  Suite s(seed);
  const Tensor64 a = s.rand({3, 4}), b = s.rand({3, 4}), row = s.rand({4});
  s.check("add", a, [&](const Tensor64& x) { return add(x, b); });
  s.check("add.broadcast", row, [&](const Tensor64& x) { return add(a, x); });
  s.check("sub.lhs", a, [&](const Tensor64& x) { return sub(x, b); });
  s.check("sub.rhs", b, [&](const Tensor64& x) { return sub(a, x); });
  s.check("mul", a, [&](const Tensor64& x) { return mul(x, b); });
  s.check("mul.broadcast", row, [&](const Tensor64& x) { return mul(a, x); });
  s.check("mul.scalar", Tensor64::scalar(0.7), [&](const Tensor64& x) { return mul(a, x); });
  s.check("scale", a, [](const Tensor64& x) { return scale(x, 1.5); });
  s.check("gelu", a, [](const Tensor64& x) { return gelu(x); });
  s.check("exp", a, [](const Tensor64& x) { return exp(x); });
  s.check("log", s.rand({3, 4}, 0.2, 2.0), [](const Tensor64& x) { return log(x); });
  s.check("sqrt", s.rand({3, 4}, 0.2, 2.0), [](const Tensor64& x) { return sqrt(x); });

  const Tensor64 ma = s.rand({3, 4}), mb = s.rand({4, 2});
  s.check("matmul.lhs", ma, [&](const Tensor64& x) { return matmul(x, mb); });
  s.check("matmul.rhs", mb, [&](const Tensor64& x) { return matmul(ma, x); });
  const Tensor64 ba = s.rand({2, 3, 4}), bb = s.rand({2, 4, 5}), bt = s.rand({2, 5, 4});
  s.check("bmm.lhs", ba, [&](const Tensor64& x) { return bmm(x, bb); });
  s.check("bmm.rhs", bb, [&](const Tensor64& x) { return bmm(ba, x); });
  s.check("bmm.transposed", bt, [&](const Tensor64& x) { return bmm(ba, x, true); });
  const Tensor64 lx = s.rand({2, 3, 4}), lw = s.rand({4, 5}), lb = s.rand({5});
  s.check("linear.x", lx, [&](const Tensor64& x) { return linear(x, lw, lb); });
  s.check("linear.weight", lw, [&](const Tensor64& x) { return linear(lx, x, lb); });
  s.check("linear.bias", lb, [&](const Tensor64& x) { return linear(lx, lw, x); });

  const Tensor64 sx = s.rand({2, 3, 5});
  s.check("softmax", sx, [](const Tensor64& x) { return softmax(x); });
  s.check("softmax.axis0", sx, [](const Tensor64& x) { return softmax(x, 0); });
  s.check("log_softmax", sx, [](const Tensor64& x) { return log_softmax(x); });
  const Tensor64 nx = s.rand({4, 6}), ng = s.rand({6}), nb = s.rand({6});
  s.check("layernorm.x", nx, [&](const Tensor64& x) { return layernorm(x, ng, nb); });
  s.check("layernorm.gamma", ng, [&](const Tensor64& x) { return layernorm(nx, x, nb); });
  s.check("layernorm.beta", nb, [&](const Tensor64& x) { return layernorm(nx, ng, x); });

  const Tensor64 rx = s.rand({2, 3, 4});
  s.check("reshape", rx, [](const Tensor64& x) { return reshape(x, {6, 4}); });
  s.check("transpose", rx, [](const Tensor64& x) { return transpose(x); });
  s.check("transpose.outer", rx, [](const Tensor64& x) { return transpose(x, 0, 2); });
  const IndexMap rows = index_map({5, 0, 0, 3, 2});
  s.check("gather_rows", rx, [&](const Tensor64& x) { return gather_rows(x, rows, 4, {5, 4}); });
  const IndexMap elems = index_map({23, 0, 7, 7, 11, 4});
  s.check("gather", rx, [&](const Tensor64& x) { return gather(x, elems, {2, 3}); });
  const Tensor64 cb = s.rand({1, 3, 4});
  s.check("concat.first", rx, [&](const Tensor64& x) { return concat(x, cb); });
  s.check("concat.second", cb, [&](const Tensor64& x) { return concat(rx, x); });
  s.check("sum", rx, [](const Tensor64& x) { return sum(x); });
  s.check("mean", rx, [](const Tensor64& x) { return mean(x); });
  s.check("mean_axis", rx, [](const Tensor64& x) { return mean_axis(x, 1); });

  const GroupMask gm = sample_group_mask(2, 2, 2, 1, seed);
  const Tensor64 tokens = s.rand({4, 3}), token = s.rand({3});
  const int both[] = {0, 1};
  s.check("unmix_tokens.tokens", tokens, [&](const Tensor64& x) {
    return unmix_tokens(x, std::span<const GroupMask>(&gm, 1), both, token);
  });
  s.check("unmix_tokens.mask_token", token, [&](const Tensor64& x) {
    return unmix_tokens(tokens, std::span<const GroupMask>(&gm, 1), both, x);
  });
  return s.take();
}

std::vector<GradCase> composition_grad_suite(std::uint64_t seed) {
  EncoderConfig ec;
  ec.img_px = 32;
  ec.in_chans = 3;
  ec.patch_px = 2;
  ec.channels = {4, 8, 8, 16};
  ec.heads = {1, 2, 2, 2};
  ec.blocks = {1, 1, 1, 1};
  ec.windows = {4, 4, 2, 2};
  ec.out_width = 8;
  DecoderConfig dc = DecoderConfig::full(ec);
  dc.blocks = 1;
  dc.heads = 2;
  const int k = 2, batch = 2;

  std::vector<GradCase> out;
  for (Reduction red : {Reduction::kMaskedAttention, Reduction::kMixEmbedding}) {
    ParamStore<double> store;
    Rng rng(seed);
    Encoder<double> enc(ec, red == Reduction::kMixEmbedding ? k : 0, store, rng);
    Decoder<double> dec(dc, store, rng, enc.max_depth());

    std::vector<GroupMask> masks;
    std::vector<ReconTarget> targets;
    std::vector<double> pix;
    for (int b = 0; b < batch; ++b) {
      masks.push_back(sample_group_mask(ec.mask_grid(), ec.mask_grid(), k, ec.unit_px(), seed + b));
      std::vector<Image> src;
      for (int g = 0; g < k; ++g) {
        Image im(ec.in_chans, ec.img_px, ec.img_px);
        for (auto& p : im.pixels) p = static_cast<float>(rng.uniform());
        targets.push_back(normalize_targets(im, ec.unit_px()));
        src.push_back(std::move(im));
      }
      const Image mixed = mix_images(src, masks.back());
      for (float p : mixed.pixels) pix.push_back((p - 0.5) * 2.0);
    }
    const Tensor64 pixels = Tensor64::from({batch, ec.in_chans, ec.img_px, ec.img_px}, std::move(pix));
    const std::vector<int> groups = {0, 1};
    const Tensor64 tgt = stack_targets<double>(targets, batch, k, groups);

    auto loss = [&]() {
      auto e = enc.forward(pixels, masks, red);
      auto pred = dec.forward(e.tokens, masks, groups);
      return dual_loss(pred, tgt, masks, groups).total;
    };
    GradCase c;
    c.name = std::string("encoder+decoder+loss (") + reduction_name(red) + ")";
    c.result = grad_check_params(loss, store, 1e-5, 6, seed);
    c.tolerance = kCompositionTolerance;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace mixmae
