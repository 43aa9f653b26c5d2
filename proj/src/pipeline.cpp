#include "mixmae/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "mixmae/error.hpp"

namespace mixmae {

namespace fs = std::filesystem;

namespace {

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<GroupMask> single_masks(const EncoderConfig& enc, std::int64_t n) {
  return std::vector<GroupMask>(static_cast<std::size_t>(n),
                                GroupMask::single(enc.mask_grid(), enc.mask_grid(), enc.unit_px()));
}

bool mixing(const RunConfig& c) { return c.mask.fill == CorruptionMode::kMix; }

}  // namespace

Tensor to_network_input(std::span<const Image> images) {
  if (images.empty()) fail(ErrorKind::kParameter, "to_network_input: no images");
  const Image& f = images.front();
  std::vector<float> data;
  data.reserve(images.size() * f.pixels.size());
  for (const auto& img : images) {
    if (!img.same_geometry(f)) fail(ErrorKind::kParameter, "to_network_input: mixed geometries");
    for (float v : img.pixels) data.push_back((v - 0.5f) * 2.0f);
  }
  return Tensor::from({static_cast<std::int64_t>(images.size()), f.channels, f.height, f.width},
                      std::move(data));
}

Model::Model(const RunConfig& cfg, std::uint64_t seed) : config(cfg) {
  config.validate();
  Rng rng(derive_seed(seed, Stream::kInit));
  const bool holdout = config.mask.extra_mask_fraction > 0.0;
  const int mix_groups = config.reduction == Reduction::kMixEmbedding
                             ? config.mask.groups + (holdout ? 1 : 0)
                             : 0;
  encoder = std::make_unique<Encoder<float>>(config.encoder, mix_groups, store, rng);
  decoder = std::make_unique<Decoder<float>>(config.decoder, store, rng, encoder->max_depth());
  if (config.mask.fill == CorruptionMode::kLearnable || holdout) {
    const std::int64_t u = config.encoder.unit_px();
    fill_unit = store.normal("fill_unit", {config.encoder.in_chans, u, u}, 0.02, 0, rng);
  }
}

void load_parameters(const Checkpoint& ckpt, ParamStore<float>& store, bool partial) {
  for (auto& p : store.params()) {
    const NamedArray* t = ckpt.find(p.name);
    if (!t) {
      if (partial) continue;
      fail(ErrorKind::kConfig, "checkpoint has no tensor " + p.name);
    }
    if (t->shape != p.tensor.shape())
      fail(ErrorKind::kConfig, "checkpoint tensor " + p.name + " has shape " + shape_str(t->shape) +
                                   ", model expects " + shape_str(p.tensor.shape()));
    auto dst = p.tensor.mutable_data();
    std::copy(t->data.begin(), t->data.end(), dst.begin());
  }
}

Checkpoint capture(const RunConfig& config, const ParamStore<float>& store,
                   const AdamW<float>* optimizer, std::uint64_t seed, std::int64_t step,
                   std::int64_t epoch) {
  Checkpoint c;
  c.config_text = config.serialize();
  c.config_hash = config.model_hash();
  c.seed = seed;
  c.step = step;
  c.epoch = epoch;
  for (const auto& p : store.params())
    c.tensors.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  if (optimizer) {
    c.optimizer_step = optimizer->steps();
    const auto& m = optimizer->first_moments();
    const auto& v = optimizer->second_moments();
    for (std::size_t i = 0; i < optimizer->params().size(); ++i)
      c.moments.push_back({optimizer->params()[i].name, m[i], v[i]});
  }
  return c;
}

BatchPlanner::BatchPlanner(const RunConfig& config, const Dataset& data, std::uint64_t seed)
    : config_(config), data_(data), seed_(seed) {
  if (data.height != config.encoder.img_px || data.width != config.encoder.img_px ||
      data.channels != config.encoder.in_chans)
    fail(ErrorKind::kConfig, "dataset images are " + std::to_string(data.channels) + "x" +
                                 std::to_string(data.height) + "x" + std::to_string(data.width) +
                                 ", model expects " + std::to_string(config.encoder.in_chans) +
                                 "x" + std::to_string(config.encoder.img_px) + "x" +
                                 std::to_string(config.encoder.img_px));
  steps_per_epoch_ = static_cast<std::int64_t>(data.size()) / config.train.batch_size;
  if (steps_per_epoch_ < 1)
    fail(ErrorKind::kConfig, "dataset of " + std::to_string(data.size()) +
                                 " images is smaller than one batch of " +
                                 std::to_string(config.train.batch_size));
}

std::vector<std::int64_t> BatchPlanner::indices(std::int64_t epoch, std::int64_t step) const {
  std::vector<std::int64_t> order(data_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed_, Stream::kEpochOrder, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(std::span<std::int64_t>(order));
  const std::int64_t bs = config_.train.batch_size;
  return {order.begin() + step * bs, order.begin() + (step + 1) * bs};
}

Batch BatchPlanner::make(std::int64_t epoch, std::int64_t step, bool keep_images) const {
  const auto& c = config_;
  const int k = c.mask.groups;
  const int grid = c.encoder.mask_grid(), unit = c.encoder.unit_px(), edge = c.encoder.img_px;
  const bool mix = mixing(c);
  const bool holdout = c.mask.extra_mask_fraction > 0.0;
  const auto idx = indices(epoch, step);
  Batch b;
  b.sources_per_input = mix ? k : 1;
  const std::int64_t inputs = static_cast<std::int64_t>(idx.size()) / b.sources_per_input;
  if (mix && c.mask.dual) {
    for (int g = 0; g < k; ++g) b.groups.push_back(g);
  } else {
    b.groups = {0};
  }
  std::vector<Image> inputs_px;
  inputs_px.reserve(inputs);
  for (std::int64_t i = 0; i < inputs; ++i) {
    std::vector<Image> sources;
    for (int s = 0; s < b.sources_per_input; ++s) {
      const std::int64_t di = idx[i * b.sources_per_input + s];
      Rng rng(derive_seed(seed_, Stream::kAugment, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(di)));
      const CropParams crop = sample_crop(data_.height, data_.width, c.crop_scale_min, c.hflip, rng);
      sources.push_back(apply_crop(data_.image(static_cast<std::size_t>(di)), crop, edge));
      b.targets.push_back(normalize_targets(sources.back(), unit));
    }
    const std::uint64_t input_id = static_cast<std::uint64_t>(step * inputs + i);
    const std::uint64_t mseed = derive_seed(seed_, Stream::kMask, static_cast<std::uint64_t>(epoch), input_id);
    GroupMask mask = holdout ? sample_group_mask_with_holdout(grid, grid, k, unit,
                                                              c.mask.extra_mask_fraction * k, mseed)
                             : sample_group_mask(grid, grid, k, unit, mseed);
    Image input;
    if (mix) {
      if (holdout) {
        sources.emplace_back(sources.front().channels, edge, edge, 0.5f);
        b.fill.push_back(UnitMask::owned_by(mask, k));
      }
      input = mix_images(sources, mask);
      if (holdout) sources.pop_back();
    } else if (c.mask.fill == CorruptionMode::kLearnable) {
      input = sources.front();
      b.fill.push_back(UnitMask::hidden_from(mask, 0));
    } else {
      input = corrupt_pixels(sources.front(), UnitMask::hidden_from(mask, 0), c.mask.fill,
                             derive_seed(seed_, Stream::kCorrupt, static_cast<std::uint64_t>(epoch), input_id),
                             ZoomRange{1.0, c.mask.zoom_max});
    }
    b.masks.push_back(std::move(mask));
    if (keep_images) {
      for (auto& s : sources) b.originals.push_back(s);
      b.mixed.push_back(input);
    }
    inputs_px.push_back(std::move(input));
  }
  b.pixels = to_network_input(inputs_px);
  return b;
}

StepResult pretrain_step(Model& model, const Batch& batch) {
  Tape<float>::current().clear();
  const auto& c = model.config;
  Tensor pixels = batch.pixels;
  if (!batch.fill.empty()) {
    if (!model.uses_fill_unit()) fail(ErrorKind::kInternal, "batch needs a learnable fill unit");
    pixels = fill_learnable(pixels, std::span<const UnitMask>(batch.fill), model.fill_unit);
  }
  const Reduction reduction = mixing(c) ? c.reduction : Reduction::kNone;
  auto enc = model.encoder->forward(pixels, batch.masks, reduction);
  auto pred = model.decoder->forward(enc.tokens, batch.masks, batch.groups);
  const std::int64_t n = static_cast<std::int64_t>(batch.masks.size());
  auto targets = stack_targets<float>(batch.targets, n, batch.sources_per_input, batch.groups);
  auto loss = dual_loss(pred, targets, batch.masks, batch.groups);
  StepResult r;
  r.loss = loss.total.item();
  r.group_loss.assign(static_cast<std::size_t>(c.mask.groups), 0.0);
  for (std::size_t g = 0; g < batch.groups.size(); ++g)
    r.group_loss[batch.groups[g]] = loss.terms[g].item();
  if (!std::isfinite(r.loss)) {
    Tape<float>::current().clear();
    return r;
  }
  backward(loss.total);
  return r;
}

Dataset load_dataset(const RunConfig& config) {
  if (config.data.source == "ppm") return load_ppm(config.data.path);
  SyntheticOptions opt;
  opt.noise = config.data.noise;
  return generate_synthetic(config.data.count, config.encoder.img_px, config.data.seed, opt);
}

PretrainResult pretrain(Model& model, const Dataset& data, const PretrainOptions& options) {
  const RunConfig& cfg = model.config;
  std::uint64_t seed = cfg.seed;
  std::int64_t start = 0;
  Checkpoint resumed;
  if (!options.resume.empty()) {
    resumed = load_checkpoint(options.resume);
    check_config_hash(resumed, cfg.model_hash(), options.force, options.resume);
    load_parameters(resumed, model.store);
    seed = resumed.seed;
    start = resumed.step;
  }
  BatchPlanner planner(cfg, data, seed);
  TrainConfig tc = cfg.train;
  tc.steps_per_epoch = planner.steps_per_epoch();
  AdamW<float> opt(model.store.params(),
                   layerwise_groups(model.store.params(), model.max_depth(), 1.0), tc);
  if (!options.resume.empty()) {
    if (static_cast<std::int64_t>(resumed.moments.size()) != 0) {
      std::vector<std::vector<float>> m, v;
      for (const auto& p : model.store.params()) {
        const MomentPair* found = nullptr;
        for (const auto& mp : resumed.moments)
          if (mp.name == p.name) found = &mp;
        if (!found) fail(ErrorKind::kConfig, "checkpoint lacks optimizer state for " + p.name);
        m.push_back(found->first);
        v.push_back(found->second);
      }
      opt.restore(resumed.optimizer_step, std::move(m), std::move(v));
    }
    say(options.log, "resuming at step " + std::to_string(start) + " from " + options.resume);
  }

  std::unique_ptr<MetricsWriter> metrics;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    const std::string path = (fs::path(options.out_dir) / "metrics.csv").string();
    if (start > 0) truncate_metrics(path, start + 1);
    metrics = std::make_unique<MetricsWriter>(path, cfg.mask.groups, start > 0);
  }

  PretrainResult result;
  const std::int64_t total = tc.total_steps();
  const std::int64_t stop = options.stop_after_step >= 0 ? std::min(total, options.stop_after_step) : total;
  auto save = [&](const std::string& name, std::int64_t step) {
    if (options.out_dir.empty()) return;
    const std::string path = (fs::path(options.out_dir) / name).string();
    save_checkpoint(path, capture(cfg, model.store, &opt, seed, step, step / tc.steps_per_epoch));
    result.checkpoint = path;
  };
  double epoch_loss = 0.0;
  std::int64_t epoch_rows = 0;
  auto epoch_start = std::chrono::steady_clock::now();
  for (std::int64_t step = start; step < stop; ++step) {
    const std::int64_t epoch = step / tc.steps_per_epoch, j = step % tc.steps_per_epoch;
    const auto t0 = std::chrono::steady_clock::now();
    const Batch batch = planner.make(epoch, j);
    model.store.zero_grad();
    const StepResult r = pretrain_step(model, batch);
    if (!std::isfinite(r.loss))
      fail(ErrorKind::kNumeric, "non-finite loss at step " + std::to_string(step + 1) +
                                    "; last good checkpoint: " +
                                    (result.checkpoint.empty() ? "none" : result.checkpoint));
    const double lr = tc.lr_at(step);
    opt.step(lr);
    model.store.zero_grad();
    const auto t1 = std::chrono::steady_clock::now();
    MetricsRow row{step + 1, epoch, r.loss, lr, r.group_loss,
                   std::chrono::duration<double, std::milli>(t1 - t0).count()};
    if (metrics) metrics->write(row);
    result.rows.push_back(row);
    result.steps = step + 1;
    epoch_loss += r.loss;
    ++epoch_rows;
    const bool epoch_end = (step + 1) % tc.steps_per_epoch == 0;
    if (epoch_end) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch%03lld.mxmm", static_cast<long long>(epoch + 1));
      save(name, step + 1);
      save("latest.mxmm", step + 1);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
      say(options.log, "epoch " + std::to_string(epoch + 1) + "/" + std::to_string(tc.epochs) +
                           fmt("  loss %.4f", epoch_loss / static_cast<double>(epoch_rows)) +
                           fmt("  lr %.3g", lr) + fmt("  %.1f s", secs));
      result.final_loss = epoch_loss / static_cast<double>(epoch_rows);
      epoch_loss = 0.0;
      epoch_rows = 0;
      epoch_start = std::chrono::steady_clock::now();
    } else if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      save("latest.mxmm", step + 1);
    }
    if (step + 1 == stop && !epoch_end) {
      save("latest.mxmm", step + 1);
      if (epoch_rows > 0) result.final_loss = epoch_loss / static_cast<double>(epoch_rows);
    }
  }
  if (result.steps == 0) result.steps = start;
  return result;
}

std::int64_t train_split(std::int64_t count) { return count * 4 / 5; }

std::vector<std::vector<float>> extract_features(const Model& model, const Dataset& data) {
  NoGrad<float> guard;
  const auto& enc = model.config.encoder;
  std::vector<std::vector<float>> out;
  const std::int64_t n = static_cast<std::int64_t>(data.size()), bs = 64;
  for (std::int64_t s = 0; s < n; s += bs) {
    const std::int64_t e = std::min(n, s + bs);
    std::vector<Image> imgs;
    for (std::int64_t i = s; i < e; ++i) imgs.push_back(data.image(static_cast<std::size_t>(i)));
    const auto masks = single_masks(enc, e - s);
    auto res = model.encoder->forward(to_network_input(imgs), masks, Reduction::kNone);
    auto pooled = mean_axis(res.features, 1);
    const std::int64_t c = pooled.dim(1);
    for (std::int64_t i = 0; i < e - s; ++i)
      out.emplace_back(pooled.data().begin() + i * c, pooled.data().begin() + (i + 1) * c);
  }
  return out;
}

namespace {

Tensor nll_loss(const Tensor& logits, const std::vector<int>& labels) {
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  auto idx = std::make_shared<std::vector<std::int64_t>>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) fail(ErrorKind::kIndex, "label out of range");
    (*idx)[i] = i * k + labels[i];
  }
  auto picked = gather(log_softmax(logits, 1), IndexMap(idx), {n});
  return scale(mean(picked), -1.0f);
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  std::int64_t hit = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < k; ++j)
      if (logits.at(i * k + j) > logits.at(i * k + best)) best = j;
    hit += best == labels[i];
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

void require_labels(const Dataset& data) {
  if (!data.labeled() || data.classes < 2)
    fail(ErrorKind::kContract, "probe and finetune need a labelled dataset");
}

}  // namespace

EvalResult linear_probe(const Model& model, const Dataset& data, const LogFn& log) {
  require_labels(data);
  const auto& pc = model.config.probe;
  const auto feats = extract_features(model, data);
  const std::int64_t n = static_cast<std::int64_t>(feats.size()), split = train_split(n);
  const std::int64_t d = static_cast<std::int64_t>(feats.front().size());
  // Standardise with training-split statistics.
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::int64_t i = 0; i < split; ++i)
    for (std::int64_t j = 0; j < d; ++j) mu[j] += feats[i][j];
  for (auto& m : mu) m /= static_cast<double>(split);
  for (std::int64_t i = 0; i < split; ++i)
    for (std::int64_t j = 0; j < d; ++j) sd[j] += (feats[i][j] - mu[j]) * (feats[i][j] - mu[j]);
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(split)) + 1e-6;
  auto rows = [&](std::int64_t lo, std::int64_t hi) {
    std::vector<float> v;
    for (std::int64_t i = lo; i < hi; ++i)
      for (std::int64_t j = 0; j < d; ++j)
        v.push_back(static_cast<float>((feats[i][j] - mu[j]) / sd[j]));
    return Tensor::from({hi - lo, d}, std::move(v));
  };
  const Tensor xtrain = rows(0, split), xtest = rows(split, n);
  const std::vector<int> ytrain(data.labels.begin(), data.labels.begin() + split);
  const std::vector<int> ytest(data.labels.begin() + split, data.labels.end());

  ParamStore<float> store;
  Rng rng(derive_seed(model.config.seed, Stream::kProbe));
  LinearLayer<float> head;
  head.init(store, "probe.head", d, data.classes, true, 0, rng);
  TrainConfig tc;
  tc.base_lr = pc.lr;
  tc.batch_size = 256;  // lr is used as given
  tc.weight_decay = pc.weight_decay;
  tc.beta2 = 0.999;
  tc.warmup_epochs = 0;
  tc.epochs = pc.epochs;
  tc.steps_per_epoch = (split + pc.batch_size - 1) / pc.batch_size;
  AdamW<float> opt(store.params(), layerwise_groups(store.params(), 0, 1.0), tc);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < pc.epochs; ++epoch) {
    std::vector<std::int64_t> order(split);
    std::iota(order.begin(), order.end(), 0);
    Rng erng(derive_seed(model.config.seed, Stream::kProbe, static_cast<std::uint64_t>(epoch) + 1));
    erng.shuffle(std::span<std::int64_t>(order));
    for (std::int64_t s = 0; s < split; s += pc.batch_size) {
      const std::int64_t e = std::min(split, s + pc.batch_size);
      auto idx = std::make_shared<std::vector<std::int64_t>>(order.begin() + s, order.begin() + e);
      std::vector<int> y;
      for (auto i : *idx) y.push_back(ytrain[i]);
      auto x = gather_rows(xtrain, IndexMap(idx), d, {e - s, d});
      store.zero_grad();
      auto loss = nll_loss(head(x), y);
      backward(loss);
      opt.step(tc.lr_at(step++));
    }
  }
  store.zero_grad();
  NoGrad<float> guard;
  EvalResult r;
  r.train_accuracy = accuracy(head(xtrain), ytrain);
  r.test_accuracy = accuracy(head(xtest), ytest);
  r.train_count = split;
  r.test_count = n - split;
  say(log, fmt("linear probe: train %.4f", r.train_accuracy) + fmt("  test %.4f", r.test_accuracy));
  return r;
}

EvalResult finetune(Model& model, const Dataset& data, std::uint64_t seed, const LogFn& log) {
  require_labels(data);
  const auto& cfg = model.config;
  const auto& enc_cfg = cfg.encoder;
  const std::int64_t n = static_cast<std::int64_t>(data.size()), split = train_split(n);
  const int depth = model.max_depth();
  ParamStore<float> head_store;
  Rng rng(derive_seed(seed, Stream::kInit, 1));
  LinearLayer<float> head;
  head.init(head_store, "classifier.head", enc_cfg.channels[3], data.classes, true, depth, rng);

  std::vector<NamedParam<float>> params;
  for (const auto& p : model.store.params())
    if (p.name.rfind("encoder.", 0) == 0 && p.name.rfind("encoder.to_decoder", 0) != 0 &&
        p.name.find(".mix_embed") == std::string::npos)
      params.push_back(p);
  for (const auto& p : head_store.params()) params.push_back(p);
  TrainConfig tc = cfg.finetune;
  tc.steps_per_epoch = std::max<std::int64_t>(1, split / tc.batch_size);
  AdamW<float> opt(params, layerwise_groups(params, depth, tc.layer_decay), tc);

  auto forward = [&](const std::vector<Image>& imgs, bool train, std::uint64_t dp_seed) {
    ForwardOptions fo;
    fo.drop_path = train;
    fo.seed = dp_seed;
    const auto masks = single_masks(enc_cfg, static_cast<std::int64_t>(imgs.size()));
    auto res = model.encoder->forward(to_network_input(imgs), masks, Reduction::kNone, fo);
    return head(mean_axis(res.features, 1));
  };

  std::int64_t step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::int64_t> order(split);
    std::iota(order.begin(), order.end(), 0);
    Rng erng(derive_seed(seed, {static_cast<std::uint64_t>(Stream::kEpochOrder), 1,
                                static_cast<std::uint64_t>(epoch)}));
    erng.shuffle(std::span<std::int64_t>(order));
    double total = 0.0;
    for (std::int64_t j = 0; j < tc.steps_per_epoch; ++j) {
      std::vector<Image> imgs;
      std::vector<int> y;
      for (std::int64_t s = j * tc.batch_size; s < std::min(split, (j + 1) * tc.batch_size); ++s) {
        const std::int64_t di = order[s];
        Rng arng(derive_seed(seed, {static_cast<std::uint64_t>(Stream::kAugment), 1,
                                    static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(di)}));
        const CropParams crop = sample_crop(data.height, data.width, cfg.crop_scale_min, cfg.hflip, arng);
        imgs.push_back(apply_crop(data.image(static_cast<std::size_t>(di)), crop, enc_cfg.img_px));
        y.push_back(data.labels[di]);
      }
      Tape<float>::current().clear();
      for (auto& p : params) p.tensor.zero_grad();
      auto loss = nll_loss(forward(imgs, true, derive_seed(seed, Stream::kDropPath, step + 1)), y);
      const double lv = loss.item();
      if (!std::isfinite(lv))
        fail(ErrorKind::kNumeric, "non-finite finetune loss at step " + std::to_string(step + 1));
      backward(loss);
      opt.step(tc.lr_at(step++));
      total += lv;
    }
    say(log, "finetune epoch " + std::to_string(epoch + 1) + "/" + std::to_string(tc.epochs) +
                 fmt("  loss %.4f", total / static_cast<double>(tc.steps_per_epoch)));
  }
  for (auto& p : params) p.tensor.zero_grad();

  NoGrad<float> guard;
  auto evaluate = [&](std::int64_t lo, std::int64_t hi) {
    std::int64_t hit = 0;
    for (std::int64_t s = lo; s < hi; s += 64) {
      std::vector<Image> imgs;
      std::vector<int> y;
      for (std::int64_t i = s; i < std::min(hi, s + 64); ++i) {
        imgs.push_back(data.image(static_cast<std::size_t>(i)));
        y.push_back(data.labels[i]);
      }
      hit += static_cast<std::int64_t>(std::llround(accuracy(forward(imgs, false, 0), y) *
                                                    static_cast<double>(y.size())));
    }
    return hi > lo ? static_cast<double>(hit) / static_cast<double>(hi - lo) : 0.0;
  };
  EvalResult r;
  r.train_accuracy = evaluate(0, split);
  r.test_accuracy = evaluate(split, n);
  r.train_count = split;
  r.test_count = n - split;
  say(log, fmt("finetune: train %.4f", r.train_accuracy) + fmt("  test %.4f", r.test_accuracy));
  return r;
}

Image reconstruction_panel(Model& model, const Dataset& data, int count, std::uint64_t seed) {
  const auto& cfg = model.config;
  BatchPlanner planner(cfg, data, seed);
  Batch batch = planner.make(0, 0, true);
  const int inputs = static_cast<int>(batch.masks.size());
  count = std::clamp(count, 1, inputs);
  NoGrad<float> guard;
  Tensor pixels = batch.pixels;
  if (!batch.fill.empty())
    pixels = fill_learnable(pixels, std::span<const UnitMask>(batch.fill), model.fill_unit);
  const Reduction reduction = mixing(cfg) ? cfg.reduction : Reduction::kNone;
  auto enc = model.encoder->forward(pixels, batch.masks, reduction);
  const int groups[] = {0};
  auto pred = model.decoder->forward(enc.tokens, batch.masks, groups);
  const int edge = cfg.encoder.img_px, ch = cfg.encoder.in_chans;
  const std::int64_t per = static_cast<std::int64_t>(cfg.encoder.mask_grid()) *
                           cfg.encoder.mask_grid() * cfg.decoder.pred_len();
  Image panel(ch, edge * count, edge * 3);
  for (int i = 0; i < count; ++i) {
    const Image& original = batch.originals[static_cast<std::size_t>(i) * batch.sources_per_input];
    const Image& mixed = batch.mixed[i];
    std::span<const float> values(pred.data().data() + i * per, static_cast<std::size_t>(per));
    const Image recon =
        denormalize(values, batch.targets[static_cast<std::size_t>(i) * batch.sources_per_input]);
    const Image* cols[] = {&original, &mixed, &recon};
    for (int col = 0; col < 3; ++col)
      for (int c = 0; c < ch; ++c)
        for (int y = 0; y < edge; ++y)
          for (int x = 0; x < edge; ++x)
            panel.at(c, i * edge + y, col * edge + x) = std::clamp(cols[col]->at(c, y, x), 0.0f, 1.0f);
  }
  return panel;
}

}  // namespace mixmae
