#include "starvqa/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <numeric>

#include "starvqa/errors.hpp"
#include "starvqa/evaluator.hpp"

namespace starvqa {

template <typename T>
Adam<T>::Adam(const ParamStore<T>& params, const TrainConfig& hyper)
    : lr_(hyper.lr), beta1_(hyper.beta1), beta2_(hyper.beta2), eps_(hyper.adam_eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params[i].shape());
    v_.emplace_back(params[i].shape());
  }
}

template <typename T>
void Adam<T>::step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads) {
  if (grads.size() != params.size() || m_.size() != params.size())
    throw ContractError("optimizer state does not match the parameter registry");
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    auto g = grads[i].values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      p[j] -= lr * (m[j] * inv_c1) / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

template <typename T>
Gradients<T> compute_gradients(const Model<T>& model, std::span<const Example<T>> batch) {
  if (batch.empty()) throw ContractError("training step on an empty batch");
  const std::size_t n = batch.size();
  std::vector<std::vector<Tensor<T>>> item_grads(n);
  std::vector<double> losses(n);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic, 1) if (n > 1)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    try {
      ad::Tape<T> tape;
      const auto vars = bind_params(tape, model.params, model.config);
      const auto y = forward(tape, vars, *batch[i].patches, model.config);
      const auto loss = vr_loss(tape, y, encode_mos(batch[i].mos));
      losses[i] = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(losses[i])) {
        const auto bad = tape.first_non_finite();
        throw NumericError("non-finite loss on batch item " + std::to_string(i) +
                           "; first non-finite tensor: " + bad.value_or("loss"));
      }
      tape.backward(loss);
      item_grads[i].reserve(vars.all.size());
      for (const auto& v : vars.all) item_grads[i].push_back(v.grad());
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  Gradients<T> out;
  out.item_losses = losses;
  out.grads = std::move(item_grads[0]);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t p = 0; p < out.grads.size(); ++p) {
      auto dst = out.grads[p].values();
      auto src = item_grads[i][p].values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  const T inv = T{1} / static_cast<T>(n);
  for (std::size_t p = 0; p < out.grads.size(); ++p)
    for (auto& g : out.grads[p].values()) {
      g *= inv;
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter " + model.params.name(p));
    }
  double sum = 0;
  for (double l : losses) sum += l;
  out.loss = sum / static_cast<double>(n);
  return out;
}

template <typename T>
double train_step(Model<T>& model, Adam<T>& optimizer, std::span<const Example<T>> batch) {
  auto g = compute_gradients(model, batch);
  optimizer.step(model.params, g.grads);
  return g.loss;
}

template <typename T>
double mean_loss(const Model<T>& model, std::span<const Example<T>> examples) {
  if (examples.empty()) throw ContractError("mean loss of no examples");
  double sum = 0;
  for (const auto& ex : examples) sum += vr_loss(encode_mos(ex.mos), predict(model, *ex.patches));
  return sum / static_cast<double>(examples.size());
}

template <typename T>
VideoSet<T>::VideoSet(const Manifest& manifest, const EncoderConfig& config) : config_(config) {
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    try {
      const auto store = FrameStore::open(e.frames_dir);
      if (store.height() < config.height || store.width() < config.width)
        throw InputError("frames are " + std::to_string(store.width()) + "x" + std::to_string(store.height()) +
                         ", smaller than the " + std::to_string(config.width) + "x" +
                         std::to_string(config.height) + " crop");
      videos_.push_back(load_sampled(store, config.frames, e.video_id));
    } catch (const InputError& err) {
      throw InputError("video '" + e.video_id + "': " + err.what());
    }
    mos_.push_back(manifest.scaled_mos(i));
  }
  center_.resize(videos_.size());
}

template <typename T>
PatchArray<T> VideoSet<T>::random_patches(std::size_t i, std::mt19937_64& rng) const {
  const auto& v = videos_[i];
  const auto& f = v.frames.front();
  const auto offset = random_crop_offset(f.height, f.width, config_.height, config_.width, rng);
  return patchify<T>(make_clip(v, config_.height, config_.width, offset), config_.patch);
}

template <typename T>
const PatchArray<T>& VideoSet<T>::center_patches(std::size_t i) {
  if (!center_[i]) {
    const auto& v = videos_[i];
    const auto& f = v.frames.front();
    const auto offset = center_crop_offset(f.height, f.width, config_.height, config_.width);
    center_[i] = patchify<T>(make_clip(v, config_.height, config_.width, offset), config_.patch);
  }
  return *center_[i];
}

std::string format_log_line(const EpochLog& log) {
  auto num = [](std::optional<double> v) {
    if (!v) return std::string("nan");
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, *v);
    return std::string(buf, res.ptr);
  };
  return std::to_string(log.epoch) + "," + std::to_string(log.step) + "," + num(log.loss) + "," + num(log.srocc) +
         "," + num(log.plcc);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed) {
  if (n == 0) throw InputError("cannot split an empty dataset");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto want = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const std::size_t n_train = std::clamp<std::size_t>(want, 1, std::max<std::size_t>(1, n - 1));
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

namespace {

template <typename T>
EvalReport evaluate_set(const Model<T>& model, VideoSet<T>& videos, std::span<const std::size_t> indices,
                        DecoderMode mode) {
  EvalReport report;
  for (std::size_t i : indices) {
    EvalRecord rec;
    rec.video_id = videos.id(i);
    rec.ground_truth = videos.mos(i);
    rec.probabilities = predict(model, videos.center_patches(i));
    rec.prediction = decode_score(rec.probabilities, mode, model.decoder);
    report.records.push_back(std::move(rec));
  }
  report.compute_metrics();
  return report;
}

template <typename T>
LinearDecoder fit_decoder(const Model<T>& model, VideoSet<T>& videos, std::span<const std::size_t> indices) {
  std::vector<QualityVector> ys;
  std::vector<double> mos;
  for (std::size_t i : indices) {
    ys.push_back(predict(model, videos.center_patches(i)));
    mos.push_back(videos.mos(i));
  }
  return fit_linear_decoder(ys, mos);
}

}  // namespace

template <typename T>
FitResult<T> fit(const Manifest& manifest, const RunConfig& config,
                 const std::function<void(const EpochLog&)>& on_epoch) {
  const auto& tc = config.train;
  config.encoder.validate();
  tc.validate();
  if (manifest.entries.empty()) throw InputError("manifest lists no videos");
  VideoSet<T> videos(manifest, config.encoder);

  FitResult<T> result{Model<T>::zeros(config.encoder), {}, {}, {}, {}, {}, std::nullopt, std::nullopt};
  double srocc_sum = 0, plcc_sum = 0;
  std::size_t defined = 0;
  for (std::size_t round = 0; round < tc.rounds; ++round) {
    const std::uint64_t seed = tc.seed + round;
    auto [train_idx, test_idx] = split_indices(videos.size(), tc.split, seed);
    auto model = Model<T>::create(config.encoder, seed, tc.init_std);
    Adam<T> adam(model.params, tc);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> step_losses;
    EvalReport last_eval;

    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
      auto order = train_idx;
      std::shuffle(order.begin(), order.end(), rng);
      double epoch_sum = 0;
      std::size_t epoch_steps = 0;
      for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
        const std::size_t end = std::min(order.size(), b + tc.batch_size);
        std::vector<PatchArray<T>> patches;
        patches.reserve(end - b);
        for (std::size_t j = b; j < end; ++j) patches.push_back(videos.random_patches(order[j], rng));
        std::vector<Example<T>> batch;
        for (std::size_t j = b; j < end; ++j) batch.push_back({&patches[j - b], videos.mos(order[j])});
        const double loss = train_step(model, adam, std::span<const Example<T>>(batch));
        step_losses.push_back(loss);
        epoch_sum += loss;
        ++epoch_steps;
      }
      if (tc.decoder == DecoderMode::linear_fit) model.decoder = fit_decoder(model, videos, train_idx);
      last_eval = evaluate_set(model, videos, test_idx, tc.decoder);
      EpochLog entry{round, epoch, step_losses.size(), epoch_sum / static_cast<double>(epoch_steps),
                     last_eval.srocc, last_eval.plcc};
      result.log.push_back(entry);
      if (on_epoch) on_epoch(entry);
    }
    if (last_eval.srocc) {
      srocc_sum += *last_eval.srocc;
      plcc_sum += *last_eval.plcc;
      ++defined;
    }
    result.model = std::move(model);
    result.optimizer = std::move(adam);
    result.step_losses = std::move(step_losses);
    result.train_indices = std::move(train_idx);
    result.test_indices = std::move(test_idx);
  }
  if (defined) {
    result.mean_srocc = srocc_sum / static_cast<double>(defined);
    result.mean_plcc = plcc_sum / static_cast<double>(defined);
  }
  return result;
}

GradCheckReport grad_check(const EncoderConfig& config, std::uint64_t seed, double step, double tolerance) {
  config.validate();
  // Weights well away from zero so every attention softmax is non-uniform.
  auto model = Model<double>::create(config, seed, 0.5);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PatchArray<double> patches;
  patches.frames = config.frames;
  patches.patches = config.patches_per_frame();
  patches.patch_size = config.patch;
  patches.grid_rows = config.height / config.patch;
  patches.grid_cols = config.width / config.patch;
  patches.data = Tensor<double>({config.frames * config.patches_per_frame(), config.patch_length()});
  for (auto& x : patches.data.values()) x = unit(rng);
  const auto target = encode_mos(5.0 * unit(rng));
  Tensor<double> decoder({kAnchors + 1});
  for (auto& x : decoder.values()) x = unit(rng);

  ad::Tape<double> tape;
  const auto vars = bind_params(tape, model.params, config);
  const auto decoder_leaf = tape.parameter(decoder, "decoder.linear");
  const auto loss = vr_loss(tape, forward(tape, vars, patches, config), target);
  tape.backward(loss);

  auto loss_at = [&] {
    ad::Tape<double> t(false);
    const auto v = bind_params(t, model.params, config);
    return vr_loss(t, forward(t, v, patches, config), target).value()[0];
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  auto check = [&](const std::string& name, Tensor<double>& values, const Tensor<double>& analytic) {
    TensorCheck tc{name, 0.0, 0.0, 0.0};
    double max_num = 0, max_diff = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_at();
      values[i] = saved - step;
      const double down = loss_at();
      values[i] = saved;
      const double numeric = (up - down) / (2 * step);
      tc.max_abs_grad = std::max(tc.max_abs_grad, std::abs(analytic[i]));
      max_num = std::max(max_num, std::abs(numeric));
      max_diff = std::max(max_diff, std::abs(analytic[i] - numeric));
    }
    tc.max_abs_error = max_diff;
    const double scale = std::max(tc.max_abs_grad, max_num);
    tc.max_rel_error = scale > 0 ? max_diff / scale : 0.0;
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.tensors.push_back(tc);
  };
  for (std::size_t p = 0; p < model.params.size(); ++p) check(model.params.name(p), model.params[p], vars.all[p].grad());
  check("decoder.linear", decoder, decoder_leaf.grad());
  return report;
}

#define SVQA_INSTANTIATE_TRAINER(T)                                                                      \
  template class Adam<T>;                                                                                 \
  template class VideoSet<T>;                                                                             \
  template Gradients<T> compute_gradients<T>(const Model<T>&, std::span<const Example<T>>);               \
  template double train_step<T>(Model<T>&, Adam<T>&, std::span<const Example<T>>);                        \
  template double mean_loss<T>(const Model<T>&, std::span<const Example<T>>);                             \
  template FitResult<T> fit<T>(const Manifest&, const RunConfig&, const std::function<void(const EpochLog&)>&);

SVQA_INSTANTIATE_TRAINER(float)
SVQA_INSTANTIATE_TRAINER(double)

}  // namespace starvqa
