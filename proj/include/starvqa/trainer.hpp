#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "starvqa/config.hpp"
#include "starvqa/manifest.hpp"
#include "starvqa/model.hpp"

namespace starvqa {

/// Adaptive moment estimation with bias correction. State tensors follow the
/// parameter registry order.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore<T>& params, const TrainConfig& hyper);

  void step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads);

  std::uint64_t steps() const { return steps_; }
  std::vector<Tensor<T>>& first_moment() { return m_; }
  std::vector<Tensor<T>>& second_moment() { return v_; }
  const std::vector<Tensor<T>>& first_moment() const { return m_; }
  const std::vector<Tensor<T>>& second_moment() const { return v_; }
  void set_steps(std::uint64_t n) { steps_ = n; }

 private:
  double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t steps_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

template <typename T>
struct Example {
  const PatchArray<T>* patches = nullptr;
  double mos = 0.0;  // scaled to [0, 5]
};

template <typename T>
struct Gradients {
  double loss = 0.0;                // batch mean
  std::vector<Tensor<T>> grads;     // registry order, batch mean
  std::vector<double> item_losses;
};

/// Forward + backward for every item, each on its own tape (items run in
/// parallel); per-item gradients are summed in item order and divided by
/// the batch size. Throws NumericError naming the first non-finite tensor.
template <typename T>
Gradients<T> compute_gradients(const Model<T>& model, std::span<const Example<T>> batch);

/// One optimizer step on the batch mean VR loss; returns that loss.
template <typename T>
double train_step(Model<T>& model, Adam<T>& optimizer, std::span<const Example<T>> batch);

/// Mean VR loss of the model over examples, without gradients.
template <typename T>
double mean_loss(const Model<T>& model, std::span<const Example<T>> examples);

/// Manifest videos with their sampled frames held in memory.
template <typename T>
class VideoSet {
 public:
  VideoSet(const Manifest& manifest, const EncoderConfig& config);

  std::size_t size() const { return videos_.size(); }
  const std::string& id(std::size_t i) const { return videos_[i].source_id; }
  double mos(std::size_t i) const { return mos_[i]; }

  /// Random crop drawn from rng (training).
  PatchArray<T> random_patches(std::size_t i, std::mt19937_64& rng) const;
  /// Center crop (evaluation); cached.
  const PatchArray<T>& center_patches(std::size_t i);

 private:
  EncoderConfig config_;
  std::vector<SampledVideo> videos_;
  std::vector<double> mos_;
  std::vector<std::optional<PatchArray<T>>> center_;
};

struct EpochLog {
  std::size_t round = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;  // optimizer steps so far in this round
  double loss = 0.0;     // mean training loss over the epoch
  std::optional<double> srocc;
  std::optional<double> plcc;
};

/// "epoch,step,loss,srocc,plcc"; undefined metrics print as nan.
std::string format_log_line(const EpochLog& log);

template <typename T>
struct FitResult {
  Model<T> model;  // from the last round
  Adam<T> optimizer;
  std::vector<EpochLog> log;
  std::vector<double> step_losses;  // last round
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::optional<double> mean_srocc;  // over rounds with defined metrics
  std::optional<double> mean_plcc;
};

/// Random train/test split of n videos; at least one training video.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed);

/// Trains config.train.rounds times (seed + round), each on a fresh split
/// and initialization, evaluating the held-out part after every epoch.
template <typename T>
FitResult<T> fit(const Manifest& manifest, const RunConfig& config,
                 const std::function<void(const EpochLog&)>& on_epoch = {});

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;  // max |analytic − numeric| / max(‖analytic‖∞, ‖numeric‖∞)
  double max_abs_error = 0.0;
  double max_abs_grad = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Analytic gradient of the VR loss against central differences for every
/// parameter tensor (64-bit) on a random instance of `config`. The decoder
/// coefficients are included as a leaf the loss never reads.
GradCheckReport grad_check(const EncoderConfig& config, std::uint64_t seed, double step = 1e-4,
                           double tolerance = 1e-4);

}  // namespace starvqa
