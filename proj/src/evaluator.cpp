#include "starvqa/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "starvqa/errors.hpp"
#include "starvqa/preprocess.hpp"

namespace starvqa {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double plcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UndefinedMetricError("correlation of sequences with different lengths");
  const std::size_t n = x.size();
  if (n < 2) throw UndefinedMetricError("correlation needs at least 2 pairs");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetricError("correlation undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srocc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UndefinedMetricError("correlation of sequences with different lengths");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return plcc(rx, ry);
}

void EvalReport::compute_metrics() {
  std::vector<double> gt, pred;
  for (const auto& r : records) {
    gt.push_back(r.ground_truth);
    pred.push_back(r.prediction);
  }
  try {
    srocc = starvqa::srocc(gt, pred);
    plcc = starvqa::plcc(gt, pred);
    metric_error.clear();
  } catch (const UndefinedMetricError& e) {
    srocc.reset();
    plcc.reset();
    metric_error = e.what();
  }
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const Manifest& manifest, std::span<const std::size_t> subset,
                    DecoderMode mode) {
  const auto& c = model.config;
  EvalReport report;
  for (std::size_t i : subset) {
    const auto& e = manifest.entries.at(i);
    EvalRecord rec;
    rec.video_id = e.video_id;
    rec.ground_truth = manifest.scaled_mos(i);
    try {
      const auto store = FrameStore::open(e.frames_dir);
      const auto video = load_sampled(store, c.frames, e.video_id);
      const auto offset = center_crop_offset(store.height(), store.width(), c.height, c.width);
      const auto patches = patchify<T>(make_clip(video, c.height, c.width, offset), c.patch);
      rec.probabilities = predict(model, patches);
    } catch (const InputError& err) {
      report.failures.push_back(e.video_id + ": " + err.what());
      continue;
    }
    rec.prediction = decode_score(rec.probabilities, mode, model.decoder);
    report.records.push_back(std::move(rec));
  }
  report.compute_metrics();
  return report;
}

void write_scatter(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write scatter file " + path.string());
  out.precision(9);
  for (const auto& r : report.records) out << r.video_id << "," << r.ground_truth << "," << r.prediction << "\n";
}

template EvalReport evaluate<float>(const Model<float>&, const Manifest&, std::span<const std::size_t>, DecoderMode);
template EvalReport evaluate<double>(const Model<double>&, const Manifest&, std::span<const std::size_t>,
                                     DecoderMode);

}  // namespace starvqa
