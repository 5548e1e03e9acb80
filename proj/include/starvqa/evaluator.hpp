#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "starvqa/manifest.hpp"
#include "starvqa/model.hpp"

namespace starvqa {

/// Average ranks (1-based); tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation with population normalization. Throws
/// UndefinedMetricError for n < 2, length mismatch or a constant input.
double plcc(std::span<const double> x, std::span<const double> y);

/// Spearman rank-order correlation: Pearson of average ranks.
double srocc(std::span<const double> x, std::span<const double> y);

struct EvalRecord {
  std::string video_id;
  double ground_truth = 0.0;  // scaled MOS
  double prediction = 0.0;
  QualityVector probabilities{};
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<std::string> failures;  // "video_id: reason" for skipped videos
  std::optional<double> srocc;
  std::optional<double> plcc;
  std::string metric_error;  // why the metrics are missing

  /// Fills srocc/plcc (or metric_error) from the records.
  void compute_metrics();
};

/// Predicts each listed manifest entry with a center crop, decodes it and
/// correlates with the scaled MOS. Videos whose frames cannot be read are
/// skipped and listed in `failures`.
template <typename T>
EvalReport evaluate(const Model<T>& model, const Manifest& manifest, std::span<const std::size_t> subset,
                    DecoderMode mode);

/// "video_id,ground_truth,prediction" lines.
void write_scatter(const std::filesystem::path& path, const EvalReport& report);

}  // namespace starvqa
