#pragma once

#include <array>
#include <optional>
#include <span>

#include "starvqa/autodiff.hpp"
#include "starvqa/config.hpp"

namespace starvqa {

inline constexpr std::size_t kAnchors = 6;

/// Probability vector over the anchors 0,1,2,3,4,5.
using QualityVector = std::array<double, kAnchors>;

/// Raw MOS range of a dataset.
struct MosScale {
  double lo = 0.0;
  double hi = 5.0;
};

/// Affine map of [lo, hi] onto [0, 5].
double scale_mos(double raw, MosScale scale);

/// q_n ∝ exp(−(mos − n)²).
QualityVector encode_mos(double mos);

/// One minus the cosine similarity of q and y.
double vr_loss(const QualityVector& q, const QualityVector& y);

/// Σ n·y_n.
double decode_expectation(const QualityVector& y);

/// Least-squares map w·y + c from predicted vectors to scaled MOS.
struct LinearDecoder {
  QualityVector weights{};
  double intercept = 0.0;

  double apply(const QualityVector& y) const;
};

/// Ordinary least squares on (y, mos) pairs. Because the entries of y sum
/// to one, the first anchor's weight is fixed at zero and absorbed by the
/// intercept. Collinear predictions get the minimum-norm solution.
LinearDecoder fit_linear_decoder(std::span<const QualityVector> ys, std::span<const double> mos);

double decode_score(const QualityVector& y, DecoderMode mode, const std::optional<LinearDecoder>& decoder);

template <typename T>
struct HeadVars {
  ad::Var<T> w1, b1, w2, b2;
};

/// softmax(W2·gelu(W1·e + b1) + b2) for the label embedding e (1 × D).
template <typename T>
ad::Var<T> predict_vector(ad::Tape<T>& tape, const ad::Var<T>& label_embedding, const HeadVars<T>& vars);

/// VR loss of a predicted vector against an encoded target.
template <typename T>
ad::Var<T> vr_loss(ad::Tape<T>& tape, const ad::Var<T>& y, const QualityVector& target);

template <typename T>
QualityVector to_quality_vector(const Tensor<T>& y);

}  // namespace starvqa
