#include "starvqa/quality_head.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "starvqa/errors.hpp"

namespace starvqa {

double scale_mos(double raw, MosScale scale) {
  if (!(scale.lo < scale.hi)) throw InputError("MOS scale needs lo < hi");
  if (!(raw >= scale.lo && raw <= scale.hi)) {
    std::ostringstream msg;
    msg << "MOS " << raw << " outside [" << scale.lo << ", " << scale.hi << "]";
    throw InputError(msg.str());
  }
  return 5.0 * (raw - scale.lo) / (scale.hi - scale.lo);
}

QualityVector encode_mos(double mos) {
  if (!(mos >= 0.0 && mos <= 5.0)) throw InputError("scaled MOS " + std::to_string(mos) + " outside [0, 5]");
  QualityVector q;
  double z = 0;
  for (std::size_t n = 0; n < kAnchors; ++n) {
    const double d = mos - static_cast<double>(n);
    q[n] = std::exp(-d * d);
    z += q[n];
  }
  for (auto& v : q) v /= z;
  return q;
}

double vr_loss(const QualityVector& q, const QualityVector& y) {
  double dot = 0, qq = 0, yy = 0;
  for (std::size_t n = 0; n < kAnchors; ++n) {
    dot += q[n] * y[n];
    qq += q[n] * q[n];
    yy += y[n] * y[n];
  }
  if (qq == 0.0 || yy == 0.0) throw ContractError("VR loss of a zero-norm vector");
  return 1.0 - dot / (std::sqrt(qq) * std::sqrt(yy));
}

double decode_expectation(const QualityVector& y) {
  double s = 0;
  for (std::size_t n = 0; n < kAnchors; ++n) s += static_cast<double>(n) * y[n];
  return s;
}

double LinearDecoder::apply(const QualityVector& y) const {
  double s = intercept;
  for (std::size_t n = 0; n < kAnchors; ++n) s += weights[n] * y[n];
  return s;
}

LinearDecoder fit_linear_decoder(std::span<const QualityVector> ys, std::span<const double> mos) {
  if (ys.size() != mos.size()) throw ContractError("linear decoder fit: mismatched sample counts");
  if (ys.size() < 2) throw NumericError("linear decoder fit needs at least 2 samples");
  if (std::all_of(ys.begin(), ys.end(), [&](const QualityVector& y) { return y == ys.front(); }))
    throw NumericError("linear decoder fit is singular: all predicted vectors are identical");
  // Columns: intercept, y1..y5 (w0 = 0). Minimum-norm least squares.
  Eigen::MatrixXd a(ys.size(), kAnchors);
  Eigen::VectorXd b(ys.size());
  for (std::size_t s = 0; s < ys.size(); ++s) {
    a(s, 0) = 1.0;
    for (std::size_t n = 1; n < kAnchors; ++n) a(s, n) = ys[s][n];
    b(s) = mos[s];
  }
  const Eigen::VectorXd x = a.completeOrthogonalDecomposition().solve(b);
  if (!x.allFinite()) throw NumericError("linear decoder fit produced non-finite coefficients");
  LinearDecoder dec;
  dec.intercept = x(0);
  for (std::size_t n = 1; n < kAnchors; ++n) dec.weights[n] = x(n);
  return dec;
}

double decode_score(const QualityVector& y, DecoderMode mode, const std::optional<LinearDecoder>& decoder) {
  if (mode == DecoderMode::expectation) return decode_expectation(y);
  if (!decoder) throw StateError("linear-fit decoding requested but no decoder coefficients were fitted");
  return decoder->apply(y);
}

template <typename T>
ad::Var<T> predict_vector(ad::Tape<T>& tape, const ad::Var<T>& label_embedding, const HeadVars<T>& vars) {
  auto h = ad::gelu(tape, ad::add_bias(tape, ad::linear(tape, label_embedding, vars.w1), vars.b1));
  auto logits = ad::add_bias(tape, ad::linear(tape, h, vars.w2), vars.b2);
  return ad::softmax_rows(tape, logits);
}

template <typename T>
ad::Var<T> vr_loss(ad::Tape<T>& tape, const ad::Var<T>& y, const QualityVector& target) {
  Tensor<T> q({1, kAnchors});
  for (std::size_t n = 0; n < kAnchors; ++n) q[n] = static_cast<T>(target[n]);
  return ad::cosine_distance(tape, y, q);
}

template <typename T>
QualityVector to_quality_vector(const Tensor<T>& y) {
  if (y.size() != kAnchors) throw ShapeError("quality vector needs 6 entries, got " + to_string(y.shape()));
  QualityVector q;
  for (std::size_t n = 0; n < kAnchors; ++n) q[n] = static_cast<double>(y[n]);
  return q;
}

template ad::Var<float> predict_vector<float>(ad::Tape<float>&, const ad::Var<float>&, const HeadVars<float>&);
template ad::Var<double> predict_vector<double>(ad::Tape<double>&, const ad::Var<double>&, const HeadVars<double>&);
template ad::Var<float> vr_loss<float>(ad::Tape<float>&, const ad::Var<float>&, const QualityVector&);
template ad::Var<double> vr_loss<double>(ad::Tape<double>&, const ad::Var<double>&, const QualityVector&);
template QualityVector to_quality_vector<float>(const Tensor<float>&);
template QualityVector to_quality_vector<double>(const Tensor<double>&);

}  // namespace starvqa
