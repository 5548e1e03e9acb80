#include <gtest/gtest.h>

#include <cmath>

#include "starvqa/attention.hpp"
#include "starvqa/autodiff.hpp"
#include "test_util.hpp"

using namespace starvqa;

namespace {

// Keys written out directly from the routing rules, independent of the
// library's index arithmetic.
std::vector<std::size_t> expected_keys(AttentionPass pass, std::size_t frames, std::size_t patches, std::size_t row) {
  std::vector<std::size_t> keys;
  if (row == 0) {
    if (pass == AttentionPass::space)
      for (std::size_t r = 0; r < frames * patches + 1; ++r) keys.push_back(r);
    return keys;
  }
  const std::size_t p = (row - 1) % patches, t = (row - 1) / patches;
  keys.push_back(0);
  if (pass == AttentionPass::time)
    for (std::size_t tt = 0; tt < frames; ++tt) keys.push_back(1 + tt * patches + p);
  else
    for (std::size_t pp = 0; pp < patches; ++pp) keys.push_back(1 + t * patches + pp);
  return keys;
}

// Dense recomputation: softmax(q·kᵀ/√dh) over the expected keys, per head.
std::vector<double> dense_attention(AttentionPass pass, std::size_t frames, std::size_t patches, std::size_t heads,
                                    const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v) {
  const std::size_t n = q.rows(), dim = q.cols(), dh = dim / heads;
  std::vector<double> out(n * dim, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto keys = expected_keys(pass, frames, patches, r);
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> w;
      double total = 0;
      for (auto key : keys) {
        double s = 0;
        for (std::size_t d = 0; d < dh; ++d) s += q.at(r, h * dh + d) * k.at(key, h * dh + d);
        w.push_back(std::exp(s / std::sqrt(static_cast<double>(dh))));
        total += w.back();
      }
      for (std::size_t j = 0; j < keys.size(); ++j)
        for (std::size_t d = 0; d < dh; ++d) out[r * dim + h * dh + d] += w[j] / total * v.at(keys[j], h * dh + d);
    }
  }
  return out;
}

std::vector<double> run_forward(AttentionPass pass, const TokenLayout& layout, std::size_t heads,
                                const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v,
                                AttentionWeights<double>* weights_out = nullptr) {
  std::vector<double> out(q.size());
  AttentionWeights<double> w;
  divided_attention_forward<double>(pass, layout, heads, q.values(), k.values(), v.values(), out, w);
  if (weights_out) *weights_out = w;
  return out;
}

}  // namespace

TEST(AttentionKeys, MatchRoutingRules) {
  for (auto pass : {AttentionPass::time, AttentionPass::space})
    for (auto [f, s] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 4}, {3, 5}, {8, 196}}) {
      const TokenLayout layout{f, s};
      for (std::size_t r = 0; r < layout.tokens(); r += (r < 50 ? 1 : 37))
        EXPECT_EQ(attention_keys(pass, layout, r), expected_keys(pass, f, s, r));
    }
}

TEST(AttentionKeys, Counts) {
  const TokenLayout layout{8, 196};
  EXPECT_EQ(layout.tokens(), 1569u);
  EXPECT_EQ(attention_key_count(AttentionPass::time, layout, 5), 9u);
  EXPECT_EQ(attention_key_count(AttentionPass::space, layout, 5), 197u);
  EXPECT_EQ(attention_key_count(AttentionPass::time, layout, 0), 0u);
  EXPECT_EQ(attention_key_count(AttentionPass::space, layout, 0), 1569u);
}

TEST(Attention, ZeroQueriesGiveUniformWeights) {
  std::mt19937_64 rng(20);
  const TokenLayout layout{3, 4};
  const std::size_t n = layout.tokens(), dim = 4;
  const Tensor<double> q({n, dim});
  const auto k = svqa_test::random_tensor<double>({n, dim}, rng);
  const auto v = svqa_test::random_tensor<double>({n, dim}, rng);
  for (auto pass : {AttentionPass::time, AttentionPass::space}) {
    AttentionWeights<double> w;
    const auto out = run_forward(pass, layout, 2, q, k, v, &w);
    for (std::size_t r = 1; r < n; ++r) {
      const auto keys = expected_keys(pass, 3, 4, r);
      for (std::size_t h = 0; h < 2; ++h)
        for (double p : w.at(r, h)) EXPECT_NEAR(p, 1.0 / static_cast<double>(keys.size()), 1e-15);
      for (std::size_t d = 0; d < dim; ++d) {
        double mean = 0;
        for (auto key : keys) mean += v.at(key, d);
        EXPECT_NEAR(out[r * dim + d], mean / static_cast<double>(keys.size()), 1e-14);
      }
    }
  }
}

TEST(Attention, TimeHandCaseMatchesDenseRecomputation) {
  // F=2, S=1, A=1, D=2: three tokens, each patch sees all of them.
  const auto q = Tensor<double>::matrix(3, 2, {0.3, -0.2, 1.0, 0.5, -0.7, 0.8});
  const auto k = Tensor<double>::matrix(3, 2, {0.1, 0.4, -0.6, 0.9, 0.2, -0.3});
  const auto v = Tensor<double>::matrix(3, 2, {1.0, 2.0, -1.0, 0.5, 0.25, -2.0});
  const TokenLayout layout{2, 1};
  const auto out = run_forward(AttentionPass::time, layout, 1, q, k, v);
  const auto ref = dense_attention(AttentionPass::time, 2, 1, 1, q, k, v);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-15);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
}

TEST(Attention, SpaceHandCaseMatchesDenseRecomputation) {
  // S=2, F=1, A=1, D=2.
  const auto q = Tensor<double>::matrix(3, 2, {0.5, 0.1, -0.4, 1.2, 0.9, -0.6});
  const auto k = Tensor<double>::matrix(3, 2, {-0.2, 0.7, 0.3, 0.3, 1.1, -0.5});
  const auto v = Tensor<double>::matrix(3, 2, {0.6, -1.0, 2.0, 0.0, -0.5, 1.5});
  const auto out = run_forward(AttentionPass::space, TokenLayout{1, 2}, 1, q, k, v);
  const auto ref = dense_attention(AttentionPass::space, 1, 2, 1, q, k, v);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-15);
}

TEST(Attention, RandomCasesMatchDenseRecomputation) {
  std::mt19937_64 rng(21);
  for (auto pass : {AttentionPass::time, AttentionPass::space})
    for (auto [f, s, heads] : {std::array<std::size_t, 3>{2, 3, 1}, {3, 4, 2}, {4, 2, 4}}) {
      const TokenLayout layout{f, s};
      const std::size_t n = layout.tokens(), dim = 8;
      const auto q = svqa_test::random_tensor<double>({n, dim}, rng, -2, 2);
      const auto k = svqa_test::random_tensor<double>({n, dim}, rng, -2, 2);
      const auto v = svqa_test::random_tensor<double>({n, dim}, rng);
      const auto out = run_forward(pass, layout, heads, q, k, v);
      auto ref = dense_attention(pass, f, s, heads, q, k, v);
      if (pass == AttentionPass::time) std::fill(ref.begin(), ref.begin() + dim, 0.0);
      for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-13);
    }
}

TEST(Attention, WeightRowsAreProbabilityVectors) {
  std::mt19937_64 rng(22);
  const TokenLayout layout{4, 6};
  const std::size_t n = layout.tokens(), dim = 6;
  for (auto pass : {AttentionPass::time, AttentionPass::space}) {
    AttentionWeights<float> w;
    const auto q = svqa_test::random_tensor<float>({n, dim}, rng, -5, 5);
    const auto k = svqa_test::random_tensor<float>({n, dim}, rng, -5, 5);
    const auto v = svqa_test::random_tensor<float>({n, dim}, rng);
    std::vector<float> out(n * dim);
    divided_attention_forward<float>(pass, layout, 3, q.values(), k.values(), v.values(), out, w);
    for (std::size_t r = 0; r < n; ++r) {
      if (w.key_count(r) == 0) continue;
      for (std::size_t h = 0; h < 3; ++h) {
        double sum = 0;
        for (float p : w.at(r, h)) {
          EXPECT_GE(p, 0.0f);
          sum += p;
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
      }
    }
  }
}

TEST(Attention, ForwardMatchesReference) {
  std::mt19937_64 rng(23);
  const TokenLayout layout{3, 5};
  const std::size_t n = layout.tokens(), dim = 12;
  const auto q = svqa_test::random_tensor<double>({n, dim}, rng);
  const auto k = svqa_test::random_tensor<double>({n, dim}, rng);
  const auto v = svqa_test::random_tensor<double>({n, dim}, rng);
  for (auto pass : {AttentionPass::time, AttentionPass::space}) {
    std::vector<double> a(n * dim), b(n * dim);
    AttentionWeights<double> wa, wb;
    divided_attention_forward<double>(pass, layout, 3, q.values(), k.values(), v.values(), a, wa);
    reference::divided_attention_forward<double>(pass, layout, 3, q.values(), k.values(), v.values(), b, wb);
    ASSERT_EQ(wa.probs.size(), wb.probs.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
    for (std::size_t i = 0; i < wa.probs.size(); ++i) EXPECT_NEAR(wa.probs[i], wb.probs[i], 1e-15);
  }
}

TEST(Attention, BackwardMatchesReference) {
  std::mt19937_64 rng(24);
  const TokenLayout layout{3, 5};
  const std::size_t n = layout.tokens(), dim = 12;
  const auto q = svqa_test::random_tensor<double>({n, dim}, rng);
  const auto k = svqa_test::random_tensor<double>({n, dim}, rng);
  const auto v = svqa_test::random_tensor<double>({n, dim}, rng);
  const auto g = svqa_test::random_tensor<double>({n, dim}, rng);
  for (auto pass : {AttentionPass::time, AttentionPass::space}) {
    std::vector<double> out(n * dim);
    AttentionWeights<double> w;
    divided_attention_forward<double>(pass, layout, 3, q.values(), k.values(), v.values(), out, w);
    std::vector<double> dq(n * dim), dk(n * dim), dv(n * dim), rq(n * dim), rk(n * dim), rv(n * dim);
    divided_attention_backward<double>(pass, layout, 3, q.values(), k.values(), v.values(), w, g.values(), dq, dk, dv);
    reference::divided_attention_backward<double>(pass, layout, 3, q.values(), k.values(), v.values(), w, g.values(),
                                                  rq, rk, rv);
    for (std::size_t i = 0; i < dq.size(); ++i) {
      EXPECT_NEAR(dq[i], rq[i], 1e-13);
      EXPECT_NEAR(dk[i], rk[i], 1e-13);
      EXPECT_NEAR(dv[i], rv[i], 1e-13);
    }
  }
}

TEST(Attention, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(25);
  const TokenLayout layout{2, 3};
  const std::size_t n = layout.tokens(), dim = 4;
  std::vector<Tensor<double>> qkv;
  for (int i = 0; i < 3; ++i) qkv.push_back(svqa_test::random_tensor<double>({n, dim}, rng, -1.5, 1.5));
  const auto target = svqa_test::random_tensor<double>({n, dim}, rng);
  const auto mix = svqa_test::random_tensor<double>({dim, 1}, rng);
  for (auto pass : {AttentionPass::time, AttentionPass::space}) {
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> vars;
    for (auto& t : qkv) vars.push_back(tape.parameter(t));
    auto a = ad::divided_attention(tape, vars[0], vars[1], vars[2], pass, layout, 2);
    // Scalar probe: rows of softmax(a + target) mixed by a fixed vector.
    auto u = tape.constant(Tensor<double>({1, n}, 1.0));
    auto proj = tape.constant(mix);
    auto weighted = ad::matmul(tape, u, ad::softmax_rows(tape, ad::add(tape, a, tape.constant(target))));
    auto loss = ad::matmul(tape, weighted, proj);
    tape.backward(loss);
    auto eval = [&] {
      ad::Tape<double> t(false);
      std::vector<ad::Var<double>> vs;
      for (auto& x : qkv) vs.push_back(t.parameter(x));
      auto aa = ad::divided_attention(t, vs[0], vs[1], vs[2], pass, layout, 2);
      auto ww = ad::matmul(t, t.constant(Tensor<double>({1, n}, 1.0)),
                           ad::softmax_rows(t, ad::add(t, aa, t.constant(target))));
      return ad::matmul(t, ww, t.constant(mix)).value()[0];
    };
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < qkv[i].size(); ++j) {
        const double saved = qkv[i][j], h = 1e-6;
        qkv[i][j] = saved + h;
        const double up = eval();
        qkv[i][j] = saved - h;
        const double down = eval();
        qkv[i][j] = saved;
        EXPECT_NEAR(vars[i].grad()[j], (up - down) / (2 * h), 1e-8);
      }
  }
}

TEST(Attention, TimeLocality) {
  std::mt19937_64 rng(26);
  const TokenLayout layout{3, 4};
  const std::size_t n = layout.tokens(), dim = 4;
  for (int trial = 0; trial < 50; ++trial) {
    auto q = svqa_test::random_tensor<double>({n, dim}, rng);
    auto k = svqa_test::random_tensor<double>({n, dim}, rng);
    auto v = svqa_test::random_tensor<double>({n, dim}, rng);
    const auto base = run_forward(AttentionPass::time, layout, 2, q, k, v);
    const std::size_t p = static_cast<std::size_t>(trial) % 4;
    for (std::size_t r = 1; r < n; ++r)
      if (layout.patch_of(r) != p)
        for (std::size_t d = 0; d < dim; ++d) {
          q.at(r, d) += 1.0;
          k.at(r, d) -= 0.5;
          v.at(r, d) *= 3.0;
        }
    const auto moved = run_forward(AttentionPass::time, layout, 2, q, k, v);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t d = 0; d < dim; ++d) EXPECT_EQ(base[layout.row(p, t) * dim + d], moved[layout.row(p, t) * dim + d]);
  }
}

TEST(Attention, SpaceLocality) {
  std::mt19937_64 rng(27);
  const TokenLayout layout{3, 4};
  const std::size_t n = layout.tokens(), dim = 4;
  for (int trial = 0; trial < 50; ++trial) {
    auto q = svqa_test::random_tensor<double>({n, dim}, rng);
    auto k = svqa_test::random_tensor<double>({n, dim}, rng);
    auto v = svqa_test::random_tensor<double>({n, dim}, rng);
    const auto base = run_forward(AttentionPass::space, layout, 2, q, k, v);
    const std::size_t t = static_cast<std::size_t>(trial) % 3;
    for (std::size_t r = 1; r < n; ++r)
      if (layout.frame_of(r) != t)
        for (std::size_t d = 0; d < dim; ++d) {
          k.at(r, d) += 2.0;
          v.at(r, d) -= 1.0;
        }
    const auto moved = run_forward(AttentionPass::space, layout, 2, q, k, v);
    for (std::size_t p = 0; p < 4; ++p)
      for (std::size_t d = 0; d < dim; ++d) EXPECT_EQ(base[layout.row(p, t) * dim + d], moved[layout.row(p, t) * dim + d]);
  }
}
