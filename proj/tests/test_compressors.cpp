// Copyright 2026 The ecabs Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================


#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ecabs {
namespace {

using testing::vec;

std::vector<MessageEntry> entries(const CompressorSpec& spec, const Vector& x, std::uint64_t seed = 0) {
  Rng r(seed);
  return compress(spec, x, r).entries;
}

TEST(Compress, HardThresholdExample) {
  EXPECT_EQ(entries(HardThreshold{1.0}, vec({0.5, 2.0, -1.5})),
            (std::vector<MessageEntry>{{1, 2.0}, {2, -1.5}}));
}

TEST(Compress, HardThresholdKeepsBoundary) {
  EXPECT_EQ(entries(HardThreshold{1.0}, vec({1.0, -1.0, std::nextafter(1.0, 0.0)})),
            (std::vector<MessageEntry>{{0, 1.0}, {1, -1.0}}));
}

TEST(Compress, HardThresholdZeroIsIdentity) {
  Rng r(1);
  for (int t = 0; t < 50; ++t) {
    const Vector x = r.normal_vector(7);
    EXPECT_EQ(reconstruct(compress(HardThreshold{0.0}, x, r)), x);
  }
}

TEST(Compress, TopKExampleAndTies) {
  EXPECT_EQ(entries(TopK{2}, vec({3, -1, 2})), (std::vector<MessageEntry>{{0, 3}, {2, 2}}));
  EXPECT_EQ(entries(TopK{2}, vec({1, -1, 1, 1})), (std::vector<MessageEntry>{{0, 1}, {1, -1}}));
  EXPECT_EQ(entries(TopK{2}, vec({0, 0, 5})), (std::vector<MessageEntry>{{2, 5}}));
}

TEST(Compress, TopKTooLargeIsUsageError) {
  Rng r(0);
  EXPECT_THROW(compress(TopK{4}, Vector::Ones(3), r), UsageError);
  EXPECT_THROW(compress(RandK{4}, Vector::Ones(3), r), UsageError);
  EXPECT_THROW(compress(TopK{0}, Vector::Ones(3), r), UsageError);
  EXPECT_THROW(compress(HardThreshold{-1.0}, Vector::Ones(3), r), UsageError);
  EXPECT_THROW(compress(ScaledIntegerRounding{0.0}, Vector::Ones(3), r), UsageError);
}

TEST(Compress, NonFiniteInputIsDomainError) {
  Rng r(0);
  Vector x = Vector::Ones(3);
  x[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(compress(IdentityCompressor{}, x, r), DomainError);
}

TEST(Compress, DeterministicKindsIgnoreRng) {
  Rng r(2);
  const Vector x = r.normal_vector(10);
  for (const CompressorSpec& s : {CompressorSpec{HardThreshold{0.5}}, CompressorSpec{TopK{3}},
                                  CompressorSpec{ScaledIntegerRounding{0.25, false}}, CompressorSpec{IdentityCompressor{}}}) {
    EXPECT_EQ(entries(s, x, 1), entries(s, x, 2));
  }
}

TEST(Reconstruct, Basics) {
  CompressedMessage m{{{1, 2.0}}, 3};
  EXPECT_EQ(reconstruct(m), vec({0, 2.0, 0}));
  Rng r(3);
  const Vector x = r.normal_vector(5);
  EXPECT_EQ(reconstruct(compress(IdentityCompressor{}, x, r)), x);
}

TEST(Reconstruct, KeptCoordinatesAreExact) {
  Rng r(4);
  for (int t = 0; t < 200; ++t) {
    const Vector x = r.normal_vector(12);
    for (const auto& e : entries(HardThreshold{0.7}, x)) ASSERT_EQ(e.value, x[e.index]);
    for (const auto& e : entries(TopK{5}, x)) ASSERT_EQ(e.value, x[e.index]);
    for (const auto& e : entries(RandK{4, false}, x, t)) ASSERT_EQ(e.value, x[e.index]);
    for (const auto& e : entries(RandK{4, true}, x, t)) ASSERT_EQ(e.value, x[e.index] * (12.0 / 4.0));
  }
}

TEST(Message, IndicesStrictlyIncreasingAndInRange) {
  Rng r(5);
  const CompressorSpec specs[] = {HardThreshold{0.3}, TopK{4}, RandK{4}, ScaledIntegerRounding{0.5}, IdentityCompressor{}};
  for (int t = 0; t < 200; ++t) {
    const Vector x = r.normal_vector(9);
    for (const auto& s : specs) {
      const auto es = compress(s, x, r).entries;
      for (std::size_t k = 0; k < es.size(); ++k) {
        ASSERT_LT(es[k].index, 9u);
        if (k) {
          ASSERT_GT(es[k].index, es[k - 1].index);
        }
      }
    }
  }
}

TEST(AbsoluteDelta, Values) {
  EXPECT_EQ(*absolute_delta(HardThreshold{2.0}, 9), 6.0);
  EXPECT_EQ(*absolute_delta(IdentityCompressor{}, 9), 0.0);
  EXPECT_FALSE(absolute_delta(TopK{1}, 9).has_value());
  EXPECT_FALSE(absolute_delta(RandK{1}, 9).has_value());
  EXPECT_EQ(*absolute_delta(ScaledIntegerRounding{0.5, false}, 4), 0.5);
  EXPECT_EQ(*absolute_delta(ScaledIntegerRounding{0.5, true}, 4), 1.0);
}

TEST(AbsoluteBound, PointwiseForRandomAndAdversarialInputs) {
  Rng r(6);
  const std::size_t d = 16;
  const double lambda = 0.8;
  const CompressorSpec specs[] = {HardThreshold{lambda}, ScaledIntegerRounding{0.3, true},
                                  ScaledIntegerRounding{0.3, false}};
  for (int t = 0; t < 10000; ++t) {
    Vector x;
    if (t % 4 == 0) {
      // Every coordinate a hair below or at the threshold.
      x = Vector::Constant(d, lambda);
      for (std::size_t j = 0; j < d; ++j) {
        if (r.bernoulli(0.5)) x[j] = std::nextafter(lambda, 0.0);
        if (r.bernoulli(0.5)) x[j] = -x[j];
      }
    } else if (t % 4 == 1) {
      x = Vector::Constant(d, lambda - 1e-12 * (1 + t % 7));
    } else {
      x = r.normal_vector(d) * (0.1 + 3.0 * r.uniform());
    }
    for (const auto& s : specs) {
      const double delta = *absolute_delta(s, d);
      const Vector cx = reconstruct(compress(s, x, r));
      ASSERT_LE((cx - x).squaredNorm(), delta * delta * (1 + 1e-12)) << describe(s);
    }
    for (const auto& e : entries(HardThreshold{lambda}, x)) ASSERT_GE(std::abs(e.value), lambda);
  }
}

TEST(ContractiveBound, TopKPointwise) {
  Rng r(7);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t d = 2 + r.below(15), k = 1 + r.below(d);
    Vector x = r.normal_vector(static_cast<Eigen::Index>(d));
    if (t % 5 == 0) x[0] = 0.0;
    const auto es = entries(TopK{k}, x);
    const auto nnz = static_cast<std::size_t>((x.array() != 0.0).count());
    ASSERT_EQ(es.size(), std::min(k, nnz));
    const Vector cx = reconstruct(CompressedMessage{es, d});
    ASSERT_LE((cx - x).squaredNorm(), (1.0 - double(k) / double(d)) * x.squaredNorm() * (1 + 1e-12));
  }
}

TEST(ContractiveBound, UnscaledRandKInExpectation) {
  Rng r(8);
  const std::size_t d = 10, k = 3;
  auto gauss = [&](Rng& g) { return g.normal_vector(d); };
  const auto est = estimate_second_moment(RandK{k, false}, gauss, 100000, r, MomentNormalization::Relative);
  EXPECT_LE(est.mean, (1.0 - double(k) / double(d)) + 3.0 * est.std_error);
  EXPECT_NEAR(est.mean, 1.0 - double(k) / double(d), 4.0 * est.std_error);
  EXPECT_DOUBLE_EQ(*contractive_delta(RandK{k, false}, d), 0.3);
  EXPECT_FALSE(contractive_delta(RandK{k, true}, d).has_value());
}

TEST(SecondMoment, ScaledRandKIsUnbiasedWithKnownVariance) {
  Rng r(9);
  const std::size_t d = 8, k = 2;
  const Vector x = r.normal_vector(d);
  Vector mean = Vector::Zero(d);
  const int trials = 200000;
  for (int t = 0; t < trials; ++t) mean += reconstruct(compress(RandK{k, true}, x, r));
  mean /= trials;
  // Per-coordinate sd is |x_i| sqrt(d/k - 1).
  for (std::size_t i = 0; i < d; ++i)
    EXPECT_NEAR(mean[i], x[i], 4.0 * std::abs(x[i]) * std::sqrt(double(d) / k - 1.0) / std::sqrt(trials));
  const auto est = estimate_second_moment(RandK{k, true}, [&](Rng&) { return x; }, 100000, r);
  EXPECT_NEAR(est.mean, (double(d) / k - 1.0) * x.squaredNorm(), 4.0 * est.std_error);
}

TEST(SecondMoment, Examples) {
  Rng r(10);
  const std::size_t d = 10;
  auto unif = [&](Rng& g) {
    Vector x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = 2.0 * g.uniform() - 1.0;
    return x;
  };
  const auto ht = estimate_second_moment(HardThreshold{1.0}, unif, 20000, r);
  EXPECT_LE(ht.mean, 10.0);
  auto gauss = [](Rng& g) { return g.normal_vector(4); };
  EXPECT_EQ(estimate_second_moment(TopK{4}, gauss, 1000, r).mean, 0.0);
  const auto top1 = estimate_second_moment(TopK{1}, gauss, 100000, r, MomentNormalization::Relative);
  EXPECT_LE(top1.mean, 0.75 + 3.0 * top1.std_error);
  EXPECT_THROW(estimate_second_moment(TopK{1}, gauss, 0, r), UsageError);
}

TEST(SecondMoment, StochasticRoundingIsUnbiased) {
  Rng r(11);
  const Vector x = vec({0.13, -0.77, 2.5, 0.0});
  Vector mean = Vector::Zero(4);
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) mean += reconstruct(compress(ScaledIntegerRounding{0.5, true}, x, r));
  mean /= trials;
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(mean[i], x[i], 4.0 * 0.25 / std::sqrt(trials));
  EXPECT_EQ(entries(ScaledIntegerRounding{0.5, false}, vec({0.2, 0.3, -0.8})),
            (std::vector<MessageEntry>{{1, 0.5}, {2, -1.0}}));
}

TEST(PayloadBits, Examples) {
  EXPECT_EQ(payload_bits(CompressedMessage{{{0, 1.0}, {3, 2.0}}, 100}), 160u);
  EXPECT_EQ(payload_bits(CompressedMessage{{}, 100}), 32u);
  const CompressedMessage tie{{{0, 1.0}, {3, 2.0}}, 4};
  EXPECT_EQ(payload_bits(tie), 160u);
  EXPECT_FALSE(uses_dense_layout(tie));
  Rng r(0);
  const auto id = compress(IdentityCompressor{}, Vector::Ones(4), r);
  EXPECT_EQ(payload_bits(id), 32u * 4 + 32u);
  EXPECT_TRUE(uses_dense_layout(id));
}

TEST(BinaryLayout, SparseRoundTripLittleEndian) {
  const CompressedMessage m{{{1, 0.5}, {258, -2.0}}, 300};
  const auto bytes = encode_message(m);
  ASSERT_EQ(bytes.size() * 8, payload_bits(m));
  const std::vector<std::uint8_t> head(bytes.begin(), bytes.begin() + 12);
  EXPECT_EQ(head, (std::vector<std::uint8_t>{2, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x00, 0x3f}));
  EXPECT_EQ(bytes[12], 2);
  EXPECT_EQ(bytes[13], 1);
  const auto back = decode_message(bytes, 300);
  EXPECT_EQ(back.entries, m.entries);
}

TEST(BinaryLayout, DenseRoundTrip) {
  Rng r(1);
  const Vector x = vec({1.0, -0.25, 0.0, 8.0});
  const auto m = compress(IdentityCompressor{}, x, r);
  const auto bytes = encode_message(m);
  EXPECT_EQ(bytes.size(), 4u + 16u);
  EXPECT_EQ(reconstruct(decode_message(bytes, 4)), x);
}

TEST(BinaryLayout, RejectsCorruptInput) {
  const auto bytes = encode_message(CompressedMessage{{{1, 0.5}}, 3});
  EXPECT_THROW(decode_message(std::span(bytes).first(3), 3), UsageError);
  EXPECT_THROW(decode_message(std::span(bytes).first(8), 3), UsageError);
  EXPECT_THROW(decode_message(bytes, 1), UsageError);
}

TEST(Describe, NamesParameters) {
  EXPECT_EQ(describe(TopK{3}), "topk(k=3)");
  EXPECT_EQ(describe(HardThreshold{0.5}), "ht(lambda=0.5)");
  EXPECT_EQ(describe(IdentityCompressor{}), "identity");
}

}  // namespace
}  // namespace ecabs
