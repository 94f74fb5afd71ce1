// Copyright 2026 The Textmark Authors.
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


#include "textmark/nn.h"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "textmark/model.h"

namespace textmark {
namespace {

constexpr int kVocab = 12;

std::vector<TokenIds> Sequences() {
  // Mixed lengths, including one shorter than the widest filter. Tokens are
  // not repeated within a sample: identical windows tie under max pooling,
  // where the loss has no derivative.
  return {{2, 3, 4, 5, 6, 7, 0, 0, 0},
          {8, 2, 0, 0, 0, 0, 0, 0, 0},
          {9, 10, 11, 3, 1, 4, 5, 2, 6},
          {5, 6, 7, 8, 0, 0, 0, 0, 0}};
}

Network MakeNet(Arch arch, uint64_t seed) {
  ModelConfig mc;
  mc.arch = arch;
  mc.vocab_size = kVocab;
  mc.embed_dim = 5;
  mc.hidden_dim = 4;
  mc.num_classes = 3;
  mc.max_len = 9;
  mc.filters_per_width = 3;
  mc.seed = seed;
  return BuildModel(mc).net();
}

// Mean cross-entropy computed from the logits in double precision.
double Loss(const Network& net, const IdBatch& batch,
            const std::vector<int>& labels) {
  Matrix logits = net.Logits(batch);
  double total = 0.0;
  for (int b = 0; b < logits.rows(); ++b) {
    double m = logits.row(b).maxCoeff();
    double sum = 0.0;
    for (int c = 0; c < logits.cols(); ++c) sum += std::exp(logits(b, c) - m);
    total += -(logits(b, labels[b]) - m - std::log(sum));
  }
  return total / logits.rows();
}

class GradientCheck : public ::testing::TestWithParam<Arch> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
  Network net = MakeNet(GetParam(), 3);
  std::vector<TokenIds> seqs = Sequences();
  IdBatch batch = MakeBatch(seqs, net.backbone()->min_steps());
  std::vector<int> labels = {0, 2, 1, 2};
  ParamList params = net.Parameters();
  ZeroGrad(params);
  double loss = net.AccumulateCrossEntropy(batch, labels, 1.0);
  EXPECT_NEAR(loss, Loss(net, batch, labels), 1e-5);

  std::mt19937_64 rng(5);
  const float h = 1e-3f;
  for (const ParamPtr& p : params) {
    std::vector<double> analytic, numeric;
    const Eigen::Index n = p->value.size();
    for (int sample = 0; sample < 12; ++sample) {
      Eigen::Index i = static_cast<Eigen::Index>(rng() % n);
      if (p->name.find("embedding") != std::string::npos &&
          i / p->value.cols() == Vocabulary::kPad) {
        continue;
      }
      float saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      double up = Loss(net, batch, labels);
      p->value.data()[i] = saved - h;
      double down = Loss(net, batch, labels);
      p->value.data()[i] = saved;
      analytic.push_back(p->grad.data()[i]);
      numeric.push_back((up - down) / (2.0 * h));
    }
    double diff = 0.0, norm = 0.0;
    for (size_t k = 0; k < analytic.size(); ++k) {
      diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
      norm += analytic[k] * analytic[k] + numeric[k] * numeric[k];
    }
    if (norm < 1e-14) continue;
    EXPECT_LT(std::sqrt(diff / norm), 2e-2) << p->name;
  }
}

TEST_P(GradientCheck, PadRowStaysZero) {
  Network net = MakeNet(GetParam(), 4);
  const ParamPtr& table = net.embedding().table();
  EXPECT_EQ(table->value.row(Vocabulary::kPad).norm(), 0.0f);
  std::vector<TokenIds> seqs = Sequences();
  IdBatch batch = MakeBatch(seqs, net.backbone()->min_steps());
  ParamList params = net.Parameters();
  ZeroGrad(params);
  net.AccumulateCrossEntropy(batch, std::vector<int>{0, 1, 2, 0}, 1.0);
  EXPECT_EQ(table->grad.row(Vocabulary::kPad).norm(), 0.0f);
  AdaGradOptimizer opt(0.1f);
  opt.Step(params);
  EXPECT_EQ(table->value.row(Vocabulary::kPad).norm(), 0.0f);
}

TEST_P(GradientCheck, PaddingDoesNotChangeOutputs) {
  Network net = MakeNet(GetParam(), 6);
  std::vector<TokenIds> seqs = Sequences();
  const int min_steps = net.backbone()->min_steps();
  Matrix together = net.Logits(MakeBatch(seqs, min_steps));
  for (size_t i = 0; i < seqs.size(); ++i) {
    Matrix alone = net.Logits(MakeBatch({seqs[i]}, min_steps));
    for (int c = 0; c < alone.cols(); ++c) {
      EXPECT_NEAR(alone(0, c), together(static_cast<int>(i), c), 1e-5)
          << "sample " << i;
    }
  }
}

TEST_P(GradientCheck, CloneIsDeep) {
  Network net = MakeNet(GetParam(), 7);
  Network copy = net.Clone();
  ParamList a = net.Parameters(), b = copy.Parameters();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_NE(a[i].get(), b[i].get());
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_TRUE(a[i]->value == b[i]->value);
  }
  b[0]->value(3, 0) += 1.0f;
  EXPECT_NE(a[0]->value(3, 0), b[0]->value(3, 0));
}

INSTANTIATE_TEST_SUITE_P(Archs, GradientCheck,
                         ::testing::Values(Arch::kTextCnn, Arch::kGru,
                                           Arch::kBiLstm),
                         [](const auto& info) { return ArchName(info.param); });

TEST(SoftmaxTest, RowsSumToOneAndAreShiftInvariant) {
  Matrix logits(2, 3);
  logits << 1000.0f, 1001.0f, 999.0f, -3.0f, 0.0f, 2.0f;
  Matrix p = Softmax(logits);
  for (int r = 0; r < 2; ++r) EXPECT_NEAR(p.row(r).sum(), 1.0f, 1e-6);
  Matrix shifted = logits.array() - 1000.0f;
  EXPECT_TRUE(p.isApprox(Softmax(shifted), 1e-6f));
}

TEST(OptimizerTest, SgdAndAdaGradUpdates) {
  auto p = std::make_shared<Parameter>("w", 1, 2, false);
  p->value << 1.0f, -1.0f;
  p->grad << 0.5f, -2.0f;
  SgdOptimizer sgd(0.1f);
  sgd.Step({p});
  EXPECT_FLOAT_EQ(p->value(0, 0), 0.95f);
  EXPECT_FLOAT_EQ(p->value(0, 1), -0.8f);
  EXPECT_EQ(p->grad.norm(), 0.0f);

  // First AdaGrad step moves every coordinate by about lr.
  p->grad << 0.5f, -2.0f;
  AdaGradOptimizer ada(0.1f);
  ada.Step({p});
  EXPECT_NEAR(p->value(0, 0), 0.85f, 1e-6);
  EXPECT_NEAR(p->value(0, 1), -0.7f, 1e-6);
  // Second step with the same gradient: lr * g / sqrt(2 g^2).
  p->grad << 0.5f, -2.0f;
  ada.Step({p});
  EXPECT_NEAR(p->value(0, 0), 0.85f - 0.1f / std::sqrt(2.0f), 1e-6);
}

TEST(ArchTest, NamesRoundTrip) {
  for (Arch a : {Arch::kTextCnn, Arch::kGru, Arch::kBiLstm}) {
    EXPECT_EQ(ParseArch(ArchName(a)), a);
  }
  EXPECT_THROW(ParseArch("transformer"), Error);
}

}  // namespace
}  // namespace textmark
