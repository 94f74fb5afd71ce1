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

// Small CPU neural-network toolkit: parameters, layers with hand-written
// backward passes, sequence backbones and optimizers.
//
// Sequence activations are time-major: row t * batch + b holds position t of
// sample b. Samples are right-padded; padded positions carry mask 0 and the
// recurrent backbones leave their state untouched there.

#ifndef TEXTMARK_NN_H_
#define TEXTMARK_NN_H_

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "textmark/corpus.h"

namespace textmark {

using Matrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  Parameter(std::string n, int rows, int cols, bool is_bias)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        bias(is_bias) {}

  std::string name;
  Matrix value;
  Matrix grad;
  bool bias;
};

using ParamPtr = std::shared_ptr<Parameter>;
using ParamList = std::vector<ParamPtr>;

void ZeroGrad(const ParamList& params);
size_t CountScalars(const ParamList& params);

// Deep copies of `params` with identical names and values.
ParamList CloneParams(const ParamList& params);

// A batch of encoded sequences, truncated to the longest sample (and at least
// `min_steps` positions).
struct IdBatch {
  int batch = 0;
  int steps = 0;
  std::vector<int32_t> ids;  // time-major, steps * batch
  std::vector<int> lengths;

  static IdBatch Make(std::span<const TokenIds* const> sequences,
                      int min_steps);
  float mask(int t, int b) const { return t < lengths[b] ? 1.0f : 0.0f; }
};

class Embedding {
 public:
  Embedding(std::string name, int vocab_size, int dim, std::mt19937_64& rng);
  explicit Embedding(ParamPtr table) : table_(std::move(table)) {}

  // (steps * batch) x dim; PAD rows are zero.
  Matrix Forward(const IdBatch& batch) const;
  void Backward(const IdBatch& batch, const Matrix& grad_out);

  const ParamPtr& table() const { return table_; }
  int vocab_size() const { return static_cast<int>(table_->value.rows()); }
  int dim() const { return static_cast<int>(table_->value.cols()); }

 private:
  ParamPtr table_;
};

class Dense {
 public:
  Dense(std::string name, int in, int out, std::mt19937_64& rng);
  Dense(ParamPtr weight, ParamPtr bias)
      : weight_(std::move(weight)), bias_(std::move(bias)) {}

  Matrix Forward(const Matrix& x) const;
  // Accumulates parameter gradients and returns d(loss)/d(x).
  Matrix Backward(const Matrix& x, const Matrix& grad_out);

  const ParamPtr& weight() const { return weight_; }
  const ParamPtr& bias() const { return bias_; }
  int in_dim() const { return static_cast<int>(weight_->value.rows()); }
  int out_dim() const { return static_cast<int>(weight_->value.cols()); }

 private:
  ParamPtr weight_;  // in x out
  ParamPtr bias_;    // 1 x out
};

enum class Arch { kTextCnn, kGru, kBiLstm };

Arch ParseArch(std::string_view name);
std::string ArchName(Arch arch);

// Per-forward state a backbone needs for its backward pass.
struct BackboneTape {
  virtual ~BackboneTape() = default;
};

// Maps embedded sequences to one feature vector per sample.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual Arch arch() const = 0;
  virtual int input_dim() const = 0;
  virtual int feature_dim() const = 0;
  virtual int min_steps() const { return 1; }

  // `x` is (batch.steps * batch.batch) x input_dim. When `tape` is non-null it
  // receives what Backward needs.
  virtual Matrix Forward(const Matrix& x, const IdBatch& batch,
                         std::unique_ptr<BackboneTape>* tape) const = 0;
  // Accumulates parameter gradients; returns d(loss)/d(x).
  virtual Matrix Backward(const BackboneTape& tape,
                          const Matrix& grad_features) = 0;

  // Stable order; names are relative ("conv3.weight", "fwd.wx", ...).
  virtual ParamList Parameters() const = 0;
  virtual std::unique_ptr<Backbone> Clone() const = 0;
};

// Parallel 1-D convolutions over token embeddings followed by max-over-time
// pooling and ReLU.
class TextCnnBackbone : public Backbone {
 public:
  TextCnnBackbone(int input_dim, std::vector<int> widths, int filters,
                  std::mt19937_64& rng);

  Arch arch() const override { return Arch::kTextCnn; }
  int input_dim() const override { return input_dim_; }
  int feature_dim() const override {
    return static_cast<int>(widths_.size()) * filters_;
  }
  int min_steps() const override;
  Matrix Forward(const Matrix& x, const IdBatch& batch,
                 std::unique_ptr<BackboneTape>* tape) const override;
  Matrix Backward(const BackboneTape& tape,
                  const Matrix& grad_features) override;
  ParamList Parameters() const override;
  std::unique_ptr<Backbone> Clone() const override;

 private:
  TextCnnBackbone() = default;

  int input_dim_ = 0;
  int filters_ = 0;
  std::vector<int> widths_;
  std::vector<Dense> convs_;  // (width * input_dim) x filters each
};

// Single-layer GRU; the feature is the hidden state after the last real
// token.
class GruBackbone : public Backbone {
 public:
  GruBackbone(int input_dim, int hidden_dim, std::mt19937_64& rng);

  Arch arch() const override { return Arch::kGru; }
  int input_dim() const override { return input_dim_; }
  int feature_dim() const override { return hidden_; }
  Matrix Forward(const Matrix& x, const IdBatch& batch,
                 std::unique_ptr<BackboneTape>* tape) const override;
  Matrix Backward(const BackboneTape& tape,
                  const Matrix& grad_features) override;
  ParamList Parameters() const override;
  std::unique_ptr<Backbone> Clone() const override;

 private:
  GruBackbone() = default;

  int input_dim_ = 0;
  int hidden_ = 0;
  // Gate order r, z, n.
  ParamPtr wx_, wh_, bx_, bh_;
};

// Single-layer bidirectional LSTM; the feature concatenates the forward
// state after the last real token and the backward state after the first.
class BiLstmBackbone : public Backbone {
 public:
  BiLstmBackbone(int input_dim, int hidden_dim, std::mt19937_64& rng);

  Arch arch() const override { return Arch::kBiLstm; }
  int input_dim() const override { return input_dim_; }
  int feature_dim() const override { return 2 * hidden_; }
  Matrix Forward(const Matrix& x, const IdBatch& batch,
                 std::unique_ptr<BackboneTape>* tape) const override;
  Matrix Backward(const BackboneTape& tape,
                  const Matrix& grad_features) override;
  ParamList Parameters() const override;
  std::unique_ptr<Backbone> Clone() const override;

  struct Direction {
    ParamPtr wx, wh, b;  // gate order i, f, g, o
  };

 private:
  BiLstmBackbone() = default;

  int input_dim_ = 0;
  int hidden_ = 0;
  Direction fwd_, bwd_;
};

// Embedding -> backbone -> dense head with ReLU between head layers. The
// backbone is held by shared pointer so two networks can train one set of
// backbone parameters.
class Network {
 public:
  Network(Embedding embedding, std::shared_ptr<Backbone> backbone,
          std::vector<Dense> head);

  Matrix Logits(const IdBatch& batch) const;

  // Forward and backward of `scale` * mean cross-entropy over the batch.
  // Gradients are added to every parameter of this network. Returns the mean
  // cross-entropy.
  double AccumulateCrossEntropy(const IdBatch& batch,
                                std::span<const int> labels, double scale);

  Network Clone() const;  // deep copy, backbone included

  const Embedding& embedding() const { return embedding_; }
  const std::shared_ptr<Backbone>& backbone() const { return backbone_; }
  void set_backbone(std::shared_ptr<Backbone> backbone);
  std::vector<Dense>& head() { return head_; }
  const std::vector<Dense>& head() const { return head_; }
  int num_outputs() const { return head_.back().out_dim(); }

  ParamList EmbeddingParameters() const { return {embedding_.table()}; }
  ParamList BackboneParameters() const { return backbone_->Parameters(); }
  ParamList HeadParameters() const;
  ParamList Parameters() const;

 private:
  Embedding embedding_;
  std::shared_ptr<Backbone> backbone_;
  std::vector<Dense> head_;
};

// Row-wise numerically stable softmax.
Matrix Softmax(const Matrix& logits);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies the accumulated gradients of `params` and zeroes them.
  virtual void Step(const ParamList& params) = 0;
};

class SgdOptimizer : public Optimizer {
 public:
  explicit SgdOptimizer(float lr) : lr_(lr) {}
  void Step(const ParamList& params) override;

 private:
  float lr_;
};

class AdaGradOptimizer : public Optimizer {
 public:
  explicit AdaGradOptimizer(float lr, float eps = 1e-10f)
      : lr_(lr), eps_(eps) {}
  void Step(const ParamList& params) override;

 private:
  float lr_;
  float eps_;
  std::unordered_map<const Parameter*, Matrix> accum_;
};

}  // namespace textmark

#endif  // TEXTMARK_NN_H_
