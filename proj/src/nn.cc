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

#include <algorithm>
#include <cmath>

namespace textmark {

namespace {

void FillUniform(Matrix& m, float bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void FillNormal(Matrix& m, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

Matrix Sigmoid(const Matrix& x) {
  return (1.0f + (-x.array()).exp()).inverse().matrix();
}

Matrix Tanh(const Matrix& x) { return x.array().tanh().matrix(); }

// Rows [t * batch, (t + 1) * batch) of a time-major matrix.
auto StepRows(Matrix& m, int t, int batch) {
  return m.middleRows(static_cast<Eigen::Index>(t) * batch, batch);
}

Eigen::VectorXf MaskColumn(const IdBatch& batch, int t) {
  Eigen::VectorXf m(batch.batch);
  for (int b = 0; b < batch.batch; ++b) m(b) = batch.mask(t, b);
  return m;
}

}  // namespace

void ZeroGrad(const ParamList& params) {
  for (const ParamPtr& p : params) p->grad.setZero();
}

size_t CountScalars(const ParamList& params) {
  size_t n = 0;
  for (const ParamPtr& p : params) n += static_cast<size_t>(p->value.size());
  return n;
}

ParamList CloneParams(const ParamList& params) {
  ParamList out;
  out.reserve(params.size());
  for (const ParamPtr& p : params) out.push_back(std::make_shared<Parameter>(*p));
  return out;
}

IdBatch IdBatch::Make(std::span<const TokenIds* const> sequences,
                      int min_steps) {
  IdBatch out;
  out.batch = static_cast<int>(sequences.size());
  int longest = 1;
  for (const TokenIds* seq : sequences) {
    int len = EncodedLength(*seq);
    out.lengths.push_back(len);
    longest = std::max(longest, len);
  }
  out.steps = std::max(longest, min_steps);
  out.ids.assign(static_cast<size_t>(out.steps) * out.batch, Vocabulary::kPad);
  for (int b = 0; b < out.batch; ++b) {
    const TokenIds& seq = *sequences[b];
    int n = std::min(out.lengths[b], out.steps);
    for (int t = 0; t < n; ++t) {
      out.ids[static_cast<size_t>(t) * out.batch + b] = seq[t];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding / Dense

Embedding::Embedding(std::string name, int vocab_size, int dim,
                     std::mt19937_64& rng)
    : table_(std::make_shared<Parameter>(std::move(name), vocab_size, dim,
                                         false)) {
  FillNormal(table_->value, 1.0f, rng);
  table_->value.row(Vocabulary::kPad).setZero();
}

Matrix Embedding::Forward(const IdBatch& batch) const {
  Matrix out(batch.ids.size(), dim());
  for (size_t i = 0; i < batch.ids.size(); ++i) {
    int32_t id = batch.ids[i];
    if (id < 0 || id >= vocab_size()) {
      throw ShapeError("token id " + std::to_string(id) +
                       " outside embedding table of size " +
                       std::to_string(vocab_size()));
    }
    out.row(static_cast<Eigen::Index>(i)) = table_->value.row(id);
  }
  return out;
}

void Embedding::Backward(const IdBatch& batch, const Matrix& grad_out) {
  for (size_t i = 0; i < batch.ids.size(); ++i) {
    int32_t id = batch.ids[i];
    if (id == Vocabulary::kPad) continue;
    table_->grad.row(id) += grad_out.row(static_cast<Eigen::Index>(i));
  }
}

Dense::Dense(std::string name, int in, int out, std::mt19937_64& rng)
    : weight_(std::make_shared<Parameter>(name + ".weight", in, out, false)),
      bias_(std::make_shared<Parameter>(name + ".bias", 1, out, true)) {
  float bound = 1.0f / std::sqrt(static_cast<float>(in));
  FillUniform(weight_->value, bound, rng);
  FillUniform(bias_->value, bound, rng);
}

Matrix Dense::Forward(const Matrix& x) const {
  if (x.cols() != weight_->value.rows()) {
    throw ShapeError(weight_->name + ": input has " + std::to_string(x.cols()) +
                     " columns, expected " +
                     std::to_string(weight_->value.rows()));
  }
  Matrix y = x * weight_->value;
  y.rowwise() += bias_->value.row(0);
  return y;
}

Matrix Dense::Backward(const Matrix& x, const Matrix& grad_out) {
  weight_->grad.noalias() += x.transpose() * grad_out;
  bias_->grad.row(0) += grad_out.colwise().sum();
  return grad_out * weight_->value.transpose();
}

Arch ParseArch(std::string_view name) {
  if (name == "textcnn") return Arch::kTextCnn;
  if (name == "gru") return Arch::kGru;
  if (name == "bilstm") return Arch::kBiLstm;
  throw Error("unknown architecture '" + std::string(name) + "'");
}

std::string ArchName(Arch arch) {
  switch (arch) {
    case Arch::kTextCnn:
      return "textcnn";
    case Arch::kGru:
      return "gru";
    case Arch::kBiLstm:
      return "bilstm";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// TextCNN

namespace {

struct CnnTape : BackboneTape {
  int batch = 0;
  int steps = 0;
  std::vector<std::vector<int>> row_start;  // per width: first im2col row of b
  std::vector<Matrix> cols;                 // per width im2col
  std::vector<Matrix> pooled;               // per width, batch x filters
  std::vector<Eigen::MatrixXi> argmax;      // per width, batch x filters
};

}  // namespace

TextCnnBackbone::TextCnnBackbone(int input_dim, std::vector<int> widths,
                                 int filters, std::mt19937_64& rng)
    : input_dim_(input_dim), filters_(filters), widths_(std::move(widths)) {
  if (input_dim_ < 1 || filters_ < 1 || widths_.empty()) {
    throw Error("textcnn needs positive dims and at least one filter width");
  }
  for (int w : widths_) {
    convs_.emplace_back("conv" + std::to_string(w), w * input_dim_, filters_,
                        rng);
  }
}

int TextCnnBackbone::min_steps() const {
  return *std::max_element(widths_.begin(), widths_.end());
}

Matrix TextCnnBackbone::Forward(const Matrix& x, const IdBatch& batch,
                                std::unique_ptr<BackboneTape>* tape) const {
  const int bsz = batch.batch;
  auto out_tape = std::make_unique<CnnTape>();
  out_tape->batch = bsz;
  out_tape->steps = batch.steps;
  Matrix features(bsz, feature_dim());
  for (size_t wi = 0; wi < widths_.size(); ++wi) {
    const int k = widths_[wi];
    std::vector<int> start(bsz + 1, 0);
    for (int b = 0; b < bsz; ++b) {
      int positions = std::max(batch.lengths[b], k) - k + 1;
      start[b + 1] = start[b] + positions;
    }
    Matrix cols(start[bsz], k * input_dim_);
    for (int b = 0; b < bsz; ++b) {
      for (int p = 0; p < start[b + 1] - start[b]; ++p) {
        for (int j = 0; j < k; ++j) {
          cols.block(start[b] + p, j * input_dim_, 1, input_dim_) =
              x.row(static_cast<Eigen::Index>(p + j) * bsz + b);
        }
      }
    }
    Matrix conv = convs_[wi].Forward(cols);
    Matrix pooled(bsz, filters_);
    Eigen::MatrixXi argmax(bsz, filters_);
    for (int b = 0; b < bsz; ++b) {
      for (int f = 0; f < filters_; ++f) {
        int best = start[b];
        for (int r = start[b] + 1; r < start[b + 1]; ++r) {
          if (conv(r, f) > conv(best, f)) best = r;
        }
        pooled(b, f) = conv(best, f);
        argmax(b, f) = best;
      }
    }
    features.middleCols(static_cast<Eigen::Index>(wi) * filters_, filters_) =
        pooled.cwiseMax(0.0f);
    if (tape) {
      out_tape->row_start.push_back(std::move(start));
      out_tape->cols.push_back(std::move(cols));
      out_tape->pooled.push_back(std::move(pooled));
      out_tape->argmax.push_back(std::move(argmax));
    }
  }
  if (tape) *tape = std::move(out_tape);
  return features;
}

Matrix TextCnnBackbone::Backward(const BackboneTape& base,
                                 const Matrix& grad_features) {
  const auto& tape = static_cast<const CnnTape&>(base);
  const int bsz = tape.batch;
  Matrix dx = Matrix::Zero(static_cast<Eigen::Index>(tape.steps) * bsz,
                           input_dim_);
  for (size_t wi = 0; wi < widths_.size(); ++wi) {
    const int k = widths_[wi];
    const auto& start = tape.row_start[wi];
    Matrix dconv = Matrix::Zero(tape.cols[wi].rows(), filters_);
    for (int b = 0; b < bsz; ++b) {
      for (int f = 0; f < filters_; ++f) {
        if (tape.pooled[wi](b, f) <= 0.0f) continue;
        dconv(tape.argmax[wi](b, f), f) +=
            grad_features(b, static_cast<Eigen::Index>(wi) * filters_ + f);
      }
    }
    Matrix dcols = convs_[wi].Backward(tape.cols[wi], dconv);
    for (int b = 0; b < bsz; ++b) {
      for (int p = 0; p < start[b + 1] - start[b]; ++p) {
        for (int j = 0; j < k; ++j) {
          dx.row(static_cast<Eigen::Index>(p + j) * bsz + b) +=
              dcols.block(start[b] + p, j * input_dim_, 1, input_dim_);
        }
      }
    }
  }
  return dx;
}

ParamList TextCnnBackbone::Parameters() const {
  ParamList out;
  for (const Dense& conv : convs_) {
    out.push_back(conv.weight());
    out.push_back(conv.bias());
  }
  return out;
}

std::unique_ptr<Backbone> TextCnnBackbone::Clone() const {
  std::unique_ptr<TextCnnBackbone> copy(new TextCnnBackbone());
  copy->input_dim_ = input_dim_;
  copy->filters_ = filters_;
  copy->widths_ = widths_;
  for (const Dense& conv : convs_) {
    copy->convs_.emplace_back(std::make_shared<Parameter>(*conv.weight()),
                              std::make_shared<Parameter>(*conv.bias()));
  }
  return copy;
}

// ---------------------------------------------------------------------------
// GRU

namespace {

struct GruTape : BackboneTape {
  IdBatch shape;
  Matrix x;
  std::vector<Matrix> h_prev, r, z, n, hp_n;
};

}  // namespace

GruBackbone::GruBackbone(int input_dim, int hidden_dim, std::mt19937_64& rng)
    : input_dim_(input_dim), hidden_(hidden_dim) {
  if (input_dim_ < 1 || hidden_ < 1) throw Error("gru dims must be >= 1");
  float bound = 1.0f / std::sqrt(static_cast<float>(hidden_));
  wx_ = std::make_shared<Parameter>("wx", input_dim_, 3 * hidden_, false);
  wh_ = std::make_shared<Parameter>("wh", hidden_, 3 * hidden_, false);
  bx_ = std::make_shared<Parameter>("bx", 1, 3 * hidden_, true);
  bh_ = std::make_shared<Parameter>("bh", 1, 3 * hidden_, true);
  for (const ParamPtr& p : {wx_, wh_, bx_, bh_}) FillUniform(p->value, bound, rng);
}

Matrix GruBackbone::Forward(const Matrix& x, const IdBatch& batch,
                            std::unique_ptr<BackboneTape>* tape) const {
  const int bsz = batch.batch;
  const int H = hidden_;
  Matrix xi = x * wx_->value;
  xi.rowwise() += bx_->value.row(0);
  Matrix h = Matrix::Zero(bsz, H);
  auto out_tape = std::make_unique<GruTape>();
  for (int t = 0; t < batch.steps; ++t) {
    Matrix hp = h * wh_->value;
    hp.rowwise() += bh_->value.row(0);
    auto xt = StepRows(xi, t, bsz);
    Matrix r = Sigmoid(xt.leftCols(H) + hp.leftCols(H));
    Matrix z = Sigmoid(xt.middleCols(H, H) + hp.middleCols(H, H));
    Matrix hp_n = hp.rightCols(H);
    Matrix n = Tanh(xt.rightCols(H) + r.cwiseProduct(hp_n));
    Matrix h_new = (1.0f - z.array()) * n.array() + z.array() * h.array();
    Eigen::VectorXf m = MaskColumn(batch, t);
    Matrix h_next = m.asDiagonal() * h_new +
                    (1.0f - m.array()).matrix().asDiagonal() * h;
    if (tape) {
      out_tape->h_prev.push_back(std::move(h));
      out_tape->r.push_back(std::move(r));
      out_tape->z.push_back(std::move(z));
      out_tape->n.push_back(std::move(n));
      out_tape->hp_n.push_back(std::move(hp_n));
    }
    h = std::move(h_next);
  }
  if (tape) {
    out_tape->shape = batch;
    out_tape->x = x;
    *tape = std::move(out_tape);
  }
  return h;
}

Matrix GruBackbone::Backward(const BackboneTape& base,
                             const Matrix& grad_features) {
  const auto& tape = static_cast<const GruTape&>(base);
  const IdBatch& batch = tape.shape;
  const int bsz = batch.batch;
  const int H = hidden_;
  Matrix dxi(static_cast<Eigen::Index>(batch.steps) * bsz, 3 * H);
  Matrix dh = grad_features;
  Matrix dhp(bsz, 3 * H);
  for (int t = batch.steps - 1; t >= 0; --t) {
    Eigen::VectorXf m = MaskColumn(batch, t);
    Matrix dh_new = m.asDiagonal() * dh;
    Matrix dh_prev = (1.0f - m.array()).matrix().asDiagonal() * dh;
    const Matrix& z = tape.z[t];
    const Matrix& r = tape.r[t];
    const Matrix& n = tape.n[t];
    const Matrix& h_prev = tape.h_prev[t];
    Matrix dn = dh_new.cwiseProduct((1.0f - z.array()).matrix());
    Matrix dz = dh_new.cwiseProduct(h_prev - n);
    dh_prev += dh_new.cwiseProduct(z);
    Matrix dn_pre = dn.array() * (1.0f - n.array().square());
    Matrix dr = dn_pre.cwiseProduct(tape.hp_n[t]);
    Matrix dr_pre = dr.array() * r.array() * (1.0f - r.array());
    Matrix dz_pre = dz.array() * z.array() * (1.0f - z.array());
    auto dxt = StepRows(dxi, t, bsz);
    dxt.leftCols(H) = dr_pre;
    dxt.middleCols(H, H) = dz_pre;
    dxt.rightCols(H) = dn_pre;
    dhp.leftCols(H) = dr_pre;
    dhp.middleCols(H, H) = dz_pre;
    dhp.rightCols(H) = dn_pre.cwiseProduct(r);
    wh_->grad.noalias() += h_prev.transpose() * dhp;
    bh_->grad.row(0) += dhp.colwise().sum();
    dh_prev.noalias() += dhp * wh_->value.transpose();
    dh = std::move(dh_prev);
  }
  wx_->grad.noalias() += tape.x.transpose() * dxi;
  bx_->grad.row(0) += dxi.colwise().sum();
  return dxi * wx_->value.transpose();
}

ParamList GruBackbone::Parameters() const { return {wx_, wh_, bx_, bh_}; }

std::unique_ptr<Backbone> GruBackbone::Clone() const {
  std::unique_ptr<GruBackbone> copy(new GruBackbone());
  copy->input_dim_ = input_dim_;
  copy->hidden_ = hidden_;
  copy->wx_ = std::make_shared<Parameter>(*wx_);
  copy->wh_ = std::make_shared<Parameter>(*wh_);
  copy->bx_ = std::make_shared<Parameter>(*bx_);
  copy->bh_ = std::make_shared<Parameter>(*bh_);
  return copy;
}

// ---------------------------------------------------------------------------
// BiLSTM

namespace {

struct LstmDirectionTape {
  std::vector<int> order;  // time indices in processing order
  std::vector<Matrix> h_prev, c_prev, i, f, g, o, c_new;
};

struct BiLstmTape : BackboneTape {
  IdBatch shape;
  Matrix x;
  LstmDirectionTape fwd, bwd;
};

Matrix RunLstm(const BiLstmBackbone::Direction& dir, const Matrix& x,
               const IdBatch& batch, int H, bool reverse,
               LstmDirectionTape* tape) {
  const int bsz = batch.batch;
  Matrix xi = x * dir.wx->value;
  xi.rowwise() += dir.b->value.row(0);
  Matrix h = Matrix::Zero(bsz, H);
  Matrix c = Matrix::Zero(bsz, H);
  for (int s = 0; s < batch.steps; ++s) {
    int t = reverse ? batch.steps - 1 - s : s;
    Matrix pre = StepRows(xi, t, bsz);
    pre.noalias() += h * dir.wh->value;
    Matrix i = Sigmoid(pre.leftCols(H));
    Matrix f = Sigmoid(pre.middleCols(H, H));
    Matrix g = Tanh(pre.middleCols(2 * H, H));
    Matrix o = Sigmoid(pre.rightCols(H));
    Matrix c_new = f.cwiseProduct(c) + i.cwiseProduct(g);
    Matrix h_new = o.cwiseProduct(Tanh(c_new));
    Eigen::VectorXf m = MaskColumn(batch, t);
    Eigen::VectorXf keep = 1.0f - m.array();
    Matrix c_next = m.asDiagonal() * c_new + keep.asDiagonal() * c;
    Matrix h_next = m.asDiagonal() * h_new + keep.asDiagonal() * h;
    if (tape) {
      tape->order.push_back(t);
      tape->h_prev.push_back(std::move(h));
      tape->c_prev.push_back(std::move(c));
      tape->i.push_back(std::move(i));
      tape->f.push_back(std::move(f));
      tape->g.push_back(std::move(g));
      tape->o.push_back(std::move(o));
      tape->c_new.push_back(std::move(c_new));
    }
    h = std::move(h_next);
    c = std::move(c_next);
  }
  return h;
}

// Adds the input gradient of one direction into `dx`.
void BackpropLstm(BiLstmBackbone::Direction& dir, const Matrix& x,
                  const IdBatch& batch, int H, const LstmDirectionTape& tape,
                  Matrix dh, Matrix& dx) {
  const int bsz = batch.batch;
  Matrix dc = Matrix::Zero(bsz, H);
  Matrix dxi(static_cast<Eigen::Index>(batch.steps) * bsz, 4 * H);
  Matrix dpre(bsz, 4 * H);
  for (int s = static_cast<int>(tape.order.size()) - 1; s >= 0; --s) {
    int t = tape.order[s];
    Eigen::VectorXf m = MaskColumn(batch, t);
    Eigen::VectorXf keep = 1.0f - m.array();
    Matrix dh_new = m.asDiagonal() * dh;
    Matrix dc_new = m.asDiagonal() * dc;
    Matrix dh_prev = keep.asDiagonal() * dh;
    Matrix dc_prev = keep.asDiagonal() * dc;
    const Matrix& i = tape.i[s];
    const Matrix& f = tape.f[s];
    const Matrix& g = tape.g[s];
    const Matrix& o = tape.o[s];
    Matrix tc = Tanh(tape.c_new[s]);
    Matrix d_o = dh_new.cwiseProduct(tc);
    dc_new.array() += dh_new.array() * o.array() * (1.0f - tc.array().square());
    Matrix d_i = dc_new.cwiseProduct(g);
    Matrix d_g = dc_new.cwiseProduct(i);
    Matrix d_f = dc_new.cwiseProduct(tape.c_prev[s]);
    dc_prev += dc_new.cwiseProduct(f);
    dpre.leftCols(H) = d_i.array() * i.array() * (1.0f - i.array());
    dpre.middleCols(H, H) = d_f.array() * f.array() * (1.0f - f.array());
    dpre.middleCols(2 * H, H) = d_g.array() * (1.0f - g.array().square());
    dpre.rightCols(H) = d_o.array() * o.array() * (1.0f - o.array());
    StepRows(dxi, t, bsz) = dpre;
    dir.wh->grad.noalias() += tape.h_prev[s].transpose() * dpre;
    dh_prev.noalias() += dpre * dir.wh->value.transpose();
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
  dir.wx->grad.noalias() += x.transpose() * dxi;
  dir.b->grad.row(0) += dxi.colwise().sum();
  dx.noalias() += dxi * dir.wx->value.transpose();
}

BiLstmBackbone::Direction MakeDirection(const std::string& prefix, int in,
                                        int H, std::mt19937_64& rng) {
  BiLstmBackbone::Direction d;
  d.wx = std::make_shared<Parameter>(prefix + ".wx", in, 4 * H, false);
  d.wh = std::make_shared<Parameter>(prefix + ".wh", H, 4 * H, false);
  d.b = std::make_shared<Parameter>(prefix + ".b", 1, 4 * H, true);
  float bound = 1.0f / std::sqrt(static_cast<float>(H));
  for (const ParamPtr& p : {d.wx, d.wh, d.b}) FillUniform(p->value, bound, rng);
  return d;
}

BiLstmBackbone::Direction CopyDirection(const BiLstmBackbone::Direction& d) {
  return {std::make_shared<Parameter>(*d.wx), std::make_shared<Parameter>(*d.wh),
          std::make_shared<Parameter>(*d.b)};
}

}  // namespace

BiLstmBackbone::BiLstmBackbone(int input_dim, int hidden_dim,
                               std::mt19937_64& rng)
    : input_dim_(input_dim), hidden_(hidden_dim) {
  if (input_dim_ < 1 || hidden_ < 1) throw Error("bilstm dims must be >= 1");
  fwd_ = MakeDirection("fwd", input_dim_, hidden_, rng);
  bwd_ = MakeDirection("bwd", input_dim_, hidden_, rng);
}

Matrix BiLstmBackbone::Forward(const Matrix& x, const IdBatch& batch,
                               std::unique_ptr<BackboneTape>* tape) const {
  std::unique_ptr<BiLstmTape> out_tape;
  if (tape) out_tape = std::make_unique<BiLstmTape>();
  Matrix hf = RunLstm(fwd_, x, batch, hidden_, false,
                      tape ? &out_tape->fwd : nullptr);
  Matrix hb = RunLstm(bwd_, x, batch, hidden_, true,
                      tape ? &out_tape->bwd : nullptr);
  Matrix features(batch.batch, 2 * hidden_);
  features.leftCols(hidden_) = hf;
  features.rightCols(hidden_) = hb;
  if (tape) {
    out_tape->shape = batch;
    out_tape->x = x;
    *tape = std::move(out_tape);
  }
  return features;
}

Matrix BiLstmBackbone::Backward(const BackboneTape& base,
                                const Matrix& grad_features) {
  const auto& tape = static_cast<const BiLstmTape&>(base);
  Matrix dx = Matrix::Zero(tape.x.rows(), input_dim_);
  BackpropLstm(fwd_, tape.x, tape.shape, hidden_, tape.fwd,
               grad_features.leftCols(hidden_), dx);
  BackpropLstm(bwd_, tape.x, tape.shape, hidden_, tape.bwd,
               grad_features.rightCols(hidden_), dx);
  return dx;
}

ParamList BiLstmBackbone::Parameters() const {
  return {fwd_.wx, fwd_.wh, fwd_.b, bwd_.wx, bwd_.wh, bwd_.b};
}

std::unique_ptr<Backbone> BiLstmBackbone::Clone() const {
  std::unique_ptr<BiLstmBackbone> copy(new BiLstmBackbone());
  copy->input_dim_ = input_dim_;
  copy->hidden_ = hidden_;
  copy->fwd_ = CopyDirection(fwd_);
  copy->bwd_ = CopyDirection(bwd_);
  return copy;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(Embedding embedding, std::shared_ptr<Backbone> backbone,
                 std::vector<Dense> head)
    : embedding_(std::move(embedding)),
      backbone_(std::move(backbone)),
      head_(std::move(head)) {
  if (head_.empty()) throw Error("network head needs at least one layer");
  if (embedding_.dim() != backbone_->input_dim()) {
    throw ShapeError("embedding dim " + std::to_string(embedding_.dim()) +
                     " does not match backbone input dim " +
                     std::to_string(backbone_->input_dim()));
  }
  int dim = backbone_->feature_dim();
  for (const Dense& layer : head_) {
    if (layer.in_dim() != dim) {
      throw ShapeError(layer.weight()->name + " expects " +
                       std::to_string(layer.in_dim()) + " inputs, got " +
                       std::to_string(dim));
    }
    dim = layer.out_dim();
  }
}

void Network::set_backbone(std::shared_ptr<Backbone> backbone) {
  if (backbone->input_dim() != backbone_->input_dim() ||
      backbone->feature_dim() != backbone_->feature_dim()) {
    throw ShapeError("replacement backbone has different dimensions");
  }
  backbone_ = std::move(backbone);
}

Matrix Network::Logits(const IdBatch& batch) const {
  Matrix x = embedding_.Forward(batch);
  Matrix h = backbone_->Forward(x, batch, nullptr);
  for (size_t i = 0; i < head_.size(); ++i) {
    h = head_[i].Forward(h);
    if (i + 1 < head_.size()) h = h.cwiseMax(0.0f);
  }
  return h;
}

double Network::AccumulateCrossEntropy(const IdBatch& batch,
                                       std::span<const int> labels,
                                       double scale) {
  if (static_cast<int>(labels.size()) != batch.batch) {
    throw ShapeError("label count does not match batch size");
  }
  Matrix x = embedding_.Forward(batch);
  std::unique_ptr<BackboneTape> tape;
  Matrix features = backbone_->Forward(x, batch, &tape);
  std::vector<Matrix> inputs;
  Matrix h = features;
  for (size_t i = 0; i < head_.size(); ++i) {
    inputs.push_back(h);
    h = head_[i].Forward(h);
    if (i + 1 < head_.size()) h = h.cwiseMax(0.0f);
  }
  Matrix probs = Softmax(h);
  double loss = 0.0;
  Matrix grad = probs;
  for (int b = 0; b < batch.batch; ++b) {
    int y = labels[b];
    if (y < 0 || y >= probs.cols()) throw Error("label out of range");
    // log-softmax computed from logits for stability.
    double max_logit = h.row(b).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < h.cols(); ++c) {
      sum += std::exp(static_cast<double>(h(b, c)) - max_logit);
    }
    loss += -(static_cast<double>(h(b, y)) - max_logit - std::log(sum));
    grad(b, y) -= 1.0f;
  }
  loss /= batch.batch;
  grad *= static_cast<float>(scale / batch.batch);
  for (int i = static_cast<int>(head_.size()) - 1; i >= 0; --i) {
    if (i + 1 < static_cast<int>(head_.size())) {
      // ReLU after layer i: its output is inputs[i + 1].
      grad = grad.cwiseProduct(
          (inputs[i + 1].array() > 0.0f).cast<float>().matrix());
    }
    grad = head_[i].Backward(inputs[i], grad);
  }
  Matrix dx = backbone_->Backward(*tape, grad);
  embedding_.Backward(batch, dx);
  return loss;
}

Network Network::Clone() const {
  Embedding emb(std::make_shared<Parameter>(*embedding_.table()));
  std::vector<Dense> head;
  for (const Dense& layer : head_) {
    head.emplace_back(std::make_shared<Parameter>(*layer.weight()),
                      std::make_shared<Parameter>(*layer.bias()));
  }
  return Network(std::move(emb), std::shared_ptr<Backbone>(backbone_->Clone()),
                 std::move(head));
}

ParamList Network::HeadParameters() const {
  ParamList out;
  for (const Dense& layer : head_) {
    out.push_back(layer.weight());
    out.push_back(layer.bias());
  }
  return out;
}

ParamList Network::Parameters() const {
  ParamList out = EmbeddingParameters();
  for (const ParamPtr& p : BackboneParameters()) out.push_back(p);
  for (const ParamPtr& p : HeadParameters()) out.push_back(p);
  return out;
}

Matrix Softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    float m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers

void SgdOptimizer::Step(const ParamList& params) {
  for (const ParamPtr& p : params) {
    p->value -= lr_ * p->grad;
    p->grad.setZero();
  }
}

void AdaGradOptimizer::Step(const ParamList& params) {
  for (const ParamPtr& p : params) {
    Matrix& acc = accum_[p.get()];
    if (acc.size() == 0) acc = Matrix::Zero(p->value.rows(), p->value.cols());
    acc.array() += p->grad.array().square();
    p->value.array() -= lr_ * p->grad.array() / (acc.array().sqrt() + eps_);
    p->grad.setZero();
  }
}

}  // namespace textmark
